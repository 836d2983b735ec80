"""Softmax probes over fixed representation features.

A probe is either logistic (hidden_dim=0) or has one rectified hidden
layer. Training is plain mini-batch gradient descent on cross-entropy;
everything is driven by numpy and is bit-reproducible for a fixed seed.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..errors import ContractError, DataError
from ..rng import substream


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    epochs: int = 40
    batch_size: int = 32
    hidden_dim: int = 256  # 0 = linear probe
    seed: int = 0

    def __post_init__(self) -> None:
        if self.learning_rate <= 0 or self.epochs < 1 or self.batch_size < 1:
            raise ContractError(f"bad training config: {self}")
        if self.hidden_dim < 0:
            raise ContractError("hidden_dim must be >= 0")

    def linear(self) -> "TrainConfig":
        return replace(self, hidden_dim=0)


@dataclass(frozen=True)
class ProbeDataset:
    """Feature matrix with integer labels in [0, num_classes)."""

    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    label_names: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        feats = np.ascontiguousarray(np.asarray(self.features, dtype=np.float64))
        labels = np.asarray(self.labels, dtype=np.int64)
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labels)
        if feats.ndim != 2 or feats.shape[0] != labels.shape[0] or labels.ndim != 1:
            raise ContractError(
                f"features {feats.shape} and labels {labels.shape} do not align"
            )
        if feats.shape[0] < 1:
            raise ContractError("dataset is empty")
        if not np.all(np.isfinite(feats)):
            raise ContractError("features must be finite")
        if self.num_classes < 2:
            raise ContractError("need at least 2 classes")
        if labels.min() < 0 or labels.max() >= self.num_classes:
            raise ContractError(
                f"labels outside [0, {self.num_classes}): "
                f"[{labels.min()}, {labels.max()}]"
            )
        if self.label_names is not None and len(self.label_names) != self.num_classes:
            raise ContractError("label_names length must equal num_classes")

    def __len__(self) -> int:
        return int(self.features.shape[0])

    @property
    def feature_dim(self) -> int:
        return int(self.features.shape[1])

    def subset(self, indices: np.ndarray) -> "ProbeDataset":
        return ProbeDataset(
            self.features[indices], self.labels[indices],
            self.num_classes, self.label_names,
        )


@dataclass(frozen=True)
class ClassifierProbe:
    """Fitted probe weights. hidden weights are empty for linear probes."""

    input_dim: int
    hidden_dim: int
    num_classes: int
    w_hidden: np.ndarray  # (hidden_dim, input_dim), possibly 0-row
    b_hidden: np.ndarray  # (hidden_dim,)
    w_out: np.ndarray  # (num_classes, hidden_dim or input_dim)
    b_out: np.ndarray  # (num_classes,)
    config: TrainConfig
    final_loss: float = float("nan")
    label_names: tuple[str, ...] | None = None

    def logits(self, features: np.ndarray) -> np.ndarray:
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2 or features.shape[1] != self.input_dim:
            raise ContractError(
                f"features shape {features.shape}, expected (n, {self.input_dim})"
            )
        if self.hidden_dim:
            hidden = np.maximum(features @ self.w_hidden.T + self.b_hidden, 0.0)
            return hidden @ self.w_out.T + self.b_out
        return features @ self.w_out.T + self.b_out

    def predict(self, features: np.ndarray) -> np.ndarray:
        """Class indices; ties resolve to the lowest class index."""
        return np.argmax(self.logits(features), axis=1)


def _softmax_loss_and_grad(logits: np.ndarray, labels: np.ndarray):
    # divergence shows up as non-finite loss, reported by the caller
    with np.errstate(over="ignore", invalid="ignore"):
        shifted = logits - logits.max(axis=1, keepdims=True)
        exp = np.exp(shifted)
        probs = exp / exp.sum(axis=1, keepdims=True)
        n = len(labels)
        eps_floor = np.maximum(probs[np.arange(n), labels], 1e-300)
        loss = float(-np.mean(np.log(eps_floor)))
        grad = probs
        grad[np.arange(n), labels] -= 1.0
        return loss, grad / n


def train_classifier(
    dataset: ProbeDataset,
    config: TrainConfig | None = None,
    rng: np.random.Generator | None = None,
) -> ClassifierProbe:
    """Fit a softmax probe by mini-batch gradient descent."""
    config = config or TrainConfig()
    if rng is None:
        rng = substream(config.seed, "classifier-train")
    if len(np.unique(dataset.labels)) < 2:
        raise ContractError("training labels contain fewer than 2 classes")

    d, h, c = dataset.feature_dim, config.hidden_dim, dataset.num_classes
    # Random hidden weights break symmetry; a zero output layer starts the
    # probe at uniform predictions instead of an arbitrary decision boundary.
    w_hidden = rng.standard_normal((h, d)) / np.sqrt(d) if h else np.zeros((0, d))
    b_hidden = np.zeros(h)
    w_out = np.zeros((c, h or d))
    b_out = np.zeros(c)

    n = len(dataset)
    loss = float("nan")
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(config.epochs):
            order = rng.permutation(n)
            for start in range(0, n, config.batch_size):
                idx = order[start : start + config.batch_size]
                x, y = dataset.features[idx], dataset.labels[idx]
                if h:
                    pre = x @ w_hidden.T + b_hidden
                    act = np.maximum(pre, 0.0)
                    logits = act @ w_out.T + b_out
                else:
                    act = x
                    logits = x @ w_out.T + b_out
                loss, dlogits = _softmax_loss_and_grad(logits, y)
                if not np.isfinite(loss):
                    raise DataError(
                        "training loss diverged (NaN/Inf); lower the learning rate"
                    )
                gw_out = dlogits.T @ act
                gb_out = dlogits.sum(axis=0)
                if h:
                    dact = (dlogits @ w_out) * (pre > 0.0)
                    w_hidden = w_hidden - config.learning_rate * (dact.T @ x)
                    b_hidden = b_hidden - config.learning_rate * dact.sum(axis=0)
                w_out = w_out - config.learning_rate * gw_out
                b_out = b_out - config.learning_rate * gb_out

    return ClassifierProbe(
        input_dim=d,
        hidden_dim=h,
        num_classes=c,
        w_hidden=w_hidden,
        b_hidden=b_hidden,
        w_out=w_out,
        b_out=b_out,
        config=config,
        final_loss=loss,
        label_names=dataset.label_names,
    )


def eval_classifier(probe: ClassifierProbe, dataset: ProbeDataset) -> dict[str, float]:
    """Accuracy and micro-averaged F1 from pooled per-class counts."""
    pred = probe.predict(dataset.features)
    gold = dataset.labels
    accuracy = float(np.mean(pred == gold))
    tp = fp = fn = 0
    for cls in range(dataset.num_classes):
        tp += int(np.sum((pred == cls) & (gold == cls)))
        fp += int(np.sum((pred == cls) & (gold != cls)))
        fn += int(np.sum((pred != cls) & (gold == cls)))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    micro_f1 = (
        2 * precision * recall / (precision + recall) if precision + recall else 0.0
    )
    return {"accuracy": accuracy, "micro_f1": float(micro_f1)}


def split_dataset(
    dataset: ProbeDataset, train_fraction: float, rng: np.random.Generator
) -> tuple[ProbeDataset, ProbeDataset]:
    """Stratified shuffle split; every class keeps its proportion."""
    if not 0.0 < train_fraction < 1.0:
        raise ContractError(f"train_fraction must be in (0,1), got {train_fraction}")
    train_idx: list[np.ndarray] = []
    test_idx: list[np.ndarray] = []
    for cls in range(dataset.num_classes):
        members = np.flatnonzero(dataset.labels == cls)
        members = members[rng.permutation(len(members))]
        cut = int(round(train_fraction * len(members)))
        cut = min(max(cut, 1), len(members) - 1) if len(members) >= 2 else cut
        train_idx.append(members[:cut])
        test_idx.append(members[cut:])
    train = np.sort(np.concatenate(train_idx))
    test = np.sort(np.concatenate(test_idx))
    if len(train) == 0 or len(test) == 0:
        raise DataError("split produced an empty side; dataset too small")
    return dataset.subset(train), dataset.subset(test)


def shuffle_labels(dataset: ProbeDataset, rng: np.random.Generator) -> ProbeDataset:
    """Control task: same features, labels randomly permuted."""
    return ProbeDataset(
        dataset.features,
        dataset.labels[rng.permutation(len(dataset))],
        dataset.num_classes,
        dataset.label_names,
    )
