import numpy as np
import pytest

from privascope.errors import FormatError
from privascope.probes import (
    ProbeDataset,
    StructuralProbeModel,
    TrainConfig,
    load_probe,
    save_probe,
    train_classifier,
)


def test_structural_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    m = StructuralProbeModel(
        b=rng.standard_normal((3, 5)), rank=3, layer=2, kind="distance"
    )
    path = tmp_path / "probe.prbe"
    save_probe(m, path)
    back = load_probe(path)
    assert isinstance(back, StructuralProbeModel)
    assert back.kind == "distance" and back.layer == 2 and back.rank == 3
    # weights stored as float32
    assert np.array_equal(back.b, m.b.astype(np.float32).astype(np.float64))


def test_classifier_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    feats = rng.standard_normal((40, 4))
    labels = (feats[:, 0] > 0).astype(int)
    data = ProbeDataset(feats, labels, 2, label_names=("neg", "pos"))
    probe = train_classifier(data, TrainConfig(hidden_dim=8, epochs=5, seed=3))
    path = tmp_path / "clf.prbe"
    save_probe(probe, path)
    back = load_probe(path)
    assert back.label_names == ("neg", "pos")
    assert back.config == probe.config
    assert back.hidden_dim == 8
    # float32 rounding shifts logits a little, predictions should agree
    assert np.array_equal(back.predict(feats), probe.predict(feats))


def test_linear_classifier_round_trip(tmp_path):
    rng = np.random.default_rng(2)
    feats = rng.standard_normal((30, 3))
    labels = rng.integers(0, 3, 30)
    labels[:3] = [0, 1, 2]
    data = ProbeDataset(feats, labels, 3)
    probe = train_classifier(data, TrainConfig(hidden_dim=0, epochs=3))
    path = tmp_path / "lin.prbe"
    save_probe(probe, path)
    back = load_probe(path)
    assert back.hidden_dim == 0
    assert back.w_hidden.shape == (0, 3)
    assert np.allclose(back.logits(feats), probe.logits(feats), atol=1e-5)


def test_bad_magic(tmp_path):
    path = tmp_path / "junk.prbe"
    path.write_bytes(b"NOPE" + b"\0" * 30)
    with pytest.raises(FormatError, match="magic"):
        load_probe(path)


def test_truncation(tmp_path):
    rng = np.random.default_rng(3)
    m = StructuralProbeModel(
        b=rng.standard_normal((2, 4)), rank=2, layer=0, kind="depth"
    )
    path = tmp_path / "t.prbe"
    save_probe(m, path)
    data = path.read_bytes()
    path.write_bytes(data[:-6])
    with pytest.raises(FormatError, match="truncated"):
        load_probe(path)
