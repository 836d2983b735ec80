"""Command-line front end for the toolkit.

Five subcommands expose the pipeline stages: `privatize` rewrites text
under the metric-DP mechanism, `rsa` compares two activation dumps layer
by layer, `probe` trains and scores diagnostic probes, `attention`
clusters attention heads in the plane, and `stats` reports substitution
histograms and the empirical privacy bound.

Reports are JSON with sorted keys; matrices and coordinates are CSV.
Every report embeds the resolved configuration, the toolkit version, and
a `generated_at` timestamp kept in its own field so that re-running a
command byte-reproduces everything else.  Exit codes: 0 success, 2
usage/config, 3 data/domain, 4 alignment.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .activations import read_dump
from .attention import (
    classical_mds,
    head_coordinates_csv,
    head_distance_matrix,
    head_scatter_svg,
)
from .embeddings import load_embeddings
from .errors import AlignmentError, ContractError, DataError, FormatError
from .privacy import (
    PrivatizationConfig,
    count_oov,
    privatize_text,
    substitution_stats,
    verify_dp_bound,
)
from .probes import (
    StructuralTrainConfig,
    TrainConfig,
    build_content_task,
    build_edge_features,
    build_length_task,
    build_order_task,
    eval_classifier,
    eval_depth_probe,
    eval_distance_probe,
    save_probe,
    shuffle_labels,
    split_dataset,
    train_classifier,
    train_depth_probe,
    train_distance_probe,
)
from .rng import substream
from .rsa import rsa_profile
from .treebank import read_conllu, read_span_tasks

CLASSIFIER_TASKS = ("length", "content", "order", "edge")
STRUCTURAL_TASKS = ("depth", "distance")


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _config_echo(args: argparse.Namespace) -> dict:
    return {
        key: value
        for key, value in vars(args).items()
        if key != "func" and not key.startswith("_")
    }


def _assemble(args: argparse.Namespace, payload: dict) -> dict:
    return {
        "config": _config_echo(args),
        "version": __version__,
        "generated_at": _now(),
        **payload,
    }


def _to_builtin(value):
    if isinstance(value, (np.floating, np.integer, np.bool_)):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"cannot serialize {type(value).__name__}")


def _flatten(value, prefix: str, rows: list[tuple[str, str]]) -> None:
    if isinstance(value, dict):
        for key in sorted(value):
            _flatten(value[key], f"{prefix}{key}.", rows)
    elif isinstance(value, (list, tuple)):
        for index, item in enumerate(value):
            _flatten(item, f"{prefix}{index}.", rows)
    else:
        rows.append((prefix[:-1], json.dumps(value, default=_to_builtin)))


def _render_report(report: dict, fmt: str) -> str:
    if fmt == "json":
        return json.dumps(report, sort_keys=True, indent=2, default=_to_builtin) + "\n"
    rows: list[tuple[str, str]] = []
    _flatten(report, "", rows)
    rows.sort()
    return "key,value\n" + "".join(f"{key},{value}\n" for key, value in rows)


def _emit(text: str, path: str | None) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _emit_report(args: argparse.Namespace, payload: dict, path: str | None) -> None:
    _emit(_render_report(_assemble(args, payload), args.format), path)


def _privacy_config(args: argparse.Namespace) -> PrivatizationConfig:
    return PrivatizationConfig(
        epsilon=None if args.identity else args.epsilon,
        seed=args.seed,
        lowercase=args.lowercase,
        passthrough_oov=not args.no_oov_passthrough,
    )


def cmd_privatize(args: argparse.Namespace) -> int:
    space = load_embeddings(args.embeddings, lowercase=args.lowercase)
    config = _privacy_config(args)
    lines = Path(args.input).read_text(encoding="utf-8").splitlines()
    per_line = [line.split() for line in lines]
    flat = [token for tokens in per_line for token in tokens]

    private = privatize_text(flat, space, config, threads=args.threads)

    rebuilt: list[str] = []
    cursor = 0
    for tokens in per_line:
        rebuilt.append(" ".join(private[cursor : cursor + len(tokens)]))
        cursor += len(tokens)
    text = "\n".join(rebuilt)
    if lines:
        text += "\n"
    Path(args.output).write_text(text, encoding="utf-8")

    changed = sum(1 for before, after in zip(flat, private) if before != after)
    payload = {
        "tokens": len(flat),
        "changed": changed,
        "oov": count_oov(flat, space, config),
        "epsilon": config.epsilon,
        "seed": args.seed,
    }
    sidecar = (
        json.dumps(_assemble(args, payload), sort_keys=True, indent=2, default=_to_builtin)
        + "\n"
    )
    Path(args.output + ".json").write_text(sidecar, encoding="utf-8")
    return 0


def cmd_rsa(args: argparse.Namespace) -> int:
    dump_a = read_dump(args.dump_a)
    dump_b = read_dump(args.dump_b)
    profile = rsa_profile(dump_a, dump_b)
    payload = {
        "profile": [
            {"layer": layer, "spearman": value} for layer, value in profile
        ],
        "sentences": len(dump_a),
    }
    _emit_report(args, payload, args.output)
    return 0


def _layer_range(selector: str, num_layers: int) -> list[int]:
    if selector == "all":
        return list(range(num_layers))
    try:
        layer = int(selector)
    except ValueError:
        raise ContractError(
            f"--layer must be an integer or 'all', got {selector!r}"
        ) from None
    if not 0 <= layer < num_layers:
        raise ContractError(f"layer {layer} out of range [0, {num_layers})")
    return [layer]


def _classifier_layer_report(args, dump, layer: int) -> dict:
    task_rng = substream(args.seed, "probe", args.task, layer)
    if args.task == "length":
        dataset = build_length_task(dump, layer, rng=task_rng)
    elif args.task == "content":
        dataset = build_content_task(dump, layer, rng=task_rng)
    elif args.task == "order":
        dataset = build_order_task(dump, layer, rng=task_rng)
    else:
        if args.spans is None:
            raise ContractError("--task edge requires --spans")
        dataset = build_edge_features(dump, layer, read_span_tasks(args.spans))

    if args.shuffle_labels:
        dataset = shuffle_labels(dataset, substream(args.seed, "shuffle", layer))

    if args.eval_on_train:
        train_set = eval_set = dataset
    else:
        train_set, eval_set = split_dataset(
            dataset, args.train_fraction, substream(args.seed, "split", layer)
        )

    config = TrainConfig(
        learning_rate=args.learning_rate if args.learning_rate is not None else 1e-3,
        epochs=args.epochs if args.epochs is not None else 40,
        batch_size=args.batch_size if args.batch_size is not None else 32,
        hidden_dim=0 if args.linear else args.hidden_dim,
        seed=args.seed,
    )
    probe = train_classifier(
        train_set, config, rng=substream(args.seed, "train", args.task, layer)
    )
    if args.probe_out:
        save_probe(probe, args.probe_out)
    metrics = eval_classifier(probe, eval_set)
    return {
        "layer": layer,
        "train_examples": len(train_set),
        "eval_examples": len(eval_set),
        **metrics,
    }


def _structural_layer_report(args, dump, trees, layer: int) -> dict:
    rank = args.rank if args.rank else dump.hidden_dim
    config = StructuralTrainConfig(
        learning_rate=args.learning_rate if args.learning_rate is not None else 0.02,
        epochs=args.epochs if args.epochs is not None else 60,
        batch_size=args.batch_size if args.batch_size is not None else 16,
        seed=args.seed,
    )
    if args.task == "depth":
        model = train_depth_probe(dump, layer, trees, rank, config)
        metrics = eval_depth_probe(model, dump, layer, trees)
    else:
        model = train_distance_probe(dump, layer, trees, rank, config)
        metrics = eval_distance_probe(
            model, dump, layer, trees, exclude_punct=not args.keep_punct
        )
    if args.probe_out:
        save_probe(model, args.probe_out)
    return {
        "layer": layer,
        "rank": rank,
        "final_loss": model.loss_history[-1] if model.loss_history else None,
        **metrics,
    }


def cmd_probe(args: argparse.Namespace) -> int:
    dump = read_dump(args.dump)
    layers = _layer_range(args.layer, dump.num_layers)
    if args.probe_out and len(layers) != 1:
        raise ContractError("--probe-out needs a single --layer, not 'all'")

    if args.task in STRUCTURAL_TASKS:
        if args.treebank is None:
            raise ContractError(f"--task {args.task} requires --treebank")
        result = read_conllu(args.treebank)
        trees = list(result)
        reports = [_structural_layer_report(args, dump, trees, l) for l in layers]
        payload = {
            "task": args.task,
            "layers": reports,
            "trees": len(trees),
            "trees_skipped": result.skipped,
        }
    else:
        reports = [_classifier_layer_report(args, dump, l) for l in layers]
        payload = {"task": args.task, "layers": reports}
    _emit_report(args, payload, args.output)
    return 0


def _load_distances_csv(path: str) -> np.ndarray:
    try:
        values = np.loadtxt(path, delimiter=",", ndmin=2)
    except ValueError as exc:
        raise FormatError(f"{path}: unparsable distance matrix ({exc})") from None
    return values


def cmd_attention(args: argparse.Namespace) -> int:
    if args.distances_csv is not None:
        values = _load_distances_csv(args.distances_csv)
        heads_per_layer = args.heads_per_layer
        if values.shape[0] % heads_per_layer:
            raise ContractError(
                f"{values.shape[0]} heads is not a multiple of "
                f"--heads-per-layer {heads_per_layer}"
            )
        distance_values = values
        corpus_tokens = None
        coords = classical_mds(values)
    else:
        dump = read_dump(args.dump)
        if dump.num_heads == 0:
            raise DataError("no attention stored in dump")
        matrix = head_distance_matrix(
            dump, sentence_mean=args.sentence_mean, threads=args.threads
        )
        heads_per_layer = matrix.heads_per_layer
        distance_values = matrix.values
        corpus_tokens = matrix.corpus_tokens
        coords = classical_mds(matrix)

    if args.distances_out:
        np.savetxt(args.distances_out, distance_values, delimiter=",", fmt="%.17g")
    if args.svg:
        Path(args.svg).write_text(
            head_scatter_svg(coords, heads_per_layer), encoding="utf-8"
        )

    if args.format == "json":
        payload = {
            "heads_per_layer": heads_per_layer,
            "corpus_tokens": corpus_tokens,
            "coordinates": [
                {
                    "head": index,
                    "layer": index // heads_per_layer,
                    "x": float(x),
                    "y": float(y),
                }
                for index, (x, y) in enumerate(coords)
            ],
        }
        _emit_report(args, payload, args.output)
    else:
        _emit(head_coordinates_csv(coords, heads_per_layer), args.output)
    return 0


def cmd_stats(args: argparse.Namespace) -> int:
    space = load_embeddings(args.embeddings, lowercase=args.lowercase)
    config = _privacy_config(args)
    if args.trials < 1:
        raise ContractError(f"--trials must be >= 1, got {args.trials}")

    words = args.words.split(",") if args.words else list(space.vocab)
    stats = []
    for word in words:
        result = substitution_stats(
            word, space, config, args.trials, threads=args.threads
        )
        entry = {
            "word": result.word,
            "self_probability": result.self_probability,
            "support_size": result.support_size,
            "trials": result.trials,
        }
        if args.histogram:
            entry["histogram"] = result.histogram
        stats.append(entry)

    payload: dict = {"stats": stats}
    if args.verify_bound:
        if config.identity:
            raise ContractError("--verify-bound requires --epsilon, not --identity")
        report = verify_dp_bound(
            space,
            config.epsilon,
            args.trials,
            args.slack,
            rng=substream(args.seed, "verify-dp-bound"),
            hit_floor=args.hit_floor,
            threads=args.threads,
        )
        bound = dataclasses.asdict(report)
        bound["worst_triple"] = (
            list(report.worst_triple) if report.worst_triple else None
        )
        payload["bound"] = bound
    _emit_report(args, payload, args.output)
    return 0


def _add_privacy_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--embeddings", required=True, help="embedding text file")
    mode = parser.add_mutually_exclusive_group(required=True)
    mode.add_argument("--epsilon", type=float, help="privacy budget")
    mode.add_argument(
        "--identity", action="store_true", help="identity mode (no noise)"
    )
    parser.add_argument(
        "--lowercase", action="store_true", help="case-fold vocabulary and input"
    )
    parser.add_argument(
        "--no-oov-passthrough",
        action="store_true",
        help="raise on out-of-vocabulary words instead of passing them through",
    )


def _add_shared_flags(parser: argparse.ArgumentParser, default_format: str) -> None:
    parser.add_argument("--seed", type=int, default=0, help="master random seed")
    parser.add_argument(
        "--threads", type=int, default=1, help="worker threads (output-invariant)"
    )
    parser.add_argument(
        "--format",
        choices=("json", "csv"),
        default=default_format,
        help="report format",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="privascope",
        description="Metric-DP text privatization and LM introspection toolkit.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    commands = parser.add_subparsers(dest="command", required=True)

    p = commands.add_parser(
        "privatize", help="rewrite text under the DP mechanism"
    )
    _add_shared_flags(p, "json")
    _add_privacy_flags(p)
    p.add_argument("--input", required=True, help="text file, one sentence per line")
    p.add_argument("--output", required=True, help="privatized text destination")
    p.set_defaults(func=cmd_privatize)

    p = commands.add_parser(
        "rsa", help="layer-wise similarity of two dumps"
    )
    _add_shared_flags(p, "json")
    p.add_argument("--dump-a", required=True, help="first activation dump")
    p.add_argument("--dump-b", required=True, help="second activation dump")
    p.add_argument("--output", help="report destination (default stdout)")
    p.set_defaults(func=cmd_rsa)

    p = commands.add_parser(
        "probe", help="train and score a diagnostic probe"
    )
    _add_shared_flags(p, "json")
    p.add_argument("--dump", required=True, help="activation dump")
    p.add_argument(
        "--task",
        required=True,
        choices=CLASSIFIER_TASKS + STRUCTURAL_TASKS,
        help="probing task",
    )
    p.add_argument("--layer", default="all", help="layer index or 'all'")
    p.add_argument("--treebank", help="CoNLL-U file (depth/distance tasks)")
    p.add_argument("--spans", help="JSON-lines span file (edge task)")
    p.add_argument("--rank", type=int, default=0, help="probe rank (0 = hidden dim)")
    p.add_argument("--epochs", type=int, help="training epochs")
    p.add_argument("--learning-rate", type=float, help="SGD step size")
    p.add_argument("--batch-size", type=int, help="minibatch size")
    p.add_argument("--hidden-dim", type=int, default=256, help="MLP hidden width")
    p.add_argument(
        "--linear", action="store_true", help="drop the hidden layer entirely"
    )
    p.add_argument(
        "--train-fraction", type=float, default=0.8, help="stratified train share"
    )
    p.add_argument(
        "--eval-on-train",
        action="store_true",
        help="score on the training set instead of holding data out",
    )
    p.add_argument(
        "--shuffle-labels",
        action="store_true",
        help="permute labels first (selectivity control; scores should hit chance)",
    )
    p.add_argument(
        "--keep-punct",
        action="store_true",
        help="keep PUNCT words in distance-probe scoring",
    )
    p.add_argument("--probe-out", help="save the trained probe (single layer only)")
    p.add_argument("--output", help="report destination (default stdout)")
    p.set_defaults(func=cmd_probe)

    p = commands.add_parser(
        "attention", help="cluster attention heads in 2-D"
    )
    _add_shared_flags(p, "csv")
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument("--dump", help="activation dump with attention")
    source.add_argument(
        "--distances-csv", help="precomputed square distance matrix (CSV)"
    )
    p.add_argument(
        "--heads-per-layer",
        type=int,
        default=1,
        help="layer grouping for --distances-csv input",
    )
    p.add_argument(
        "--sentence-mean",
        action="store_true",
        help="average divergences per sentence before pooling",
    )
    p.add_argument("--distances-out", help="write the distance matrix as CSV")
    p.add_argument("--svg", help="write a scatter plot SVG")
    p.add_argument("--output", help="coordinate destination (default stdout)")
    p.set_defaults(func=cmd_attention)

    p = commands.add_parser(
        "stats", help="substitution statistics and bound check"
    )
    _add_shared_flags(p, "json")
    _add_privacy_flags(p)
    p.add_argument("--words", help="comma-separated words (default: whole vocabulary)")
    p.add_argument(
        "--trials", type=int, default=10_000, help="Monte-Carlo samples per word"
    )
    p.add_argument(
        "--histogram", action="store_true", help="include full substitution histograms"
    )
    p.add_argument(
        "--verify-bound",
        action="store_true",
        help="empirically check the DP likelihood-ratio bound",
    )
    p.add_argument(
        "--slack", type=float, default=0.15, help="tolerated bound violation"
    )
    p.add_argument(
        "--hit-floor",
        type=int,
        default=100,
        help="minimum hits for a probability estimate to enter the bound check",
    )
    p.add_argument("--output", help="report destination (default stdout)")
    p.set_defaults(func=cmd_stats)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        if exc.code is None:
            return 0
        return exc.code if isinstance(exc.code, int) else 2
    try:
        return int(args.func(args))
    except ContractError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except AlignmentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except (FormatError, DataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
