"""Command-line front end: corpus in, activation dump plus manifest out."""

from __future__ import annotations

import argparse
import sys

from .extract import ExtractionManifest, extract


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="actv-extract",
        description="Dump transformer hidden states (and optionally "
        "attentions) for a sentence-per-line corpus.",
    )
    parser.add_argument("--model", required=True, help="model name or directory")
    parser.add_argument("--corpus", required=True, help="text file, one sentence per line")
    parser.add_argument("--out", required=True, help="activation dump to write")
    parser.add_argument(
        "--max-sentences", type=int, default=None,
        help="stop after this many stored sentences",
    )
    parser.add_argument(
        "--max-length", type=int, default=128,
        help="skip sentences longer than this in subword tokens (default 128)",
    )
    parser.add_argument(
        "--attentions", action="store_true",
        help="store attention tensors alongside activations",
    )
    parser.add_argument(
        "--manifest-out", default=None,
        help="manifest JSON path (default: <out>.manifest.json)",
    )
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        manifest = ExtractionManifest(
            model=args.model,
            corpus=args.corpus,
            max_sentences=args.max_sentences,
            max_length=args.max_length,
            attentions=args.attentions,
        )
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        result = extract(manifest, args.out, args.manifest_out)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    print(
        f"wrote {result['sentences']} sentences "
        f"({result['layers']} layers, {result['heads']} heads) to {args.out}; "
        f"skipped {result['skipped_long']} long, "
        f"{result['skipped_alignment']} unalignable, "
        f"{result['skipped_blank']} blank"
    )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
