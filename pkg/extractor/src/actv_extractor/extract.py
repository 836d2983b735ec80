"""Run a transformer over a sentence-per-line corpus and dump its internals.

For every surviving sentence the dump stores the subword tokens, the
word strings, subword-to-word spans, all hidden-state planes (the
embedding output is layer 0), and optionally every attention tensor.
Layer 0 has no attention of its own, so when attentions are stored it
carries an identity plane per head; that keeps the layer axis aligned
across activations and attentions and every row stochastic.

Sequence-start/end marker tokens become single-token pseudo-words, so
the word spans always tile the token range. Their strings are listed in
the manifest (`special_tokens`) for downstream filtering.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch
from privascope.activations import ActivationDump, SentenceRecord, write_dump


@dataclass(frozen=True)
class ExtractionManifest:
    """What to extract. The emitted manifest JSON echoes these fields and
    adds the dump's header counts plus skip statistics."""

    model: str
    corpus: str
    max_sentences: int | None = None
    max_length: int = 128
    attentions: bool = False

    def __post_init__(self) -> None:
        if self.max_length < 2:
            raise ValueError("max_length must fit at least the marker tokens")
        if self.max_sentences is not None and self.max_sentences < 1:
            raise ValueError("max_sentences must be positive when given")


class AlignmentSkip(Exception):
    """Raised internally when one sentence's tokenization cannot be
    segmented into contiguous word spans; the sentence is skipped."""


def _load(manifest: ExtractionManifest):
    # imported lazily so --help stays fast and tests can stub paths
    import transformers

    transformers.logging.set_verbosity_error()
    try:
        transformers.logging.disable_progress_bar()
    except AttributeError:
        pass
    tokenizer = transformers.AutoTokenizer.from_pretrained(manifest.model)
    # eager attention regardless of whether attentions are stored, so the
    # activations do not depend on that flag
    model = transformers.AutoModel.from_pretrained(
        manifest.model, attn_implementation="eager"
    )
    model.eval()
    return tokenizer, model


def _word_segments(tokens, word_ids, offsets, sentence):
    """(words, spans) with marker tokens as single-token pseudo-words.

    Real word strings are sliced from the original sentence via the
    tokenizer's character offsets, so casing survives even when the
    model normalizes internally.
    """
    words: list[str] = []
    spans: list[tuple[int, int]] = []
    current = None  # (word_id, start_token, start_char, end_char)
    seen: set[int] = set()

    def flush():
        nonlocal current
        if current is None:
            return
        wid, start_tok, end_tok, start_char, end_char = current
        text = sentence[start_char:end_char]
        if not text:
            raise AlignmentSkip(f"word {wid} maps to an empty character span")
        words.append(text)
        spans.append((start_tok, end_tok))
        current = None

    for position, (token, wid) in enumerate(zip(tokens, word_ids)):
        if wid is None:
            flush()
            words.append(token)
            spans.append((position, position + 1))
            continue
        if current is not None and wid == current[0]:
            start_char = min(current[3], offsets[position][0])
            end_char = max(current[4], offsets[position][1])
            current = (wid, current[1], position + 1, start_char, end_char)
            continue
        flush()
        if wid in seen:
            raise AlignmentSkip(f"word {wid} split across non-adjacent tokens")
        seen.add(wid)
        current = (wid, position, position + 1, offsets[position][0], offsets[position][1])
    flush()
    return words, spans


def run_extraction(manifest: ExtractionManifest) -> tuple[ActivationDump, dict]:
    """Extract per the manifest; returns the dump and the result manifest."""
    torch.set_num_threads(1)  # BLAS reduction order must not vary between runs
    tokenizer, model = _load(manifest)

    lines = Path(manifest.corpus).read_text(encoding="utf-8").splitlines()
    records: list[SentenceRecord] = []
    skipped_long = skipped_alignment = skipped_blank = 0

    for line in lines:
        if manifest.max_sentences is not None and len(records) >= manifest.max_sentences:
            break
        sentence = line.rstrip("\n")
        if not sentence.strip():
            skipped_blank += 1
            continue

        encoded = tokenizer(sentence, return_offsets_mapping=True)
        input_ids = encoded["input_ids"]
        if len(input_ids) > manifest.max_length:
            skipped_long += 1
            continue
        tokens = tokenizer.convert_ids_to_tokens(input_ids)
        try:
            words, spans = _word_segments(
                tokens, encoded.word_ids(), encoded["offset_mapping"], sentence
            )
        except AlignmentSkip:
            skipped_alignment += 1
            continue

        with torch.no_grad():
            out = model(
                input_ids=torch.tensor([input_ids]),
                attention_mask=torch.ones(1, len(input_ids), dtype=torch.long),
                output_hidden_states=True,
                output_attentions=manifest.attentions,
            )
        activations = (
            torch.stack(out.hidden_states, dim=0)[:, 0].numpy().astype(np.float32)
        )
        attentions = None
        if manifest.attentions:
            t = len(input_ids)
            heads = out.attentions[0].shape[1]
            lexical = np.broadcast_to(np.eye(t, dtype=np.float32), (1, heads, t, t))
            upper = torch.stack(out.attentions, dim=0)[:, 0].numpy().astype(np.float32)
            attentions = np.concatenate([lexical, upper], axis=0)
        records.append(SentenceRecord(tokens, words, spans, activations, attentions))

    num_layers = model.config.num_hidden_layers + 1
    heads = model.config.num_attention_heads if manifest.attentions else 0
    dump = ActivationDump(num_layers, model.config.hidden_size, heads, records)

    result = dict(asdict(manifest))
    result.update(
        layers=dump.num_layers,
        hidden_dim=dump.hidden_dim,
        heads=dump.num_heads,
        sentences=len(dump.sentences),
        skipped_long=skipped_long,
        skipped_alignment=skipped_alignment,
        skipped_blank=skipped_blank,
        special_tokens=sorted(tokenizer.all_special_tokens),
        lowercase=bool(getattr(tokenizer, "do_lower_case", False)),
    )
    return dump, result


def extract(
    manifest: ExtractionManifest,
    out: str | Path,
    manifest_out: str | Path | None = None,
) -> dict:
    """Write the dump and its manifest JSON; returns the manifest dict."""
    dump, result = run_extraction(manifest)
    write_dump(dump, out)
    if manifest_out is None:
        manifest_out = str(out) + ".manifest.json"
    Path(manifest_out).write_text(
        json.dumps(result, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    return result
