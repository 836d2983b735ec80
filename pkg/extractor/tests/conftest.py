import pytest
import torch

from actv_extractor import ExtractionManifest, extract

VOCAB = [
    "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]",
    "the", "cat", "##s", "sat", "on", "mat", "a", "big", "dog", "ran",
    "quick", "##ly", "fox", "jump", "##ed", "over",
]

CORPUS = [
    "The cats sat on the mat",
    "A big dog ran",
    "the quick fox jumped over a mat",
    "a zorp sat on the dog",
]


@pytest.fixture(scope="session")
def model_dir(tmp_path_factory):
    """Tiny randomly initialized encoder plus a matching wordpiece
    tokenizer, saved as a loadable model directory."""
    from transformers import BertConfig, BertModel, BertTokenizerFast

    path = tmp_path_factory.mktemp("tiny-encoder")
    tokenizer = BertTokenizerFast(
        vocab={word: i for i, word in enumerate(VOCAB)}, do_lower_case=True
    )
    tokenizer.save_pretrained(path)
    torch.manual_seed(1234)
    config = BertConfig(
        vocab_size=len(VOCAB),
        hidden_size=16,
        num_hidden_layers=2,
        num_attention_heads=2,
        intermediate_size=32,
        max_position_embeddings=64,
    )
    BertModel(config).save_pretrained(path)
    return str(path)


@pytest.fixture(scope="session")
def corpus_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("corpus") / "sentences.txt"
    path.write_text("\n".join(CORPUS) + "\n", encoding="utf-8")
    return str(path)


@pytest.fixture(scope="session")
def extracted(model_dir, corpus_file, tmp_path_factory):
    """One full extraction with attentions, shared by read-only tests."""
    out = tmp_path_factory.mktemp("dump") / "corpus.actv"
    manifest = ExtractionManifest(
        model=model_dir, corpus=corpus_file, max_length=64, attentions=True
    )
    result = extract(manifest, out)
    return out, result
