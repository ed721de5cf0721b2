import json

import pytest

from babelkit.checkpoint_store import ModelConfig, save_checkpoint
from babelkit.corpus_filter import Document
from babelkit.reference_model import make_toy_checkpoint


@pytest.fixture
def toy_config() -> ModelConfig:
    return ModelConfig(
        num_layers=8,
        hidden_size=32,
        num_attention_heads=4,
        num_kv_heads=2,
        intermediate_size=64,
        vocab_size=64,
    )


@pytest.fixture
def toy_ckpt(toy_config):
    return make_toy_checkpoint(toy_config, seed=0)


@pytest.fixture
def toy_path(tmp_path, toy_ckpt):
    path = tmp_path / "toy.safetensors"
    save_checkpoint(toy_ckpt, path)
    return path


def make_doc(doc_id: str, text: str, lang: str = "en", **fields) -> Document:
    return Document(id=doc_id, text=text, lang=lang, **fields)


def write_corpus(path, records) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for record in records:
            if isinstance(record, Document):
                record = record.model_dump(exclude_none=True)
            handle.write(json.dumps(record, ensure_ascii=False) + "\n")
