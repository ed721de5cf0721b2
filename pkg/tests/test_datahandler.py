import pytest

from babelkit.errors import CorpusFormatError
from babelkit.handlers.datahandler import CorpusHandler, ScoreSidecarHandler, read_json, write_json, write_jsonl

from conftest import make_doc


def test_corpus_handler_skips_and_records_bad_lines(tmp_path):
    path = tmp_path / "corpus.jsonl"
    path.write_bytes(
        b'{"id": "a", "text": "bonjour", "lang": "fr"}\n'
        b"\n"
        b"\xff\xfe not utf-8\n"
        b'{"id": "b", "text": "hello", "lang": "klingon"}\n'
        b'{"id": "c", "text": "hello", "lang": "en", "source": "news"}\n'
    )
    handler = CorpusHandler(path)
    docs = handler.read()
    assert [d.id for d in docs] == ["a", "c"]
    assert [line for line, _ in handler.skipped] == [3, 4]
    assert docs[1].category == "news"


def test_corpus_handler_strict(tmp_path):
    path = tmp_path / "corpus.jsonl"
    path.write_text('{"id": "a", "text": "x", "lang": "en"}\n[1, 2]\n', encoding="utf-8")
    with pytest.raises(CorpusFormatError) as excinfo:
        CorpusHandler(path, strict=True).read()
    assert excinfo.value.line_number == 2


@pytest.mark.parametrize(
    "lines",
    [
        ['{"id": "a", "score": 1.5}'],
        ['{"score": 0.5}'],
        ['{"id": "a", "score": 0.5}', '{"id": "a", "score": 0.7}'],
        ["pas du json"],
    ],
)
def test_sidecar_is_always_strict(tmp_path, lines):
    path = tmp_path / "scores.jsonl"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    with pytest.raises(CorpusFormatError):
        ScoreSidecarHandler(path).read()


def test_writers_are_deterministic(tmp_path):
    docs = [make_doc("a", "héllo", score=0.5), make_doc("b", "x")]
    path = write_jsonl(tmp_path / "out.jsonl", docs)
    assert path.read_text(encoding="utf-8").splitlines() == [
        '{"id": "a", "lang": "en", "score": 0.5, "source": "web", "text": "héllo"}',
        '{"id": "b", "lang": "en", "source": "web", "text": "x"}',
    ]
    assert read_json(write_json(tmp_path / "sub" / "o.json", {"b": 1, "a": [1]})) == {"a": [1], "b": 1}
    assert list(tmp_path.joinpath("sub").iterdir()) == [tmp_path / "sub" / "o.json"]


def test_read_json_reports_bad_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{", encoding="utf-8")
    with pytest.raises(CorpusFormatError):
        read_json(path)
