from abc import ABC, abstractmethod
from pathlib import Path
from typing import Any, Iterable
from pydantic import ValidationError
import json
import logging
import os
import tempfile

from babelkit.corpus_filter import Document
from babelkit.errors import CorpusFormatError

logger = logging.getLogger(__name__)


# Classe abstraite
class DataHandler(ABC):
    def __init__(self, path: str | os.PathLike, strict: bool = False):
        self.path = Path(path)
        self.strict = strict
        self.skipped: list[tuple[int, str]] = []

    @abstractmethod
    def load(self) -> list[tuple[int, Any]]:
        """Charge les enregistrements bruts avec leur numéro de ligne"""
        pass

    @abstractmethod
    def clean(self, records: list[tuple[int, Any]]) -> Any:
        """Valide les enregistrements et retourne les objets du domaine"""
        pass

    def read(self) -> Any:
        return self.clean(self.load())

    def _malformed(self, line_number: int, message: str) -> None:
        """--strict : on arrête ; sinon on journalise et on saute la ligne."""
        if self.strict:
            raise CorpusFormatError(f"{self.path}: {message}", line_number)
        logger.warning("%s ligne %d ignorée : %s", self.path, line_number, message)
        self.skipped.append((line_number, message))


class JSONLHandler(DataHandler):
    def load(self) -> list[tuple[int, Any]]:
        records = []
        with self.path.open("rb") as handle:
            for line_number, raw in enumerate(handle, start=1):
                try:
                    line = raw.decode("utf-8")
                except UnicodeDecodeError as exc:
                    self._malformed(line_number, f"invalid UTF-8: {exc.reason}")
                    continue
                if not line.strip():
                    continue
                try:
                    records.append((line_number, json.loads(line)))
                except json.JSONDecodeError as exc:
                    self._malformed(line_number, f"JSON invalide: {exc.msg}")
        return records

    def clean(self, records: list[tuple[int, Any]]) -> list[Any]:
        return [record for _, record in records]


class CorpusHandler(JSONLHandler):
    """Corpus JSONL : un Document par ligne."""

    def clean(self, records: list[tuple[int, Any]]) -> list[Document]:
        docs = []
        for line_number, record in records:
            try:
                docs.append(Document.model_validate(record))
            except ValidationError as exc:
                errors = "; ".join(f"{'.'.join(map(str, e['loc']))}: {e['msg']}" for e in exc.errors())
                self._malformed(line_number, f"document invalide ({errors})")
        logger.info("%d documents chargés depuis %s (%d lignes ignorées)", len(docs), self.path, len(self.skipped))
        return docs


class ScoreSidecarHandler(JSONLHandler):
    """Scores qualité {"id", "score"} ; toute anomalie est une erreur."""

    def __init__(self, path: str | os.PathLike):
        super().__init__(path, strict=True)

    def clean(self, records: list[tuple[int, Any]]) -> dict[str, float]:
        scores: dict[str, float] = {}
        for line_number, record in records:
            if not isinstance(record, dict) or not isinstance(record.get("id"), str):
                raise CorpusFormatError(f"{self.path}: malformed sidecar, champ 'id' manquant", line_number)
            score = record.get("score")
            if isinstance(score, bool) or not isinstance(score, (int, float)) or not 0.0 <= score <= 1.0:
                raise CorpusFormatError(f"{self.path}: malformed sidecar, score invalide {score!r}", line_number)
            if record["id"] in scores:
                raise CorpusFormatError(f"{self.path}: duplicate id in sidecar: {record['id']}", line_number)
            scores[record["id"]] = float(score)
        return scores


def _replace_atomically(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(text)
        os.replace(tmp_name, path)
    except BaseException:
        Path(tmp_name).unlink(missing_ok=True)
        raise


def dumps_json(data: Any) -> str:
    return json.dumps(data, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def write_json(path: str | os.PathLike, data: Any) -> Path:
    path = Path(path)
    _replace_atomically(path, dumps_json(data))
    return path


def write_jsonl(path: str | os.PathLike, records: Iterable[Any]) -> Path:
    path = Path(path)
    lines = []
    for record in records:
        if isinstance(record, Document):
            record = record.model_dump(exclude_none=True)
        lines.append(json.dumps(record, ensure_ascii=False, sort_keys=True) + "\n")
    _replace_atomically(path, "".join(lines))
    return path


def write_tsv(path: str | os.PathLike, rows: Iterable[Iterable[Any]]) -> Path:
    path = Path(path)
    _replace_atomically(path, "".join("\t".join(str(v) for v in row) + "\n" for row in rows))
    return path


def read_json(path: str | os.PathLike) -> Any:
    with Path(path).open(encoding="utf-8") as handle:
        try:
            return json.load(handle)
        except json.JSONDecodeError as exc:
            raise CorpusFormatError(f"{path}: JSON invalide: {exc.msg}", exc.lineno) from exc
