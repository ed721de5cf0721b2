from datetime import datetime, timezone
from pathlib import Path
from typing import Any
from pydantic import BaseModel
import logging
import os
import time

import pandas as pd

from babelkit import __version__
from babelkit.config import Settings
from babelkit.handlers.datahandler import write_json

logger = logging.getLogger(__name__)


class RunManifest(BaseModel):
    subcommand: str
    parameters: dict[str, Any]
    inputs: dict[str, str]
    outputs: dict[str, str]
    seed: int | None
    threads: int
    tool_version: str
    started_at: str
    duration_seconds: float


def run_manifest_path(anchor: str | os.PathLike) -> Path:
    return Path(f"{anchor}.run.json")


class RunRecorder:
    """Chronomètre une sous-commande et écrit son RunManifest à côté des sorties."""

    def __init__(self, subcommand: str, settings: Settings):
        self.subcommand = subcommand
        self.settings = settings
        self.started_at = datetime.now(timezone.utc).isoformat(timespec="seconds")
        self._t0 = time.perf_counter()

    def write(
        self,
        anchor: str | os.PathLike,
        parameters: dict[str, Any],
        inputs: dict[str, Any],
        outputs: dict[str, Any],
        seed: int | None = None,
    ) -> Path:
        manifest = RunManifest(
            subcommand=self.subcommand,
            parameters=parameters,
            inputs={k: str(v) for k, v in inputs.items() if v is not None},
            outputs={k: str(v) for k, v in outputs.items() if v is not None},
            seed=seed,
            threads=self.settings.threads,
            tool_version=__version__,
            started_at=self.started_at,
            duration_seconds=round(time.perf_counter() - self._t0, 6),
        )
        path = write_json(run_manifest_path(anchor), manifest.model_dump())
        logger.info("RunManifest écrit : %s", path)
        return path


def print_table(df: pd.DataFrame) -> None:
    print(df.to_string())
