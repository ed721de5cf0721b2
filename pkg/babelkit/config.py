from dataclasses import dataclass, replace
from dotenv import load_dotenv
import logging
import os

from babelkit.errors import ConfigError

load_dotenv()

LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")


@dataclass(frozen=True)
class Settings:
    threads: int = 1
    log_level: str = "INFO"
    max_context: int = 512
    seed: int = 0


def _int_env(name: str, default: int) -> int:
    raw = os.getenv(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{name} doit être un entier, reçu: {raw!r}") from None


def _validated(settings: Settings) -> Settings:
    if settings.threads < 1:
        raise ConfigError(f"BABELKIT_THREADS doit être >= 1, reçu: {settings.threads}")
    if settings.max_context < 1:
        raise ConfigError(f"BABELKIT_MAX_CONTEXT doit être >= 1, reçu: {settings.max_context}")
    if not 0 <= settings.seed < 2**64:
        raise ConfigError(f"la graine doit tenir sur 64 bits non signés, reçu: {settings.seed}")
    if settings.log_level.upper() not in LOG_LEVELS:
        raise ConfigError(f"BABELKIT_LOG_LEVEL doit être parmi {LOG_LEVELS}, reçu: {settings.log_level}")
    return replace(settings, log_level=settings.log_level.upper())


def load_settings(**overrides) -> Settings:
    """Lit la configuration depuis l'environnement (.env inclus) ; les flags CLI non nuls priment."""
    overrides = {k: v for k, v in overrides.items() if v is not None}
    if "threads" not in overrides:
        overrides["threads"] = _int_env("BABELKIT_THREADS", 1)
    if "log_level" not in overrides:
        overrides["log_level"] = os.getenv("BABELKIT_LOG_LEVEL", "INFO")
    if "max_context" not in overrides:
        overrides["max_context"] = _int_env("BABELKIT_MAX_CONTEXT", 512)
    if "seed" not in overrides:
        overrides["seed"] = _int_env("BABELKIT_SEED", 0)
    return _validated(Settings(**overrides))


def configure_logging(level: str) -> None:
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        force=True,
    )
