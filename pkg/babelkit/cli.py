"""Point d'entrée `babelkit` : une sous-commande par étape du pipeline.

Codes de sortie : 0 succès, 1 erreur d'E/S, 2 validation, 3 échec de vérification.
"""
import argparse
import logging
import sys

from pydantic import ValidationError

from babelkit import __version__
from babelkit.commands import clean, dedup, extend, mix, registry, stats, toy, verify
from babelkit.config import LOG_LEVELS, configure_logging, load_settings
from babelkit.errors import VerificationFailure

logger = logging.getLogger("babelkit")

EXIT_IO = 1
EXIT_VALIDATION = 2
EXIT_VERIFICATION = 3

COMMANDS = (toy, extend, verify, clean, dedup, stats, mix, registry)


class _Parser(argparse.ArgumentParser):
    """argparse qui lève au lieu de quitter, pour garder le code 2 dans main()."""

    def error(self, message):
        raise ValueError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="babelkit", description="Outils d'extension de modèles et de préparation de corpus multilingues")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--threads", type=int, default=None, help="Parallélisme (défaut : BABELKIT_THREADS)")
    parser.add_argument("--log-level", choices=LOG_LEVELS, default=None, help="Niveau de log (défaut : BABELKIT_LOG_LEVEL)")
    subparsers = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for command in COMMANDS:
        command.register(subparsers)
    return parser


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        settings = load_settings(threads=args.threads, log_level=args.log_level)
        configure_logging(settings.log_level)
        logger.debug("Configuration : %s", settings)
        return args.handler(args, settings)
    except VerificationFailure as exc:
        logger.error("%s", exc)
        return EXIT_VERIFICATION
    except (ValueError, ValidationError) as exc:
        logger.error("%s", exc)
        return EXIT_VALIDATION
    except OSError as exc:
        logger.error("Erreur d'entrée/sortie : %s", exc)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
