"""Exceptions du toolkit.

Les erreurs de validation héritent de ValueError : la CLI les traduit en code 2.
Chaque message commence par une clé anglaise stable (ex. "out-of-bounds extent").
"""


class BabelKitError(Exception):
    pass


class ConfigError(BabelKitError, ValueError):
    pass


class CheckpointError(BabelKitError, ValueError):
    """Checkpoint invalide ; `problems` énumère toutes les violations trouvées."""

    def __init__(self, problems: list[str] | str):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class PlanError(BabelKitError, ValueError):
    pass


class ForwardError(BabelKitError, ValueError):
    pass


class VocabMismatchError(BabelKitError, ValueError):
    pass


class CorpusFormatError(BabelKitError, ValueError):
    def __init__(self, message: str, line_number: int | None = None):
        self.line_number = line_number
        if line_number is not None:
            message = f"ligne {line_number}: {message}"
        super().__init__(message)


class DedupError(BabelKitError, ValueError):
    pass


class MixtureError(BabelKitError, ValueError):
    pass


class VerificationFailure(BabelKitError):
    """Le contrôle d'identité a trouvé une déviation non nulle."""
