"""
Exception hierarchy for the ENS laboratory
Every error carries a short machine-readable kind used by the CLI
"""


class EnsLabError(Exception):
    """Base error; `kind` is printed by the CLI as `error: <kind>: <message>`"""

    kind = "enslab"


class GridMismatchError(EnsLabError):
    kind = "grid-mismatch"


class SymmetryViolationError(EnsLabError):
    kind = "symmetry-violation"


class InvalidParameterError(EnsLabError):
    kind = "invalid-parameter"


class CFLViolationError(EnsLabError):
    kind = "cfl-violation"


class NonFiniteStateError(EnsLabError):
    kind = "non-finite-state"


class DensityFloorError(EnsLabError):
    kind = "density-floor"


class HistoryRangeError(EnsLabError):
    kind = "history-range"


class ConfigError(EnsLabError):
    """Bad run configuration; `key` names the offending entry when known"""

    kind = "config"

    def __init__(self, message: str, key: str = ""):
        super().__init__(f"{key}: {message}" if key else message)
        self.key = key


class CheckpointError(EnsLabError):
    kind = "checkpoint"


class LedgerFormatError(EnsLabError):
    kind = "ledger-format"


class DecayFitError(EnsLabError):
    kind = "decay-fit"
