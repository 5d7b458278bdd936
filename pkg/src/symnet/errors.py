"""Exception hierarchy shared by every subpackage."""


class SymnetError(Exception):
    """Base class for all library errors."""


class DimensionError(SymnetError, ValueError):
    """Operand shapes or lengths do not agree."""


class AsymmetryError(SymnetError, ValueError):
    def __init__(self, deviation, index):
        self.deviation = deviation
        self.index = index
        super().__init__(f"matrix is not symmetric: max |s[i,j] - s[j,i]| = {deviation:g} at {index}")


class UnsupportedLayerError(SymnetError, ValueError):
    """A symmetry was requested on a layer whose shape cannot carry it."""


class ConfigError(SymnetError, ValueError):
    """Invalid experiment or model configuration.

    ``location`` names the offending key path (e.g. ``optimizer.lr``).
    """

    def __init__(self, message, location=None):
        self.location = location
        if location:
            message = f"{location}: {message}"
        super().__init__(message)


class ContractError(SymnetError, RuntimeError):
    """A caller broke an API precondition (e.g. missing gradient)."""


class FormatError(SymnetError, ValueError):
    def __init__(self, message, offset=None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)


class IngestionError(SymnetError, OSError):
    """Dataset could not be read."""


class DivergenceError(SymnetError, FloatingPointError):
    def __init__(self, epoch, step=None, detail=""):
        self.epoch = epoch
        self.step = step
        msg = f"loss became non-finite in epoch {epoch}"
        if step is not None:
            msg += f" (step {step})"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)
