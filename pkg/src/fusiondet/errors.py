"""Exception taxonomy shared by all modules.

Input/configuration/format errors are caller mistakes (CLI exit code 1);
InternalError marks broken invariants inside the library (exit code 2).
"""


class FusiondetError(Exception):
    pass


class InputError(FusiondetError, ValueError):
    """Bad runtime input: mismatched frames, unreadable files, invalid boxes."""


class ConfigurationError(FusiondetError, ValueError):
    """Inconsistent layer tables, shapes, or option values."""


class FormatError(FusiondetError, ValueError):
    """Corrupt or truncated on-disk artifact (weights file, CSV, manifest)."""


class InternalError(FusiondetError, RuntimeError):
    """A library invariant broke (missing gradient, NaN activations, ...)."""
