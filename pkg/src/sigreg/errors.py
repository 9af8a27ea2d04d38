"""Exception types shared across the library."""


class ShapeMismatchError(ValueError):
    """Operands have incompatible shapes; the message names both."""


class DegenerateBatchError(ValueError):
    """Batch has too few rows for a covariance-style statistic (needs N >= 2)."""


class SketchDimensionError(ValueError):
    """Sketch dimension out of range (k must satisfy 1 <= k <= c)."""


class SymmetryError(ValueError):
    """Matrix handed to the symmetric eigensolver is not symmetric."""


class SpectrumError(ValueError):
    """Eigenvalue spectrum is invalid for the requested metric."""


class LabelError(ValueError):
    """Class label outside [0, num_classes)."""


class DataFormatError(ValueError):
    """On-disk dataset bytes do not match the declared record layout."""


class ConfigError(ValueError):
    """Run or ablation configuration is invalid."""
