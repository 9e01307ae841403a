"""Exception hierarchy shared across the package."""


class SnnConvError(Exception):
    """Base class for all package errors."""


class DimensionError(SnnConvError, ValueError):
    pass


class CompositionError(SnnConvError, ValueError):
    """Consecutive layer shapes do not compose."""

    def __init__(self, message, layer_index=None):
        super().__init__(message)
        self.layer_index = layer_index


class TrainingDivergedError(SnnConvError, ArithmeticError):
    def __init__(self, epoch, loss):
        super().__init__(f"training diverged at epoch {epoch} (loss={loss!r})")
        self.epoch = epoch
        self.loss = loss


class DegenerateLayerError(SnnConvError, ValueError):
    """A layer whose weights and activations are all zero cannot be balanced."""

    def __init__(self, layer_index):
        super().__init__(f"weighted layer {layer_index} is dead (max |w| = max |z| = 0)")
        self.layer_index = layer_index


class StructureError(SnnConvError, ValueError):
    pass


class NumericOverflowError(SnnConvError, ArithmeticError):
    def __init__(self, layer_index, step):
        super().__init__(f"non-finite membrane potential in layer {layer_index} at step {step}")
        self.layer_index = layer_index
        self.step = step


class UndefinedSimilarityError(SnnConvError, ValueError):
    pass


class FormatError(SnnConvError, ValueError):
    pass


class ConsistencyError(SnnConvError, ValueError):
    pass


class TruncatedFileError(SnnConvError, OSError):
    def __init__(self, path, offset, needed):
        super().__init__(f"{path}: truncated at byte offset {offset} (needed {needed} more bytes)")
        self.path = path
        self.offset = offset


class UnsupportedVersionError(SnnConvError, ValueError):
    pass


class ConfigError(SnnConvError, ValueError):
    pass


class PipelineError(SnnConvError, RuntimeError):
    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
