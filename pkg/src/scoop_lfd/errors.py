"""Exception types shared across the package."""


class ShapeMismatchError(ValueError):
    """An operation received tensors whose shapes are incompatible."""


class StoreFormatError(ValueError):
    """A dataset or model file failed validation (magic, version, dims, truncation)."""


class TrainingDivergedError(RuntimeError):
    """Training produced a non-finite loss and was aborted."""


class PlanningError(ValueError):
    """A demonstration plan could not be constructed (e.g. unreachable bowl)."""


class PipelineError(RuntimeError):
    """A named experiment stage failed; `stage` says which one."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"{stage}: {message}")
        self.stage = stage
