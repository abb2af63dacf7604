"""Exception hierarchy. Each class carries a short machine-parseable code
used as the prefix of CLI error lines."""


class FpnsegError(Exception):
    code = "error"

    def __str__(self):
        return f"{self.code}: {super().__str__()}"


class ShapeError(FpnsegError):
    code = "shape-error"


class ConfigError(FpnsegError):
    code = "config-error"


class DataError(FpnsegError):
    code = "data-error"


class CheckpointError(FpnsegError):
    code = "checkpoint-error"


class TrainingDiverged(FpnsegError):
    code = "diverged"

    def __init__(self, iteration, loss):
        super().__init__(f"non-finite loss {loss!r} at iteration {iteration}")
        self.iteration = iteration
        self.loss = loss
