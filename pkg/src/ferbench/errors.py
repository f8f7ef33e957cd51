"""Exception hierarchy shared by every pipeline stage."""


class FerBenchError(Exception):
    """Base class; the CLI maps these to exit status 1."""


class ManifestError(FerBenchError):
    """Unreadable or malformed manifest file."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)


class SamplingError(FerBenchError):
    pass


class AlignmentError(FerBenchError):
    """Eye coordinates cannot define a rotation."""


class GeometryError(FerBenchError):
    """A bounding box does not intersect the image."""


class AnnotationError(FerBenchError):
    """An adapter failed, as opposed to finding nothing."""


class ContractError(FerBenchError, ValueError):
    """A precondition of an operation was violated by the caller."""


class FoldError(FerBenchError):
    pass


class TrainingError(FerBenchError):
    def __init__(self, message, epoch=None):
        self.epoch = epoch
        if epoch is not None:
            message = f"epoch {epoch}: {message}"
        super().__init__(message)


class DataError(FerBenchError):
    """A referenced sample has no processed image on disk."""


class UndefinedScoreError(FerBenchError):
    pass


class IntegrityError(FerBenchError):
    """Conflicting duplicate entries in the results store."""


class ConfigError(FerBenchError):
    pass
