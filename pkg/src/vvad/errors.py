"""Exception hierarchy shared across the toolkit."""


class VVADError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(VVADError, ValueError):
    """Invalid input or configuration (CLI exit code 1)."""


class DegenerateFace(ValidationError):
    def __init__(self, message, frame_index=None):
        super().__init__(message)
        self.frame_index = frame_index


class DegenerateConfiguration(ValidationError):
    def __init__(self, message, frame_index=None):
        super().__init__(message)
        self.frame_index = frame_index


class EmptyAudio(ValidationError):
    pass


class TooShortTrack(ValidationError):
    pass


class ShapeMismatch(ValidationError):
    pass


class EmptyInput(ValidationError):
    pass


class EmptyClass(ValidationError):
    pass


class TooFewSamples(ValidationError):
    pass


class SingleClassDataset(ValidationError):
    pass


class ProvenanceViolation(ValidationError):
    pass


class BackboneUnavailable(VVADError, RuntimeError):
    pass
