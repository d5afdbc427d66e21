"""Exception types raised across the package."""


class MicrodepthError(Exception):
    pass


class InvalidInputError(MicrodepthError, ValueError):
    """An argument violates an operation's precondition."""


class DegenerateInputError(InvalidInputError):
    """Input carries too little information, e.g. a single intensity level."""


class NoDetectionError(MicrodepthError):
    """Segmentation found no foreground object."""


class ImageFormatError(MicrodepthError, ValueError):
    pass


class MalformedImageError(ImageFormatError):
    pass


class UnsupportedBitDepthError(ImageFormatError):
    pass


class InvalidDatasetError(MicrodepthError, ValueError):
    pass


class SingularSystemError(MicrodepthError, ArithmeticError):
    pass


class TrainingDivergedError(MicrodepthError, ArithmeticError):
    pass


class LayoutMismatchError(MicrodepthError, ValueError):
    """A model was trained on a different feature layout than the data offered."""
