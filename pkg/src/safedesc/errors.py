"""Exception types raised across the package."""


class ParameterError(ValueError):
    """An argument is outside the valid domain of an operation."""


class FormatError(ValueError):
    """A file does not follow the expected on-disk layout."""


class LayoutError(ValueError):
    """Two descriptors (or descriptor lists) are not structurally comparable."""


class NoReliableAngle(ValueError):
    """The descriptor component used for the intrinsic angle is too weak."""

    def __init__(self, confidence, floor):
        super().__init__(f"no reliable intrinsic angle: confidence {confidence:.4g} < floor {floor:.4g}")
        self.confidence = confidence
        self.floor = floor
