"""Exception hierarchy shared by all wptrack modules."""


class WPTrackError(Exception):
    """Base class for every error raised by this package."""


class DegenerateGeometry(WPTrackError):
    pass


class DegenerateEllipse(WPTrackError):
    pass


class BadFilterParams(WPTrackError, ValueError):
    pass


class InsufficientData(WPTrackError):
    pass


class AmbiguousAoa(WPTrackError):
    pass


class OutOfRange(WPTrackError):
    pass


class FeatureNotFound(WPTrackError):
    pass


class NoMotionDetected(WPTrackError):
    pass


class NoStepsFound(WPTrackError):
    pass


class NoFeasibleState(WPTrackError):
    pass


class TrackLost(WPTrackError):
    pass


class BadScenario(WPTrackError, ValueError):
    pass


class ConfigError(WPTrackError, ValueError):
    pass


class NoOverlap(WPTrackError):
    pass


class ParseError(WPTrackError):
    """Malformed value in a data file; carries the offending line number."""

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


class SchemaError(ParseError):
    """Well-formed file whose columns or values violate the format contract."""
