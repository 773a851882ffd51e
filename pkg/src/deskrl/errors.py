"""Exception types shared across the package.

Every error raised on a user-facing path derives from DeskRLError so the
command line layer can catch one base class and translate it into a
nonzero exit code.
"""


class DeskRLError(Exception):
    """Base class for all errors raised by this package."""


class ShapeMismatchError(DeskRLError):
    """An array had the wrong shape or width for the requested operation."""


class NonFiniteError(DeskRLError):
    """A NaN or infinity showed up where only finite numbers are allowed."""


class ConfigError(DeskRLError):
    """A config file or override could not be parsed or validated."""


class CheckpointNotFoundError(DeskRLError):
    """The requested checkpoint file does not exist."""


class CheckpointIntegrityError(DeskRLError):
    """The checkpoint file is corrupt, truncated, or fails its checksum."""


class CheckpointVersionError(DeskRLError):
    """The checkpoint was written by an unknown format version."""


class ResumeError(DeskRLError):
    """A checkpoint is incompatible with the run trying to resume from it."""


class MetricsOrderError(DeskRLError):
    """An appended metrics record would go backwards in step order."""


class DemoFormatError(DeskRLError):
    """A demonstration file is corrupt or does not match the environment."""


class EmptyDatasetError(DeskRLError):
    """Filtering left no trajectories to train on."""
