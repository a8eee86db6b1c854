"""Error types shared by every PoseLift app.

Each error carries the exit code its category maps to on the command line:
2 configuration, 4 data, 5 numeric. IO problems surface as ``OSError`` (exit 3).
"""

CONFIG_EXIT = 2
IO_EXIT = 3
DATA_EXIT = 4
NUMERIC_EXIT = 5


class PoseLiftError(Exception):
    exit_code = DATA_EXIT


# Topology and pose values

class TopologyError(PoseLiftError):
    pass


class CycleError(TopologyError):
    pass


class DuplicateEdgeError(TopologyError):
    pass


class JointIndexError(TopologyError, IndexError):
    pass


class DegeneratePoseError(PoseLiftError):
    pass


class FormatError(PoseLiftError):
    def __init__(self, message, path=None, line=None):
        location = ''
        if path is not None:
            location = f'{path}:{line}: ' if line is not None else f'{path}: '
        super().__init__(f'{location}{message}')
        self.path = path
        self.line = line


class TopologyMismatchError(PoseLiftError):
    pass


# Geometry

class NonPositiveDepthError(PoseLiftError):
    exit_code = NUMERIC_EXIT


class EmptyBatchError(PoseLiftError):
    pass


# Prior

class RankError(PoseLiftError):
    pass


# Losses and networks

class ShapeMismatchError(PoseLiftError):
    pass


class PairingError(PoseLiftError):
    pass


class ZeroSkeletonError(PoseLiftError):
    exit_code = NUMERIC_EXIT


class DomainError(PoseLiftError):
    exit_code = NUMERIC_EXIT


class NonFiniteLossError(PoseLiftError):
    exit_code = NUMERIC_EXIT

    def __init__(self, term, value):
        super().__init__(f'loss term {term!r} is not finite ({value})')
        self.term = term
        self.value = value


class ConfigurationError(PoseLiftError, ValueError):
    exit_code = CONFIG_EXIT


class InvalidWeightsError(ConfigurationError):
    pass


# Artifacts

class VersionError(PoseLiftError):
    pass


class CorruptCheckpointError(PoseLiftError):
    pass


class DatasetEmptyError(PoseLiftError):
    pass


# Evaluation

class DegenerateTargetError(PoseLiftError):
    exit_code = NUMERIC_EXIT


class LengthMismatchError(PoseLiftError):
    pass


class EmptyErrorsError(PoseLiftError):
    pass
