"""Exception types raised across the package.

Parsing errors carry enough context (key, line, field) for a CLI to print a
single useful diagnostic; geometry/config errors signal violated invariants.
"""


class DvfError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(DvfError):
    """Base class for file/format parsing errors."""


class MissingKeyError(ParseError):
    def __init__(self, key: str):
        self.key = key
        super().__init__(f"required key {key!r} not found")


class WrongCountError(ParseError):
    def __init__(self, key: str, expected: int, got: int):
        self.key = key
        self.expected = expected
        self.got = got
        super().__init__(f"key {key!r}: expected {expected} values, got {got}")


class MalformedFloatError(ParseError):
    def __init__(self, line: int, column: int, token: str = ""):
        self.line = line
        self.column = column
        self.token = token
        super().__init__(f"line {line}, field {column}: not a number: {token!r}")


class WrongFieldCountError(ParseError):
    def __init__(self, line: int, expected: str, got: int):
        self.line = line
        self.expected = expected
        self.got = got
        super().__init__(f"line {line}: expected {expected} fields, got {got}")


class TruncatedFileError(ParseError):
    def __init__(self, length: int, record_size: int):
        self.length = length
        self.record_size = record_size
        super().__init__(
            f"byte length {length} is not a multiple of the {record_size}-byte record size"
        )


class InvalidConfigError(DvfError):
    """A configuration or type invariant was violated."""


class InvalidRangeError(DvfError):
    """Interval endpoints supplied in the wrong order."""


class EmptyImageError(DvfError):
    """Image width or height is zero."""


class DimMismatchError(DvfError):
    """Heatmap dimensions disagree."""


class GridTooSmallError(DvfError):
    """Voxel grid too small to downsample further."""


class AlreadyTransformedError(DvfError):
    """Scene has already been augmented; transforms apply at most once."""


class IndexOutOfRangeError(DvfError):
    """A box index does not refer to an existing box."""


class NonPositiveDimsError(DvfError):
    """Box dimensions must be strictly positive."""


class DegenerateBoxError(DvfError):
    """Box has zero footprint area."""


class SingularCalibError(DvfError):
    """Calibration chain is not invertible."""


class UnknownClassError(DvfError):
    def __init__(self, cls: str):
        self.cls = cls
        super().__init__(f"no IoU threshold configured for class {cls!r}")
