"""Exception hierarchy shared by all cd2 modules.

Every domain error derives from Cd2Error so callers (service layer, CLI)
can map failures to transport codes in one place.
"""


class Cd2Error(Exception):
    """Base class for all cd2 domain errors."""


# --- imaging ---------------------------------------------------------------

class DimensionTooSmall(Cd2Error):
    """Image smaller than the 3x3 gradient kernel support."""


# --- features / grid -------------------------------------------------------

class OutOfDomain(Cd2Error):
    """Gradient value outside the representable [0, 1020] domain."""


class GridTooFine(Cd2Error):
    """Requested patch grid would produce empty patches."""


class StreamTruncated(Cd2Error):
    """Scanline stream ended before the declared image height."""


# --- signature codec -------------------------------------------------------

class CodecError(Cd2Error):
    """Malformed signature byte sequence."""


class BadMagic(CodecError):
    pass


class VersionMismatch(CodecError):
    """Unsupported signature or model format version."""


class TruncatedPayload(CodecError):
    pass


class CountOverflow(CodecError):
    """A bin count exceeds the bound implied by the bit width."""


# --- distances -------------------------------------------------------------

class BadTail(Cd2Error):
    """Tail size for the noise distance outside 1..15."""


class SchemeMismatch(Cd2Error):
    """Operands were binned with different schemes."""


class DimensionMismatch(Cd2Error):
    """Operands describe images of different pixel dimensions."""


class GridMismatch(Cd2Error):
    """Operands carry different patch grids."""


# --- scoring ---------------------------------------------------------------

class UnknownOperation(Cd2Error):
    """No safety threshold configured for the processing operation."""


# --- boosting --------------------------------------------------------------

class EmptyDataset(Cd2Error):
    """Training set empty or too small for the leaf-size constraint."""


class FeatureOrderMismatch(Cd2Error):
    """Prediction input does not follow the model's feature contract."""


class ParseError(Cd2Error):
    """Malformed model file."""


# --- evaluation ------------------------------------------------------------

class MissingColumn(Cd2Error):
    """Manifest CSV lacks a required column."""


class TooFewGroups(Cd2Error):
    """Fewer distinct reference ids than requested folds."""


class LengthMismatch(Cd2Error):
    """Prediction / truth vectors differ in length."""


class DegenerateVariance(Cd2Error):
    """Correlation or calibration undefined because one side is constant."""
