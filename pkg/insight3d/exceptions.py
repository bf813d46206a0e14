class InsightError(Exception):
    '''
    Base error for the insight3d pipeline.

    Every error carries the exit code a management command returns
    when the error escapes it.
    '''
    exit_code = 3


class InvalidInput(InsightError):
    '''
    Input exists but does not satisfy its contract.
    '''
    exit_code = 1


class MissingInput(InsightError):
    '''
    A required file or directory is absent.
    '''
    exit_code = 2


class ConfigError(InvalidInput):
    pass


class RasterFormatError(InvalidInput):
    pass


class BadMagicError(RasterFormatError):
    pass


class UnsupportedVersionError(RasterFormatError):
    pass


class TruncatedPayloadError(RasterFormatError):
    pass


class DimensionOverflowError(RasterFormatError):
    pass


class NonFiniteCoordinateError(RasterFormatError):
    pass


class MaskError(InvalidInput):
    pass


class DetectionSchemaError(InvalidInput):
    '''
    A detection line that cannot be read as a record at all.
    '''
    def __init__(self, message, line_no=None):
        self.line_no = line_no
        if line_no is not None:
            message = f'line {line_no}: {message}'
        super().__init__(message)


class UnknownClassError(InvalidInput):
    pass


class GeometryError(InvalidInput):
    pass


class DimensionMismatchError(GeometryError):
    '''
    A mask whose size differs from the raster it selects from.
    '''


class FrameMismatchError(InvalidInput):
    pass


class EmptyIndexError(InvalidInput):
    pass
