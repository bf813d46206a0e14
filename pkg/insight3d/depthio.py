'''
World-XYZ rasters, run-length masks, and the 2D -> 3D bridge.

XYZR file layout (little-endian)::

    b'XYZR'  u16 version=1  u32 width  u32 height
    width * height * (f32 x, f32 y, f32 z)

A pixel with all three coordinates NaN is a hole in the depth map.

RLE mask layout (little-endian)::

    u32 width  u32 height  u32 run_count  run_count * (u32 start, u32 length)

with runs over row-major pixel indices.
'''
import struct
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .exceptions import (
    BadMagicError, DimensionMismatchError, DimensionOverflowError,
    GeometryError, MaskError, MissingInput, NonFiniteCoordinateError,
    TruncatedPayloadError, UnsupportedVersionError,
)

MAGIC = b'XYZR'
VERSION = 1
_HEADER = struct.Struct('<4sHII')
_MASK_HEADER = struct.Struct('<III')
_RUN = np.dtype([('start', '<u4'), ('length', '<u4')])

# largest raster accepted, in pixels
MAX_PIXELS = 1 << 28


@dataclass(frozen=True)
class XyzRaster:
    width: int
    height: int
    data: np.ndarray  # (width * height, 3) float32, row-major

    def __post_init__(self):
        if self.data.shape != (self.width * self.height, 3):
            raise GeometryError(
                f'Raster data has shape {self.data.shape}, expected '
                f'({self.width * self.height}, 3).'
            )

    @property
    def sentinel(self):
        '''
        Boolean per pixel: True where the pixel is a depth hole.
        '''
        return np.isnan(self.data).all(axis=1)

    @property
    def n_valid(self):
        return int((~self.sentinel).sum())


@dataclass(frozen=True)
class RleMask:
    width: int
    height: int
    runs: Tuple[Tuple[int, int], ...] = ()

    def validate(self):
        size = self.width * self.height
        end = 0
        for start, length in self.runs:
            if length <= 0:
                raise MaskError(f'Run at {start} has non-positive length.')
            if start < end:
                raise MaskError(
                    f'Run at {start} overlaps or precedes the previous run.'
                )
            end = start + length
            if end > size:
                raise MaskError(
                    f'Run at {start} ends at {end}, past the {size} pixels '
                    f'of a {self.width}x{self.height} mask.'
                )
        return self

    @property
    def area(self):
        return sum(length for _, length in self.runs)


@dataclass(frozen=True)
class CameraModel:
    '''
    Pinhole intrinsics plus the camera -> world pose.
    '''
    fx: float
    fy: float
    cx: float
    cy: float
    rotation: np.ndarray = None
    translation: np.ndarray = None

    def __post_init__(self):
        rotation = np.eye(3) if self.rotation is None else \
            np.asarray(self.rotation, dtype=np.float64)
        translation = np.zeros(3) if self.translation is None else \
            np.asarray(self.translation, dtype=np.float64)
        object.__setattr__(self, 'rotation', rotation)
        object.__setattr__(self, 'translation', translation)
        intrinsics = np.array([self.fx, self.fy, self.cx, self.cy], float)
        if not np.isfinite(intrinsics).all():
            raise GeometryError('Camera intrinsics must be finite.')
        if self.fx <= 0 or self.fy <= 0:
            raise GeometryError('Focal lengths must be positive.')
        if rotation.shape != (3, 3) or translation.shape != (3,):
            raise GeometryError('Pose must be a 3x3 rotation and a 3-vector.')
        if not (np.isfinite(rotation).all() and np.isfinite(translation).all()):
            raise GeometryError('Camera pose must be finite.')
        if not np.allclose(rotation @ rotation.T, np.eye(3), atol=1e-6):
            raise GeometryError('Camera rotation is not orthonormal.')

    @classmethod
    def look_at(cls, eye, target, fx, fy, cx, cy, up=(0.0, 0.0, 1.0)):
        '''
        Camera at `eye` looking at `target`; x right, y down, z forward.
        '''
        eye = np.asarray(eye, dtype=np.float64)
        forward = np.asarray(target, dtype=np.float64) - eye
        forward /= np.linalg.norm(forward)
        right = np.cross(forward, np.asarray(up, dtype=np.float64))
        norm = np.linalg.norm(right)
        if norm < 1e-9:
            raise GeometryError('Viewing direction is parallel to up.')
        right /= norm
        down = np.cross(forward, right)
        rotation = np.column_stack([right, down, forward])
        return cls(fx, fy, cx, cy, rotation=rotation, translation=eye)


# rasters

def parse_xyz_raster(payload: bytes) -> XyzRaster:
    if len(payload) < _HEADER.size:
        raise TruncatedPayloadError(
            f'Raster header needs {_HEADER.size} bytes, got {len(payload)}.'
        )
    magic, version, width, height = _HEADER.unpack_from(payload)
    if magic != MAGIC:
        raise BadMagicError(f'Bad raster magic {magic!r}; expected {MAGIC!r}.')
    if version != VERSION:
        raise UnsupportedVersionError(f'Unsupported raster version {version}.')
    n_pixels = width * height
    if n_pixels > MAX_PIXELS:
        raise DimensionOverflowError(
            f'Raster of {width}x{height} exceeds {MAX_PIXELS} pixels.'
        )
    expected = _HEADER.size + n_pixels * 12
    if len(payload) != expected:
        raise TruncatedPayloadError(
            f'Raster of {width}x{height} declares {expected} bytes, '
            f'file has {len(payload)}.'
        )
    data = np.frombuffer(
        payload, dtype='<f4', offset=_HEADER.size
    ).reshape(n_pixels, 3)
    nan = np.isnan(data)
    partial = nan.any(axis=1) & ~nan.all(axis=1)
    if partial.any() or np.isinf(data).any():
        raise NonFiniteCoordinateError(
            'Raster has non-finite coordinates outside the all-NaN sentinel.'
        )
    return XyzRaster(width, height, data.astype(np.float32))


def encode_xyz_raster(raster: XyzRaster) -> bytes:
    header = _HEADER.pack(MAGIC, VERSION, raster.width, raster.height)
    return header + np.ascontiguousarray(raster.data, dtype='<f4').tobytes()


def read_xyz_raster(path) -> XyzRaster:
    try:
        with open(path, 'rb') as fh:
            payload = fh.read()
    except FileNotFoundError:
        raise MissingInput(f'Raster file {path} does not exist.') from None
    return parse_xyz_raster(payload)


def write_xyz_raster(path, raster: XyzRaster):
    with open(path, 'wb') as fh:
        fh.write(encode_xyz_raster(raster))


# masks

def decode_mask(mask: RleMask) -> np.ndarray:
    '''
    Return the mask as a flat boolean array over row-major pixels.
    '''
    mask.validate()
    bits = np.zeros(mask.width * mask.height, dtype=bool)
    for start, length in mask.runs:
        bits[start:start + length] = True
    return bits


def encode_mask(bits, width, height) -> RleMask:
    flat = np.asarray(bits, dtype=bool).reshape(-1)
    if flat.size != width * height:
        raise MaskError(
            f'Bitset of {flat.size} pixels does not fit {width}x{height}.'
        )
    padded = np.concatenate(([False], flat, [False])).astype(np.int8)
    edges = np.flatnonzero(np.diff(padded))
    starts, ends = edges[0::2], edges[1::2]
    runs = tuple(
        (int(s), int(e - s)) for s, e in zip(starts, ends)
    )
    return RleMask(width, height, runs)


def box_mask(box2d, width, height) -> RleMask:
    '''
    Mask of the pixels whose centres fall inside `box2d`, clipped to the
    image; stands in for detections that ship no mask.
    '''
    x0, y0, x1, y1 = box2d
    cols = np.arange(width) + 0.5
    rows = np.arange(height) + 0.5
    inside = ((rows >= y0) & (rows <= y1))[:, None] & \
        ((cols >= x0) & (cols <= x1))[None, :]
    return encode_mask(inside, width, height)


def parse_mask(payload: bytes) -> RleMask:
    if len(payload) < _MASK_HEADER.size:
        raise MaskError('Mask file is shorter than its header.')
    width, height, count = _MASK_HEADER.unpack_from(payload)
    expected = _MASK_HEADER.size + count * _RUN.itemsize
    if len(payload) != expected:
        raise MaskError(
            f'Mask declares {count} runs ({expected} bytes), '
            f'file has {len(payload)} bytes.'
        )
    runs = np.frombuffer(payload, dtype=_RUN, offset=_MASK_HEADER.size)
    mask = RleMask(
        width, height,
        tuple((int(r['start']), int(r['length'])) for r in runs),
    )
    return mask.validate()


def encode_rle_mask(mask: RleMask) -> bytes:
    runs = np.array(list(mask.runs), dtype=_RUN) if mask.runs else \
        np.zeros(0, dtype=_RUN)
    return _MASK_HEADER.pack(mask.width, mask.height, len(mask.runs)) + \
        runs.tobytes()


def read_mask(path) -> RleMask:
    try:
        with open(path, 'rb') as fh:
            return parse_mask(fh.read())
    except FileNotFoundError:
        raise MissingInput(f'Mask file {path} does not exist.') from None


def write_mask(path, mask: RleMask):
    with open(path, 'wb') as fh:
        fh.write(encode_rle_mask(mask.validate()))


# geometry

def extract_points(raster: XyzRaster, mask: RleMask) -> np.ndarray:
    '''
    World points under `mask`, row-major, depth holes dropped.
    '''
    if (mask.width, mask.height) != (raster.width, raster.height):
        raise DimensionMismatchError(
            f'Mask is {mask.width}x{mask.height} but raster is '
            f'{raster.width}x{raster.height}.'
        )
    selected = decode_mask(mask) & ~raster.sentinel
    return raster.data[selected].astype(np.float64)


def back_project(depth, cam: CameraModel) -> XyzRaster:
    '''
    Lift a metric depth image into a world-XYZ raster.

    NaN depth marks a hole and becomes the raster sentinel.
    '''
    depth = np.asarray(depth, dtype=np.float64)
    if depth.ndim != 2:
        raise GeometryError('Depth must be a 2D array.')
    if (depth[~np.isnan(depth)] < 0).any() or np.isinf(depth).any():
        raise GeometryError('Depth must be non-negative or NaN.')
    height, width = depth.shape
    v, u = np.mgrid[0:height, 0:width]
    d = depth.reshape(-1)
    local = np.column_stack([
        d * (u.reshape(-1) - cam.cx) / cam.fx,
        d * (v.reshape(-1) - cam.cy) / cam.fy,
        d,
    ])
    world = local @ cam.rotation.T + cam.translation
    world[np.isnan(d)] = np.nan
    return XyzRaster(width, height, world.astype(np.float32))


def centroid(points) -> np.ndarray:
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or len(points) == 0:
        raise GeometryError('Cannot take the centroid of an empty point set.')
    return points.mean(axis=0)
