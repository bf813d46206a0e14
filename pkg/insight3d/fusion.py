'''
Multi-view instance fusion.

Gated detections are projected through their XYZ rasters into world
points; a per-area registry then merges same-class observations whose
centroids lie within `d_merge` of an existing instance, and `finalize`
fits a gravity-aligned box to every merged instance.
'''
import json
import logging
import math
import os
from collections import Counter
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .depthio import centroid, extract_points
from .exceptions import ConfigError, GeometryError, MissingInput
from .taxonomy import default_taxonomy

logger = logging.getLogger(__name__)

DUMP_SCHEMA = 'insight-inst/1'
_AXES = {'x': 0, 'y': 1, 'z': 2}


@dataclass(frozen=True)
class FusionConfig:
    d_merge: float = 0.5
    up_axis: str = 'z'

    def __post_init__(self):
        if not self.d_merge > 0:
            raise ConfigError('d_merge must be positive.')
        if self.up_axis.lstrip('+') not in _AXES:
            raise ConfigError(
                f'up_axis must be one of x, y, z; got {self.up_axis!r}.'
            )

    @property
    def up_index(self):
        return _AXES[self.up_axis.lstrip('+')]


@dataclass
class Observation:
    detection: object
    points: np.ndarray
    centroid: np.ndarray

    @property
    def point_count(self):
        return len(self.points)

    @property
    def class_name(self):
        return self.detection.class_name

    @property
    def confidence(self):
        return self.detection.confidence

    def summary(self):
        d = self.detection
        return {
            'image_id': d.image_id,
            'index': d.index,
            'source': d.source.value,
            'confidence': d.confidence,
            'point_count': self.point_count,
        }


@dataclass(frozen=True)
class GravityAlignedBox:
    center: Tuple[float, float, float]
    extents: Tuple[float, float, float]
    yaw: float = 0.0

    def to_json(self):
        return {
            'center': list(self.center),
            'extents': list(self.extents),
            'yaw': self.yaw,
        }

    @classmethod
    def from_json(cls, data):
        return cls(
            tuple(data['center']), tuple(data['extents']), data['yaw']
        )

    def contains(self, points, up_index=2, tol=1e-9):
        '''
        Boolean per point: inside the box (with tolerance `tol`).
        '''
        points = np.asarray(points, dtype=np.float64)
        a, b = (up_index + 1) % 3, (up_index + 2) % 3
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        dx = points[:, a] - self.center[a]
        dy = points[:, b] - self.center[b]
        lx = c * dx + s * dy
        ly = -s * dx + c * dy
        lz = points[:, up_index] - self.center[up_index]
        ex, ey, ez = (e / 2 + tol for e in self.extents)
        return (np.abs(lx) <= ex) & (np.abs(ly) <= ey) & (np.abs(lz) <= ez)


@dataclass
class FusedInstance:
    instance_id: str
    area_id: str
    class_name: str
    centroid: np.ndarray
    confidence: float
    point_count: int = 0
    observations: List[dict] = field(default_factory=list)
    box: Optional[GravityAlignedBox] = None
    points: Optional[np.ndarray] = None

    @property
    def n_observations(self):
        return len(self.observations)

    @property
    def sources(self):
        return sorted({o['source'] for o in self.observations})

    def to_json(self):
        return {
            'instance_id': self.instance_id,
            'area_id': self.area_id,
            'class': self.class_name,
            'centroid': [float(v) for v in self.centroid],
            'confidence': self.confidence,
            'point_count': self.point_count,
            'box': self.box.to_json() if self.box else None,
            'observations': self.observations,
        }

    @classmethod
    def from_json(cls, data):
        return cls(
            instance_id=data['instance_id'],
            area_id=data['area_id'],
            class_name=data['class'],
            centroid=np.array(data['centroid'], dtype=np.float64),
            confidence=data['confidence'],
            point_count=data['point_count'],
            observations=list(data['observations']),
            box=GravityAlignedBox.from_json(data['box']) if data['box']
            else None,
        )


def project(det, raster, mask) -> Observation:
    '''
    Lift one detection into world space.

    Raises GeometryError when no valid pixel lies under the mask.
    '''
    points = extract_points(raster, mask)
    if len(points) == 0:
        raise GeometryError(
            f'Detection {det.index} on {det.image_id} has no valid depth '
            f'under its mask.'
        )
    return Observation(detection=det, points=points, centroid=centroid(points))


def observation_order(obs):
    return (obs.detection.image_id, obs.detection.index)


class InstanceRegistry:
    '''
    The global instance registry of one area.

    Single writer: feed observations through `insert` in
    `observation_order`, then call `finalize`.
    '''
    def __init__(self, area_id, config=None, taxonomy=None):
        self.area_id = area_id
        self.config = config or FusionConfig()
        self.taxonomy = taxonomy or default_taxonomy()
        self._instances = []
        self._members = []
        self._by_class = {}

    def __len__(self):
        return len(self._instances)

    @property
    def instances(self):
        return list(self._instances)

    def _new_instance(self, obs):
        instance = FusedInstance(
            instance_id=f'{self.area_id}:{len(self._instances):06d}',
            area_id=self.area_id,
            class_name=obs.class_name,
            centroid=obs.centroid.copy(),
            confidence=obs.confidence,
            point_count=obs.point_count,
            observations=[obs.summary()],
        )
        self._by_class.setdefault(obs.class_name, []).append(
            len(self._instances)
        )
        self._instances.append(instance)
        self._members.append([obs])
        return instance

    def _nearest(self, obs):
        slots = self._by_class.get(obs.class_name)
        if not slots:
            return None
        if self.taxonomy.get(obs.class_name).is_structural_surface:
            return slots[0]
        centroids = np.array([self._instances[i].centroid for i in slots])
        dists = np.linalg.norm(centroids - obs.centroid, axis=1)
        best = int(np.argmin(dists))
        if dists[best] <= self.config.d_merge:
            return slots[best]
        return None

    def insert(self, obs: Observation) -> str:
        slot = self._nearest(obs)
        if slot is None:
            return self._new_instance(obs).instance_id
        instance = self._instances[slot]
        n, m = instance.point_count, obs.point_count
        instance.centroid = (instance.centroid * n + obs.centroid * m) / (n + m)
        instance.point_count = n + m
        instance.confidence = max(instance.confidence, obs.confidence)
        instance.observations.append(obs.summary())
        self._members[slot].append(obs)
        return instance.instance_id

    def finalize(self) -> List[FusedInstance]:
        for instance, members in zip(self._instances, self._members):
            instance.points = np.vstack([o.points for o in members])
            instance.box = fit_box(instance.points, self.config.up_index)
        return self.instances


def _canonical_yaw(yaw):
    quarter = math.pi / 2
    return (yaw + quarter / 2) % quarter - quarter / 2


def fit_box(points, up_index=2) -> GravityAlignedBox:
    '''
    Gravity-aligned box: yaw from the dominant ground-plane principal
    axis, reported in [-pi/4, pi/4).
    '''
    points = np.asarray(points, dtype=np.float64)
    if len(points) == 0:
        raise GeometryError('Cannot fit a box to an empty point set.')
    a, b = (up_index + 1) % 3, (up_index + 2) % 3
    ground = points[:, [a, b]]
    yaw = 0.0
    if len(points) > 1:
        evals, evecs = np.linalg.eigh(np.cov(ground.T, bias=True))
        if evals[1] - evals[0] > 1e-12 * max(evals[1], 1e-300):
            vx, vy = evecs[:, 1]
            yaw = _canonical_yaw(math.atan2(vy, vx))
    c, s = math.cos(yaw), math.sin(yaw)
    local = np.column_stack([
        c * ground[:, 0] + s * ground[:, 1],
        -s * ground[:, 0] + c * ground[:, 1],
    ])
    lo, hi = local.min(axis=0), local.max(axis=0)
    mid = (lo + hi) / 2
    up = points[:, up_index]
    center = np.empty(3)
    center[a] = c * mid[0] - s * mid[1]
    center[b] = s * mid[0] + c * mid[1]
    center[up_index] = (up.min() + up.max()) / 2
    extents = (
        float(hi[0] - lo[0]), float(hi[1] - lo[1]),
        float(up.max() - up.min()),
    )
    return GravityAlignedBox(
        center=tuple(float(v) for v in center), extents=extents, yaw=yaw,
    )


def fuse_area(area_id, observations, config=None, taxonomy=None):
    '''
    Fuse the observations of one area into finalized instances.
    '''
    registry = InstanceRegistry(area_id, config, taxonomy)
    for obs in sorted(observations, key=observation_order):
        registry.insert(obs)
    instances = registry.finalize()
    logger.info(
        'Fused %d observations of %s into %d instances.',
        len(observations), area_id, len(instances),
    )
    return instances


def count_by_class(instances):
    return Counter(i.class_name for i in instances)


def fragmentation(counts, ref_counts):
    '''
    Pipeline count over reference count per class; None where the
    reference is zero.
    '''
    ratios = {}
    for name in sorted(set(counts) | set(ref_counts)):
        ref = ref_counts.get(name, 0)
        ratios[name] = counts.get(name, 0) / ref if ref else None
    return ratios


# instance dump

def write_instance_dump(directory, instances, provenance=None):
    '''
    Write `instances.json` plus the `points.f64le` / `points_index.json`
    sidecar holding every instance's points.
    '''
    os.makedirs(directory, exist_ok=True)
    index, offset = [], 0
    with open(os.path.join(directory, 'points.f64le'), 'wb') as fh:
        for instance in instances:
            pts = np.ascontiguousarray(instance.points, dtype='<f8')
            fh.write(pts.tobytes())
            index.append([instance.instance_id, offset, len(pts)])
            offset += len(pts)
    _write_json(os.path.join(directory, 'points_index.json'), {
        'schema': DUMP_SCHEMA, 'points': offset, 'index': index,
    })
    _write_json(os.path.join(directory, 'instances.json'), {
        'schema': DUMP_SCHEMA,
        'provenance': provenance,
        'instances': [i.to_json() for i in instances],
    })


def read_instance_dump(directory, with_points=True):
    path = os.path.join(directory, 'instances.json')
    try:
        with open(path, encoding='utf-8') as fh:
            dump = json.load(fh)
    except FileNotFoundError:
        raise MissingInput(f'Instance dump {path} does not exist.') from None
    instances = [FusedInstance.from_json(d) for d in dump['instances']]
    if with_points:
        with open(os.path.join(directory, 'points_index.json')) as fh:
            index = json.load(fh)['index']
        raw = np.fromfile(
            os.path.join(directory, 'points.f64le'), dtype='<f8'
        ).reshape(-1, 3)
        spans = {iid: (start, n) for iid, start, n in index}
        for instance in instances:
            start, n = spans[instance.instance_id]
            instance.points = raw[start:start + n].astype(np.float64)
    return instances


def _write_json(path, payload):
    with open(path, 'w', encoding='utf-8') as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write('\n')
