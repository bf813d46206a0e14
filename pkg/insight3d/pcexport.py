'''
Labeled point clouds for 3D training.

One directory per area holding raw little-endian arrays with the
logical layout of a Pointcept scene (coord / segment / instance) plus a
per-point confidence and a JSON manifest::

    coord.f32le       N x 3 world meters
    segment.i32le     N taxonomy class ids
    instance.i32le    N instance indices (-1 = unassigned)
    confidence.f32le  N
    manifest.json

Ground-truth clouds share the layout; their `segment` ids index the
`labels.json` sidecar of source-dataset tokens.
'''
import json
import logging
import os
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .exceptions import MissingInput
from .taxonomy import default_taxonomy

logger = logging.getLogger(__name__)

SCHEMA = 'insight-pc/1'
DUPLICATE_TOLERANCE = 1e-6

_ARRAYS = (
    ('coord', 'coord.f32le', '<f4', 3),
    ('segment', 'segment.i32le', '<i4', 1),
    ('instance', 'instance.i32le', '<i4', 1),
    ('confidence', 'confidence.f32le', '<f4', 1),
)


@dataclass
class LabeledCloud:
    area_id: str
    coord: np.ndarray
    segment: np.ndarray
    instance: np.ndarray
    confidence: np.ndarray
    instance_ids: List[str] = field(default_factory=list)
    frame: str = 'world'

    def __len__(self):
        return len(self.coord)

    def histogram(self, taxonomy=None):
        taxonomy = taxonomy or default_taxonomy()
        counts = Counter(int(s) for s in self.segment)
        return {
            taxonomy.by_id(sid).name: n for sid, n in sorted(counts.items())
        }

    def manifest(self, taxonomy=None, provenance=None):
        return {
            'schema': SCHEMA,
            'area_id': self.area_id,
            'frame': self.frame,
            'point_count': len(self),
            'class_histogram': self.histogram(taxonomy),
            'instance_ids': list(self.instance_ids),
            'has_color': False,
            'provenance': provenance,
        }


def point_conflict_resolve(instances):
    '''
    Give every world point one owner.

    Points of different (or the same) instances closer than 1e-6 m are
    one physical point; it goes to the highest-confidence instance, ties
    to the earlier instance, then the earlier point. Returns, per
    instance, the boolean keep-mask over its points.
    '''
    sizes = [len(i.points) for i in instances]
    keep = [np.ones(n, dtype=bool) for n in sizes]
    total = sum(sizes)
    if total < 2:
        return keep
    coords = np.vstack([i.points for i in instances if len(i.points)])
    owner = np.repeat(np.arange(len(instances)), sizes)
    local = np.concatenate([np.arange(n) for n in sizes])
    pairs = cKDTree(coords).query_pairs(DUPLICATE_TOLERANCE, output_type='ndarray')
    if len(pairs) == 0:
        return keep
    graph = coo_matrix(
        (np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(total, total)
    )
    _, component = connected_components(graph, directed=False)
    confidence = np.array([i.confidence for i in instances])[owner]
    # winner per component: max confidence, then lowest global index
    order = np.lexsort((np.arange(total), -confidence, component))
    first = np.ones(total, dtype=bool)
    first[1:] = component[order][1:] != component[order][:-1]
    winners = np.zeros(total, dtype=bool)
    winners[order[first]] = True
    for gi in np.flatnonzero(~winners):
        keep[owner[gi]][local[gi]] = False
    return keep


def to_cloud(area_id, instances, taxonomy=None, frame='world'):
    '''
    Concatenate instance points in instance-id order after conflict
    resolution.
    '''
    taxonomy = taxonomy or default_taxonomy()
    instances = sorted(instances, key=lambda i: i.instance_id)
    keep = point_conflict_resolve(instances)
    coords, segments, members, confidences = [], [], [], []
    for index, (instance, mask) in enumerate(zip(instances, keep)):
        pts = np.asarray(instance.points, dtype=np.float64)[mask]
        n = len(pts)
        coords.append(pts)
        segments.append(np.full(n, taxonomy.get(instance.class_name).id))
        members.append(np.full(n, index))
        confidences.append(np.full(n, instance.confidence))
    if coords:
        coord = np.vstack(coords)
        segment, instance, confidence = (
            np.concatenate(a) for a in (segments, members, confidences)
        )
    else:
        coord = np.zeros((0, 3))
        segment = instance = confidence = np.zeros(0)
    return LabeledCloud(
        area_id=area_id,
        coord=coord.astype(np.float32),
        segment=segment.astype(np.int32),
        instance=instance.astype(np.int32),
        confidence=confidence.astype(np.float32),
        instance_ids=[i.instance_id for i in instances],
        frame=frame,
    )


def write_cloud(directory, cloud, taxonomy=None, provenance=None):
    os.makedirs(directory, exist_ok=True)
    for attr, filename, dtype, _ in _ARRAYS:
        array = np.ascontiguousarray(getattr(cloud, attr), dtype=dtype)
        with open(os.path.join(directory, filename), 'wb') as fh:
            fh.write(array.tobytes())
    with open(os.path.join(directory, 'manifest.json'), 'w',
              encoding='utf-8') as fh:
        json.dump(cloud.manifest(taxonomy, provenance), fh, indent=1,
                  sort_keys=True)
        fh.write('\n')
    return cloud


def export(area_id, instances, out_dir, taxonomy=None, provenance=None,
           frame='world'):
    cloud = to_cloud(area_id, instances, taxonomy, frame)
    logger.info('Exporting %d points for %s.', len(cloud), area_id)
    return write_cloud(out_dir, cloud, taxonomy, provenance)


def _read_manifest(directory):
    path = os.path.join(directory, 'manifest.json')
    try:
        with open(path, encoding='utf-8') as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise MissingInput(f'Cloud manifest {path} does not exist.') from None


def read_cloud(directory) -> LabeledCloud:
    manifest = _read_manifest(directory)
    arrays = {}
    for attr, filename, dtype, width in _ARRAYS:
        path = os.path.join(directory, filename)
        if not os.path.exists(path):
            raise MissingInput(f'Cloud array {path} does not exist.')
        data = np.fromfile(path, dtype=dtype)
        arrays[attr] = data.reshape(-1, 3) if width == 3 else data
    return LabeledCloud(
        area_id=manifest['area_id'],
        instance_ids=manifest.get('instance_ids', []),
        frame=manifest.get('frame', 'world'),
        **arrays,
    )


# ground truth

@dataclass
class GroundTruthCloud:
    area_id: str
    coord: np.ndarray
    labels: np.ndarray  # source-dataset token per point
    frame: str = 'world'

    def __len__(self):
        return len(self.coord)


def write_ground_truth(directory, area_id, coord, labels, provenance=None,
                       frame='world'):
    '''
    Write a GT cloud: tokens are stored as ids into `labels.json`.
    '''
    names = sorted(set(labels))
    ids = {name: i for i, name in enumerate(names)}
    coord = np.asarray(coord, dtype=np.float64).reshape(-1, 3)
    cloud = LabeledCloud(
        area_id=area_id,
        coord=coord.astype(np.float32),
        segment=np.array([ids[l] for l in labels], dtype=np.int32),
        instance=np.full(len(coord), -1, dtype=np.int32),
        confidence=np.ones(len(coord), dtype=np.float32),
        frame=frame,
    )
    os.makedirs(directory, exist_ok=True)
    for attr, filename, dtype, _ in _ARRAYS:
        with open(os.path.join(directory, filename), 'wb') as fh:
            fh.write(np.ascontiguousarray(getattr(cloud, attr), dtype).tobytes())
    with open(os.path.join(directory, 'labels.json'), 'w') as fh:
        json.dump({str(i): n for n, i in ids.items()}, fh, indent=1,
                  sort_keys=True)
        fh.write('\n')
    histogram: Dict[str, int] = dict(sorted(Counter(labels).items()))
    with open(os.path.join(directory, 'manifest.json'), 'w') as fh:
        json.dump({
            'schema': SCHEMA,
            'area_id': area_id,
            'frame': frame,
            'point_count': len(coord),
            'class_histogram': histogram,
            'has_color': False,
            'provenance': provenance,
        }, fh, indent=1, sort_keys=True)
        fh.write('\n')


def read_ground_truth(directory) -> GroundTruthCloud:
    cloud = read_cloud(directory)
    path = os.path.join(directory, 'labels.json')
    try:
        with open(path) as fh:
            names = {int(k): v for k, v in json.load(fh).items()}
    except FileNotFoundError:
        raise MissingInput(f'Label sidecar {path} does not exist.') from None
    labels = np.array([names[int(s)] for s in cloud.segment], dtype=object)
    return GroundTruthCloud(
        cloud.area_id, cloud.coord.astype(np.float64), labels, cloud.frame
    )
