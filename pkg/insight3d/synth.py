'''
Synthetic buildings with planted truth.

Every fixture is seen from `views` cameras that look at its centre plus
a small view-dependent offset. Each view renders a square pixel patch
at constant depth into an otherwise empty XYZ raster; the patch is
symmetric about the principal point, so its centroid is exactly the
look-at point. Detections of both stacks, ground-truth clouds and a
manifest of the planted fixtures are written next to the rasters::

    rasters/<area>/<image>.xyzr
    rasters/<area>/<image>.rle
    detections/<pipeline>.<source>.jsonl
    gt/<area>/...
    synth_manifest.json
'''
import json
import logging
import math
import os
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from .depthio import (
    CameraModel, RleMask, back_project, extract_points, write_mask,
    write_xyz_raster,
)
from .detect_ingest import DetectionRecord, Source, dump_detections
from .exceptions import ConfigError, MissingInput
from .pcexport import write_ground_truth
from .taxonomy import default_taxonomy

logger = logging.getLogger(__name__)

SCHEMA = 'insight-synth/1'
CV_DETECTORS = (Source.YOLOE, Source.OBJ365_NANO, Source.SAFETY_NANO)
OCR_CLASSES = (
    'exit_sign', 'fire_alarm_pull', 'fire_alarm_panel', 'electrical_panel',
)
# source-dataset token written to the reference cloud per class
_GT_TOKENS = {
    'door': 'door', 'window': 'window', 'column': 'column',
    'furniture': 'chair', 'wall': 'wall', 'floor': 'floor',
    'ceiling': 'ceiling',
}
_RANDOM_CLASSES = (
    'door', 'window', 'furniture', 'column', 'exit_sign',
    'fire_extinguisher', 'fire_alarm_pull', 'aed', 'electrical_panel',
    'stairs', 'fire_hose_cabinet',
)


@dataclass(frozen=True)
class Fixture:
    class_name: str
    center: Tuple[float, float, float]
    gt_label: Optional[str] = None

    def reference_token(self):
        if self.gt_label:
            return self.gt_label
        return _GT_TOKENS.get(self.class_name, 'clutter')


@dataclass(frozen=True)
class AreaSpec:
    area_id: str
    fixtures: Tuple[Fixture, ...] = ()
    wall_views: int = 0
    wall_center: Tuple[float, float, float] = (0.0, -1.5, 1.5)


@dataclass(frozen=True)
class SynthSpec:
    areas: Tuple[AreaSpec, ...]
    views: int = 4
    jitter: float = 0.05
    depth_noise: float = 0.0
    image_size: int = 64
    focal: float = 500.0
    patch: int = 8
    camera_distance: float = 2.0
    confidence: Dict[str, Tuple[float, float]] = field(
        default_factory=lambda: {
            'sam3': (0.6, 0.99), 'cv': (0.35, 0.95), 'ocr': (0.5, 0.9),
        }
    )
    cv_duplication: int = 2
    low_confidence: int = 0
    ocr_classes: Tuple[str, ...] = OCR_CLASSES

    def __post_init__(self):
        taxonomy = default_taxonomy()
        if self.views < 1:
            raise ConfigError('views must be at least 1.')
        if not 1 <= self.cv_duplication <= len(CV_DETECTORS):
            raise ConfigError(
                f'cv_duplication must lie in [1, {len(CV_DETECTORS)}].'
            )
        if self.patch < 1 or self.patch > self.image_size or \
                (self.image_size - self.patch) % 2:
            raise ConfigError(
                'patch must fit the image and share its parity.'
            )
        if self.jitter < 0 or self.depth_noise < 0:
            raise ConfigError('jitter and depth_noise must be non-negative.')
        if self.camera_distance <= 0 or self.focal <= 0:
            raise ConfigError('camera_distance and focal must be positive.')
        for stack in ('sam3', 'cv', 'ocr'):
            lo, hi = self.confidence.get(stack, (None, None))
            if lo is None or not 0.0 <= lo <= hi <= 1.0:
                raise ConfigError(
                    f'confidence range for {stack} must satisfy '
                    f'0 <= low <= high <= 1.'
                )
        seen = set()
        for area in self.areas:
            if area.area_id in seen:
                raise ConfigError(f'Area {area.area_id!r} appears twice.')
            seen.add(area.area_id)
            for fixture in area.fixtures:
                if fixture.class_name not in taxonomy:
                    raise ConfigError(
                        f'Unknown fixture class {fixture.class_name!r}.'
                    )
                if fixture.gt_label is not None:
                    taxonomy.map_source_label(fixture.gt_label)

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        try:
            areas = tuple(
                AreaSpec(
                    area_id=a['area_id'],
                    fixtures=tuple(
                        Fixture(f['class'], tuple(float(v) for v in f['center']),
                                f.get('gt_label'))
                        for f in a.get('fixtures', ())
                    ),
                    wall_views=int(a.get('wall_views', 0)),
                    wall_center=tuple(a.get('wall_center', (0.0, -1.5, 1.5))),
                )
                for a in data.pop('areas')
            )
            if 'confidence' in data:
                defaults = cls.__dataclass_fields__['confidence'] \
                    .default_factory()
                defaults.update(
                    {k: tuple(v) for k, v in data.pop('confidence').items()}
                )
                data['confidence'] = defaults
            if 'ocr_classes' in data:
                data['ocr_classes'] = tuple(data['ocr_classes'])
            return cls(areas=areas, **data)
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigError(
                f'Invalid synthetic scene spec: {e}.\n'
                f'Each area needs an area_id; each fixture a class and a '
                f'3D center.'
            ) from None

    @classmethod
    def random(cls, seed, n_areas=2, n_fixtures=6, views=4, wall_views=3):
        '''
        Draw a spec from `seed`; fixtures sit on a 2 m grid.
        '''
        rng = np.random.default_rng(seed)
        areas = []
        for a in range(n_areas):
            cells = rng.permutation(max(n_fixtures, 9))[:n_fixtures]
            fixtures = tuple(
                Fixture(
                    _RANDOM_CLASSES[int(rng.integers(len(_RANDOM_CLASSES)))],
                    (2.0 * (c % 3), 2.0 * (c // 3), 1.0 + 0.5 * (c % 2)),
                )
                for c in sorted(int(c) for c in cells)
            )
            areas.append(AreaSpec(f'area_{a + 1}', fixtures, wall_views))
        return cls(areas=tuple(areas), views=views)

    def to_dict(self):
        data = asdict(self)
        for area in data['areas']:
            for fixture in area['fixtures']:
                fixture['class'] = fixture.pop('class_name')
        return data


def load_spec(path):
    try:
        with open(path, encoding='utf-8') as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise MissingInput(f'Scene spec {path} does not exist.') from None
    except json.JSONDecodeError as e:
        raise ConfigError(f'Scene spec {path} is not valid JSON: {e}.') \
            from None
    return SynthSpec.from_dict(data)


class _Renderer:
    def __init__(self, spec, rng):
        self.spec = spec
        self.rng = rng
        size = spec.image_size
        self.cx = self.cy = (size - 1) / 2
        lo = (size - spec.patch) // 2
        self.box = (float(lo), float(lo), float(lo + spec.patch),
                    float(lo + spec.patch))
        self.mask = RleMask(
            size, size,
            tuple((r * size + lo, spec.patch) for r in range(lo, lo + spec.patch)),
        )

    def render(self, target, heading):
        '''
        Raster of a patch centred on `target`, seen horizontally from
        `heading` radians.
        '''
        spec = self.spec
        target = np.asarray(target, dtype=np.float64)
        eye = target + spec.camera_distance * np.array(
            [math.cos(heading), math.sin(heading), 0.0]
        )
        camera = CameraModel.look_at(
            eye, target, spec.focal, spec.focal, self.cx, self.cy
        )
        depth = np.full((spec.image_size, spec.image_size), np.nan)
        x0, y0, x1, y1 = (int(v) for v in self.box)
        patch = np.full((y1 - y0, x1 - x0), spec.camera_distance)
        if spec.depth_noise:
            patch = patch + self.rng.normal(0.0, spec.depth_noise, patch.shape)
        depth[y0:y1, x0:x1] = np.clip(patch, 0.0, None)
        return back_project(depth, camera)

    def offset(self, view):
        angle = 2 * math.pi * view / self.spec.views
        return self.spec.jitter * np.array(
            [math.cos(angle), math.sin(angle), 0.0]
        )


def _confidence(rng, bounds):
    lo, hi = bounds
    return round(float(rng.uniform(lo, hi)), 4)


def generate(out_dir, spec=None, seed=0, provenance=None):
    '''
    Write a synthetic dataset under `out_dir` and return its manifest.
    '''
    spec = spec or SynthSpec.random(seed)
    rng = np.random.default_rng(seed)
    renderer = _Renderer(spec, rng)
    records = {}
    index = Counter()

    def emit(pipeline, source, image_id, area_id, class_name, confidence,
             box=None, mask=None):
        key = (pipeline, source)
        records.setdefault(key, []).append(DetectionRecord(
            image_id=image_id, area_id=area_id, class_name=class_name,
            box2d=box or renderer.box, confidence=confidence, source=source,
            mask=mask, index=index[key],
        ))
        index[key] += 1

    areas_manifest = {}
    for area in spec.areas:
        raster_dir = os.path.join(out_dir, 'rasters', area.area_id)
        os.makedirs(raster_dir, exist_ok=True)
        gt_points, gt_labels = [], []
        fixtures_manifest = []
        views = []
        for f, fixture in enumerate(area.fixtures):
            for v in range(spec.views):
                target = np.asarray(fixture.center) + renderer.offset(v)
                heading = 2 * math.pi * (v + 0.5) / spec.views
                views.append((f'{area.area_id}_f{f:03d}_v{v:02d}',
                              fixture.class_name, fixture.reference_token(),
                              target, heading))
            fixtures_manifest.append({
                'class': fixture.class_name,
                'center': list(fixture.center),
                'reference_label': fixture.reference_token(),
            })
        for v in range(area.wall_views):
            target = np.asarray(area.wall_center) + np.array([1.0 * v, 0, 0])
            views.append((f'{area.area_id}_wall_v{v:02d}', 'wall', 'wall',
                           target, math.pi / 2))

        for image_id, class_name, token, target, heading in views:
            raster = renderer.render(target, heading)
            write_xyz_raster(os.path.join(raster_dir, f'{image_id}.xyzr'),
                             raster)
            mask_path = f'{area.area_id}/{image_id}.rle'
            write_mask(os.path.join(out_dir, 'rasters', mask_path),
                       renderer.mask)
            points = extract_points(raster, renderer.mask)
            gt_points.append(points)
            gt_labels.extend([token] * len(points))

            emit('sam3', Source.SAM3, image_id, area.area_id, class_name,
                 _confidence(rng, spec.confidence['sam3']), mask=mask_path)
            for _ in range(spec.low_confidence):
                emit('sam3', Source.SAM3, image_id, area.area_id, class_name,
                     0.05, mask=mask_path)
            if class_name == 'wall':
                continue
            for source in CV_DETECTORS[:spec.cv_duplication]:
                emit('cv', source, image_id, area.area_id, class_name,
                     _confidence(rng, spec.confidence['cv']), mask=mask_path)
            if class_name in spec.ocr_classes:
                x0, y0, x1, y1 = renderer.box
                inner = (x0 + 2, y0 + 2, x1 - 2, y1 - 3)
                emit('cv', Source.OCR, image_id, area.area_id, class_name,
                     _confidence(rng, spec.confidence['ocr']), box=inner)

        coord = np.vstack(gt_points) if gt_points else np.zeros((0, 3))
        write_ground_truth(
            os.path.join(out_dir, 'gt', area.area_id), area.area_id, coord,
            gt_labels, provenance,
        )
        reference = Counter(f['class'] for f in fixtures_manifest)
        if area.wall_views:
            reference['wall'] += 1
        areas_manifest[area.area_id] = {
            'fixtures': fixtures_manifest,
            'wall_views': area.wall_views,
            'reference_counts': dict(sorted(reference.items())),
            'views': len(views),
        }

    detection_dir = os.path.join(out_dir, 'detections')
    os.makedirs(detection_dir, exist_ok=True)
    files = {}
    for (pipeline, source), recs in sorted(
            records.items(), key=lambda kv: (kv[0][0], kv[0][1].rank)):
        name = f'{pipeline}.{source.value}.jsonl'
        with open(os.path.join(detection_dir, name), 'w',
                  encoding='utf-8') as fh:
            fh.write(dump_detections(recs))
        files.setdefault(pipeline, []).append(f'detections/{name}')

    planted = Counter()
    for entry in areas_manifest.values():
        planted.update(entry['reference_counts'])
    manifest = {
        'schema': SCHEMA,
        'seed': seed,
        'spec': spec.to_dict(),
        'areas': areas_manifest,
        'planted': dict(sorted(planted.items())),
        'detection_files': files,
        'provenance': provenance,
    }
    with open(os.path.join(out_dir, 'synth_manifest.json'), 'w',
              encoding='utf-8') as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write('\n')
    logger.info(
        'Synthesized %d areas with %d planted instances under %s.',
        len(spec.areas), sum(planted.values()), out_dir,
    )
    return manifest
