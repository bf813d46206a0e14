'''
Pipeline configuration.

Three layers, later ones winning: the defaults below, the `INSIGHT`
Django setting, and an optional JSON file. Sections merge key by key so
a file may override a single threshold.
'''
import copy
import hashlib
import json
import logging
from dataclasses import dataclass, field
from typing import Optional, Tuple

import django
import networkx
import numpy
import scipy
from django.conf import settings

from . import __version__
from .budget import BudgetConfig
from .detect_ingest import GateConfig
from .exceptions import ConfigError, MissingInput
from .fusion import FusionConfig
from .plausibility import PlausibilityConfig
from .scenegraph import FloorModel
from .taxonomy import Role, Taxonomy

logger = logging.getLogger(__name__)

# keys that never change an artifact
_UNHASHED = ('jobs',)

DEFAULTS = {
    'gate': {
        'thresholds': {
            'sam3': 0.30, 'yoloe': 0.20, 'obj365_nano': 0.30,
            'safety_nano': 0.30, 'ocr': 0.30,
        },
        'iou_threshold': 0.50,
        'class_scoped': True,
    },
    'fusion': {'d_merge': 0.5, 'up_axis': 'z'},
    'plausibility': {'tau': 0.70},
    'budget': {
        'window': 30.0,
        'bandwidths': [1e6, 5e6, 25e6],
        'overhead': 1.0,
    },
    'eval': {
        'match_radius': 1.0,
        'coverage_radius': 0.1,
        'retention_thresholds': [0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9],
        'small_object_area': 1024.0,
        'ocr_radius': 64.0,
    },
    'floors': None,
    'role': Role.FULL.value,
    'paths': {},
    'seed': 0,
    'jobs': 1,
    'taxonomy': {},
}


@dataclass(frozen=True)
class EvalConfig:
    match_radius: float = 1.0
    coverage_radius: float = 0.1
    retention_thresholds: Tuple[float, ...] = (
        0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9,
    )
    small_object_area: float = 1024.0
    ocr_radius: float = 64.0

    def __post_init__(self):
        object.__setattr__(
            self, 'retention_thresholds', tuple(self.retention_thresholds)
        )
        for name in ('match_radius', 'coverage_radius', 'small_object_area',
                     'ocr_radius'):
            if not getattr(self, name) > 0:
                raise ConfigError(f'{name} must be positive.')


@dataclass(frozen=True)
class PipelineConfig:
    gate: GateConfig = field(default_factory=GateConfig)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    plausibility: PlausibilityConfig = field(
        default_factory=PlausibilityConfig
    )
    budget: BudgetConfig = field(default_factory=BudgetConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    floors: FloorModel = field(default_factory=FloorModel.single)
    role: Role = Role.FULL
    paths: dict = field(default_factory=dict)
    seed: int = 0
    jobs: int = 1
    taxonomy: Taxonomy = field(default_factory=Taxonomy)
    raw: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def config_hash(self):
        return config_hash(self.raw)

    def provenance(self, schema):
        return provenance(schema, self.raw)


def _merge(base, override):
    merged = copy.deepcopy(base)
    for key, value in (override or {}).items():
        if isinstance(merged.get(key), dict) and isinstance(value, dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def _section(cls, data, name):
    try:
        return cls(**data)
    except TypeError as e:
        raise ConfigError(
            f'Invalid [{name}] section: {e}.\n'
            f'Check the key names against the documented defaults.'
        ) from None


def build(data) -> PipelineConfig:
    unknown = set(data) - set(DEFAULTS)
    if unknown:
        raise ConfigError(
            f'Unknown configuration keys: {", ".join(sorted(unknown))}.'
        )
    try:
        role = Role(data['role'])
    except ValueError:
        raise ConfigError(
            f'Unknown role {data["role"]!r}; expected one of '
            f'{", ".join(r.value for r in Role)}.'
        ) from None
    jobs = data['jobs']
    if not isinstance(jobs, int) or jobs < 1:
        raise ConfigError('jobs must be a positive integer.')
    return PipelineConfig(
        gate=_section(GateConfig, data['gate'], 'gate'),
        fusion=_section(FusionConfig, data['fusion'], 'fusion'),
        plausibility=_section(
            PlausibilityConfig, data['plausibility'], 'plausibility'
        ),
        budget=_section(BudgetConfig, data['budget'], 'budget'),
        eval=_section(EvalConfig, data['eval'], 'eval'),
        floors=FloorModel(
            tuple(data['floors']) if data['floors'] else None
        ),
        role=role,
        paths=dict(data['paths']),
        seed=int(data['seed']),
        jobs=jobs,
        taxonomy=Taxonomy.from_dict(data['taxonomy']),
        raw=data,
    )


def read_config_file(path):
    try:
        with open(path, encoding='utf-8') as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise MissingInput(f'Config file {path} does not exist.') from None
    except json.JSONDecodeError as e:
        raise ConfigError(f'Config file {path} is not valid JSON: {e}.') \
            from None


def load_config(path=None, **overrides) -> PipelineConfig:
    '''
    Merge defaults, `settings.INSIGHT`, the JSON file at `path` (or the
    one named by the `config` key of `settings.INSIGHT`) and keyword
    overrides, in that order.
    '''
    from_settings = dict(getattr(settings, 'INSIGHT', {}) or {})
    path = path or from_settings.pop('config', None)
    from_settings.pop('config', None)
    data = _merge(DEFAULTS, from_settings)
    if path:
        logger.debug('Reading configuration from %s.', path)
        data = _merge(data, read_config_file(path))
    data = _merge(data, {k: v for k, v in overrides.items() if v is not None})
    return build(data)


def canonical_json(data):
    return json.dumps(data, sort_keys=True, separators=(',', ':'))


def config_hash(data):
    data = {k: v for k, v in data.items() if k not in _UNHASHED}
    return hashlib.sha256(canonical_json(data).encode('utf-8')).hexdigest()


def versions():
    return {
        'insight3d': __version__,
        'django': django.get_version(),
        'networkx': networkx.__version__,
        'numpy': numpy.__version__,
        'scipy': scipy.__version__,
    }


def provenance(schema, data: Optional[dict] = None):
    return {
        'schema': schema,
        'config_hash': config_hash(data or {}),
        'versions': versions(),
    }
