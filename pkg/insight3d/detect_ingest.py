'''
Detection records from the vision stacks.

Loading validates the `insight-det/1` JSONL schema; gating applies the
per-source confidence floors and verifier verdicts; `dedup_union` merges
the outputs of several detectors run over the same image.
'''
import enum
import json
import logging
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Tuple

from .exceptions import ConfigError, DetectionSchemaError, MissingInput
from .taxonomy import default_taxonomy

logger = logging.getLogger(__name__)

SCHEMA = 'insight-det/1'


class Source(enum.Enum):
    SAM3 = 'sam3'
    YOLOE = 'yoloe'
    OBJ365_NANO = 'obj365_nano'
    SAFETY_NANO = 'safety_nano'
    OCR = 'ocr'

    @property
    def rank(self):
        return _SOURCE_ORDER[self]

    @property
    def is_visual(self):
        return self is not Source.OCR


_SOURCE_ORDER = {s: i for i, s in enumerate(Source)}


class Verdict(enum.Enum):
    UNVERIFIED = 'unverified'
    ACCEPTED = 'accepted'
    REJECTED = 'rejected'


@dataclass(frozen=True)
class DetectionRecord:
    image_id: str
    area_id: str
    class_name: str
    box2d: Tuple[float, float, float, float]
    confidence: float
    source: Source
    verdict: Verdict = Verdict.UNVERIFIED
    mask: Optional[str] = None
    index: int = 0

    @property
    def box_area(self):
        x0, y0, x1, y1 = self.box2d
        return (x1 - x0) * (y1 - y0)

    @property
    def box_center(self):
        x0, y0, x1, y1 = self.box2d
        return ((x0 + x1) / 2, (y0 + y1) / 2)

    def to_json(self):
        return {
            'schema': SCHEMA,
            'image_id': self.image_id,
            'area_id': self.area_id,
            'class': self.class_name,
            'box2d': list(self.box2d),
            'mask': self.mask,
            'confidence': self.confidence,
            'source': self.source.value,
            'verifier_verdict': self.verdict.value,
        }


@dataclass(frozen=True)
class GateConfig:
    thresholds: Mapping[str, float] = field(default_factory=lambda: {
        Source.SAM3.value: 0.30,
        Source.YOLOE.value: 0.20,
        Source.OBJ365_NANO.value: 0.30,
        Source.SAFETY_NANO.value: 0.30,
        Source.OCR.value: 0.30,
    })
    iou_threshold: float = 0.50
    class_scoped: bool = True

    def __post_init__(self):
        for name, value in self.thresholds.items():
            if name not in {s.value for s in Source}:
                raise ConfigError(f'Gate threshold given for unknown source {name!r}.')
            if not 0.0 <= value <= 1.0:
                raise ConfigError(
                    f'Gate threshold for {name} must lie in [0, 1].'
                )
        if not 0.0 <= self.iou_threshold <= 1.0:
            raise ConfigError('IoU threshold must lie in [0, 1].')

    def threshold(self, source):
        return self.thresholds.get(source.value, 0.0)


@dataclass
class Rejection:
    line_no: int
    reason: str


@dataclass
class LoadResult:
    records: List[DetectionRecord]
    rejections: List[Rejection] = field(default_factory=list)

    @property
    def rejected_count(self):
        return len(self.rejections)


# loading

_FIELDS = {
    'schema', 'image_id', 'area_id', 'class', 'box2d', 'mask',
    'confidence', 'source', 'verifier_verdict',
}


def _record_from_json(obj, index, taxonomy):
    '''
    Validate one decoded JSON object; ValueError names the violation.
    '''
    missing = _FIELDS - {'mask', 'verifier_verdict'} - set(obj)
    if missing:
        raise ValueError(f'missing fields {", ".join(sorted(missing))}')
    extra = set(obj) - _FIELDS
    if extra:
        raise ValueError(f'unexpected fields {", ".join(sorted(extra))}')
    if obj['class'] not in taxonomy:
        raise ValueError(f'unknown class {obj["class"]!r}')
    box = obj['box2d']
    if not isinstance(box, list) or len(box) != 4:
        raise ValueError('box2d must be four numbers')
    box = tuple(float(v) for v in box)
    if not all(math.isfinite(v) for v in box):
        raise ValueError('box2d must be finite')
    if not (box[0] < box[2] and box[1] < box[3]):
        raise ValueError('box2d must have x_min < x_max and y_min < y_max')
    confidence = obj['confidence']
    if isinstance(confidence, bool) or \
            not isinstance(confidence, (int, float)):
        raise ValueError('confidence must be a number')
    if not 0.0 <= confidence <= 1.0:
        raise ValueError(f'confidence {confidence} outside [0, 1]')
    try:
        source = Source(obj['source'])
    except ValueError:
        raise ValueError(f'unknown source {obj["source"]!r}') from None
    try:
        verdict = Verdict(obj.get('verifier_verdict') or 'unverified')
    except ValueError:
        raise ValueError(
            f'unknown verifier verdict {obj["verifier_verdict"]!r}'
        ) from None
    for key in ('image_id', 'area_id'):
        if not isinstance(obj[key], str) or not obj[key]:
            raise ValueError(f'{key} must be a non-empty string')
    return DetectionRecord(
        image_id=obj['image_id'],
        area_id=obj['area_id'],
        class_name=obj['class'],
        box2d=box,
        confidence=float(confidence),
        source=source,
        verdict=verdict,
        mask=obj.get('mask'),
        index=index,
    )


def parse_detections(lines, taxonomy=None, start_index=0) -> LoadResult:
    '''
    Parse JSONL detection lines.

    Lines that are not JSON objects of this schema raise
    `DetectionSchemaError`; records that parse but violate a field
    constraint are rejected and counted.
    '''
    taxonomy = taxonomy or default_taxonomy()
    result = LoadResult(records=[])
    index = start_index
    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DetectionSchemaError(
                f'not valid JSON ({exc.msg})', line_no
            ) from None
        if not isinstance(obj, dict):
            raise DetectionSchemaError('expected a JSON object', line_no)
        if obj.get('schema') != SCHEMA:
            raise DetectionSchemaError(
                f'schema must be {SCHEMA!r}, got {obj.get("schema")!r}',
                line_no,
            )
        try:
            record = _record_from_json(obj, index, taxonomy)
        except (ValueError, TypeError) as exc:
            result.rejections.append(Rejection(line_no, str(exc)))
            logger.warning('Rejected detection on line %d: %s', line_no, exc)
            continue
        result.records.append(record)
        index += 1
    return result


def load_detections(path, taxonomy=None, start_index=0) -> LoadResult:
    try:
        with open(path, encoding='utf-8') as fh:
            return parse_detections(fh, taxonomy, start_index)
    except FileNotFoundError:
        raise MissingInput(f'Detection file {path} does not exist.') from None


def dump_detections(records) -> str:
    return ''.join(
        json.dumps(r.to_json(), sort_keys=True) + '\n' for r in records
    )


# gating and dedup

def gate_reason(record, config: GateConfig):
    '''
    Return why `record` fails the gate, or None when it passes.
    '''
    if record.verdict is Verdict.REJECTED:
        return 'verifier_rejected'
    if record.confidence < config.threshold(record.source):
        return 'below_gate'
    return None


def gate(records, config: GateConfig = None):
    config = config or GateConfig()
    return [r for r in records if gate_reason(r, config) is None]


def iou(a, b):
    ix = min(a[2], b[2]) - max(a[0], b[0])
    iy = min(a[3], b[3]) - max(a[1], b[1])
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    union = (a[2] - a[0]) * (a[3] - a[1]) + \
        (b[2] - b[0]) * (b[3] - b[1]) - inter
    return inter / union


def dedup_order(record):
    return (-record.confidence, record.source.rank, record.index)


def dedup_union(records, iou_threshold=0.5, class_scoped=True):
    '''
    Collapse overlapping detections of one image.

    Records are visited highest confidence first; a record whose box
    overlaps an already kept one (same class unless `class_scoped` is
    off) at IoU >= `iou_threshold` is absorbed. Every kept pair then
    overlaps below the threshold, so a second pass changes nothing.
    '''
    kept = []
    for record in sorted(records, key=dedup_order):
        absorbed = any(
            (not class_scoped or k.class_name == record.class_name)
            and iou(k.box2d, record.box2d) >= iou_threshold
            for k in kept
        )
        if not absorbed:
            kept.append(record)
    return kept


def dedup_all(records, iou_threshold=0.5, class_scoped=True):
    '''
    Run `dedup_union` per image; images come out in id order.
    '''
    by_image = defaultdict(list)
    for record in records:
        by_image[record.image_id].append(record)
    out = []
    for image_id in sorted(by_image):
        out.extend(dedup_union(by_image[image_id], iou_threshold, class_scoped))
    return out


# statistics

def small_object_stats(records, area_threshold=1024.0, classes=None):
    '''
    Fraction of each class's boxes smaller than `area_threshold` px^2.

    Classes listed in `classes` but absent from `records` map to None.
    '''
    totals, small = Counter(), Counter()
    for r in records:
        totals[r.class_name] += 1
        if r.box_area < area_threshold:
            small[r.class_name] += 1
    names = sorted(set(classes or ()) | set(totals))
    return {
        name: (small[name] / totals[name] if totals[name] else None)
        for name in names
    }


def ocr_exclusive_count(records, match_radius=64.0, class_scoped=True):
    '''
    Per class, the OCR detections with no visual detection of the same
    image whose box centre lies within `match_radius` pixels.
    '''
    visual = defaultdict(list)
    for r in records:
        if r.source.is_visual:
            visual[r.image_id].append(r)
    counts = Counter()
    for r in records:
        if r.source.is_visual:
            continue
        cx, cy = r.box_center
        matched = False
        for v in visual[r.image_id]:
            if class_scoped and v.class_name != r.class_name:
                continue
            vx, vy = v.box_center
            if math.hypot(vx - cx, vy - cy) <= match_radius:
                matched = True
                break
        counts[r.class_name] += 0 if matched else 1
    return dict(sorted(counts.items()))


def verification_stats(records):
    '''
    Counts per verifier verdict with the share of verified records that
    were accepted.
    '''
    counts = Counter(r.verdict.value for r in records)
    verified = counts[Verdict.ACCEPTED.value] + counts[Verdict.REJECTED.value]
    return {
        'counts': {v.value: counts[v.value] for v in Verdict},
        'rejected_fraction': (
            counts[Verdict.REJECTED.value] / len(records) if records else None
        ),
        'accepted_fraction_of_verified': (
            counts[Verdict.ACCEPTED.value] / verified if verified else None
        ),
    }


def source_shares(records) -> Dict[str, Optional[float]]:
    counts = Counter(r.source.value for r in records)
    total = sum(counts.values())
    return {
        s.value: (counts[s.value] / total if total else None) for s in Source
    }


@dataclass
class IngestStats:
    raw: int = 0
    load_rejected: int = 0
    verifier_rejected: int = 0
    below_gate: int = 0
    duplicate: int = 0
    survived: int = 0
    load_rejections: List[dict] = field(default_factory=list)

    @property
    def survival(self):
        return self.survived / self.raw if self.raw else None

    def to_json(self):
        return {
            'raw': self.raw,
            'load_rejected': self.load_rejected,
            'verifier_rejected': self.verifier_rejected,
            'below_gate': self.below_gate,
            'duplicate': self.duplicate,
            'survived': self.survived,
            'survival': self.survival,
            'load_rejections': self.load_rejections,
        }


def ingest(loads, config: GateConfig = None):
    '''
    Gate and deduplicate the records of several loaded detector files.

    Return `(survivors, discarded, stats)` where `discarded` pairs every
    dropped record with its reason.
    '''
    config = config or GateConfig()
    stats = IngestStats()
    passed, discarded = [], []
    for load in loads:
        stats.load_rejected += load.rejected_count
        stats.load_rejections.extend(
            {'line_no': r.line_no, 'reason': r.reason}
            for r in load.rejections
        )
        for record in load.records:
            stats.raw += 1
            reason = gate_reason(record, config)
            if reason is None:
                passed.append(record)
            else:
                discarded.append((record, reason))
                setattr(stats, reason, getattr(stats, reason) + 1)
    stats.raw += stats.load_rejected
    survivors = dedup_all(passed, config.iou_threshold, config.class_scoped)
    kept = {id(r) for r in survivors}
    for record in passed:
        if id(record) not in kept:
            discarded.append((record, 'duplicate'))
            stats.duplicate += 1
    stats.survived = len(survivors)
    return survivors, discarded, stats
