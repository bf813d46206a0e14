'''
Evaluation metrics: per-point accuracy against a labeled reference
cloud, spatial coverage, inter-pipeline complementarity, confidence
retention, detection ratios and fragmentation against the caps.
'''
import json
import logging
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
from scipy.spatial import cKDTree

from .exceptions import EmptyIndexError, FrameMismatchError
from .fusion import fragmentation
from .taxonomy import STRUCTURAL_SURFACES, default_taxonomy

logger = logging.getLogger(__name__)

SCHEMA = 'insight-eval/1'
COMPLEMENTARITY_EXCLUDED = STRUCTURAL_SURFACES | {'ramp'}

# relative slack on the ball query that recovers every tied neighbour
_TIE_SLACK = 1e-9


class NnIndex:
    '''
    Exact nearest-neighbour index over 3D points.

    Distance ties resolve to the lowest point index. An index over an
    empty set builds fine and raises EmptyIndexError on query.
    '''
    def __init__(self, points, labels=None):
        self.points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        self.labels = None if labels is None else np.asarray(labels)
        if self.labels is not None and len(self.labels) != len(self.points):
            raise ValueError('points and labels differ in length')
        self._tree = cKDTree(self.points) if len(self.points) else None

    def __len__(self):
        return len(self.points)

    def query(self, queries):
        '''
        Return (distances, indices) of the nearest point to each query.
        '''
        if self._tree is None:
            raise EmptyIndexError('Cannot query an empty point index.')
        queries = np.asarray(queries, dtype=np.float64).reshape(-1, 3)
        if len(queries) == 0:
            return np.zeros(0), np.zeros(0, dtype=np.int64)
        approx, _ = self._tree.query(queries, k=1)
        radii = approx * (1 + _TIE_SLACK) + _TIE_SLACK
        candidates = self._tree.query_ball_point(queries, radii)
        distances = np.empty(len(queries))
        indices = np.empty(len(queries), dtype=np.int64)
        for n, (query, cand) in enumerate(zip(queries, candidates)):
            cand = np.sort(np.asarray(cand, dtype=np.int64))
            sq = ((self.points[cand] - query) ** 2).sum(axis=1)
            best = int(np.argmin(sq))
            indices[n] = cand[best]
            distances[n] = math.sqrt(sq[best])
        return distances, indices


def build_index(points, labels=None):
    return NnIndex(points, labels)


# per-point accuracy

@dataclass
class AreaAccuracy:
    area_id: str
    correct: int = 0
    counted: int = 0
    excluded: int = 0
    classes: Dict[str, List[int]] = field(default_factory=dict)

    @property
    def accuracy(self):
        return self.correct / self.counted if self.counted else None


@dataclass
class AccuracyReport:
    areas: List[AreaAccuracy]

    @property
    def total(self):
        return sum(a.counted for a in self.areas)

    @property
    def weights(self):
        total = self.total
        return {
            a.area_id: a.counted / total if total else None
            for a in self.areas
        }

    @property
    def overall(self):
        '''
        Area-weighted mean accuracy; None when nothing was counted.
        '''
        total = self.total
        if not total:
            return None
        return sum(
            a.counted / total * a.accuracy for a in self.areas if a.counted
        )

    def per_class(self):
        pooled = defaultdict(lambda: [0, 0])
        for area in self.areas:
            for name, (correct, counted) in area.classes.items():
                pooled[name][0] += correct
                pooled[name][1] += counted
        return {
            name: {
                'correct': c, 'counted': n, 'accuracy': c / n if n else None,
            }
            for name, (c, n) in sorted(pooled.items())
        }

    def to_json(self):
        weights = self.weights
        return {
            'overall': self.overall,
            'counted': self.total,
            'areas': {
                a.area_id: {
                    'accuracy': a.accuracy,
                    'counted': a.counted,
                    'correct': a.correct,
                    'excluded': a.excluded,
                    'weight': weights[a.area_id],
                    'classes': {
                        name: {
                            'correct': c, 'counted': n,
                            'accuracy': c / n if n else None,
                        }
                        for name, (c, n) in sorted(a.classes.items())
                    },
                }
                for a in self.areas
            },
            'classes': self.per_class(),
        }


def _check_frames(pred, gt):
    if pred.frame != gt.frame:
        raise FrameMismatchError(
            f'Prediction frame {pred.frame!r} differs from reference frame '
            f'{gt.frame!r}.\nExport both clouds in the same world frame.'
        )


def area_accuracy(pred, gt, taxonomy=None, index=None) -> AreaAccuracy:
    '''
    Per-point accuracy of one area.

    Only predicted points whose class the reference dataset also labels
    are scored; a point whose nearest reference label maps to nothing
    leaves the denominator.
    '''
    _check_frames(pred, gt)
    taxonomy = taxonomy or default_taxonomy()
    result = AreaAccuracy(pred.area_id)
    overlapping = taxonomy.overlapping_classes()
    names = np.array(
        [taxonomy.by_id(int(s)).name for s in pred.segment], dtype=object
    )
    scored = np.array([n in overlapping for n in names], dtype=bool)
    if not scored.any():
        return result
    if index is None:
        index = NnIndex(gt.coord, gt.labels)
    _, nearest = index.query(np.asarray(pred.coord, dtype=np.float64)[scored])
    mapped = {}
    for name, gt_label in zip(names[scored], gt.labels[nearest]):
        if gt_label not in mapped:
            mapped[gt_label] = taxonomy.map_source_label(gt_label)
        label = mapped[gt_label]
        if label.is_excluded:
            result.excluded += 1
            continue
        counts = result.classes.setdefault(name, [0, 0])
        counts[1] += 1
        result.counted += 1
        if label.class_name == name:
            counts[0] += 1
            result.correct += 1
    return result


def per_point_accuracy(pairs, taxonomy=None) -> AccuracyReport:
    '''
    Accuracy over (pred, gt) cloud pairs, one pair per area.
    '''
    areas = [area_accuracy(pred, gt, taxonomy) for pred, gt in pairs]
    report = AccuracyReport(areas)
    logger.info('Per-point accuracy over %d areas: %s.', len(areas),
                report.overall)
    return report


# spatial coverage

@dataclass
class CoverageResult:
    fraction: Optional[float]
    matched: int
    total: int
    mismatch: Optional[float] = None
    neighbour_labels: List[dict] = field(default_factory=list)

    def to_json(self):
        return {
            'fraction': self.fraction,
            'matched': self.matched,
            'total': self.total,
            'mismatch': self.mismatch,
            'neighbour_labels': self.neighbour_labels,
        }


def spatial_coverage(pred_points, gt_points, gt_labels=None, radius=0.1,
                     class_name=None, taxonomy=None, top=3) -> CoverageResult:
    '''
    Fraction of `pred_points` within `radius` of a reference point.

    With `gt_labels`, also reports the most common reference labels
    among the matched neighbours and, with `class_name`, the share of
    matched neighbours whose mapped label disagrees with it.
    '''
    pred_points = np.asarray(pred_points, dtype=np.float64).reshape(-1, 3)
    total = len(pred_points)
    if total == 0:
        return CoverageResult(None, 0, 0)
    gt_points = np.asarray(gt_points, dtype=np.float64).reshape(-1, 3)
    if len(gt_points) == 0:
        return CoverageResult(0.0, 0, total)
    distances, nearest = NnIndex(gt_points).query(pred_points)
    hit = distances <= radius
    result = CoverageResult(float(hit.sum()) / total, int(hit.sum()), total)
    if gt_labels is None or not hit.any():
        return result
    labels = np.asarray(gt_labels)[nearest[hit]]
    counts = Counter(labels.tolist())
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:top]
    result.neighbour_labels = [
        {'label': label, 'pct': 100.0 * n / len(labels)}
        for label, n in ranked
    ]
    if class_name is not None:
        taxonomy = taxonomy or default_taxonomy()
        agree = sum(
            n for label, n in counts.items()
            if taxonomy.map_source_label(label).class_name == class_name
        )
        result.mismatch = 1.0 - agree / len(labels)
    return result


# complementarity

@dataclass
class ClassOverlap:
    both: int = 0
    a_only: int = 0
    b_only: int = 0

    @property
    def unique(self):
        return self.both + self.a_only + self.b_only

    def shares(self):
        unique = self.unique
        if not unique:
            return None
        return {
            'both': self.both / unique,
            'a_only': self.a_only / unique,
            'b_only': self.b_only / unique,
        }


@dataclass
class ComplementarityReport:
    radius: float
    excluded: List[str]
    classes: Dict[str, ClassOverlap] = field(default_factory=dict)

    @property
    def totals(self):
        total = ClassOverlap()
        for overlap in self.classes.values():
            total.both += overlap.both
            total.a_only += overlap.a_only
            total.b_only += overlap.b_only
        return total

    def class_averaged_shares(self):
        shares = [o.shares() for o in self.classes.values() if o.unique]
        if not shares:
            return None
        return {
            key: sum(s[key] for s in shares) / len(shares)
            for key in ('both', 'a_only', 'b_only')
        }

    @property
    def gain_over_a(self):
        '''
        Extra unique instances over what A finds alone.
        '''
        totals = self.totals
        n_a = totals.both + totals.a_only
        return totals.b_only / n_a if n_a else None

    def to_json(self):
        totals = self.totals
        return {
            'radius': self.radius,
            'excluded': self.excluded,
            'classes': {
                name: {
                    'both': o.both, 'a_only': o.a_only, 'b_only': o.b_only,
                    'unique': o.unique, 'shares': o.shares(),
                }
                for name, o in sorted(self.classes.items())
            },
            'total': {
                'both': totals.both, 'a_only': totals.a_only,
                'b_only': totals.b_only, 'unique': totals.unique,
            },
            'instance_weighted_shares': totals.shares(),
            'class_averaged_shares': self.class_averaged_shares(),
            'gain_over_a': self.gain_over_a,
        }


def _centroids(instances):
    return np.array(
        [np.asarray(i.centroid, dtype=np.float64) for i in instances]
    ).reshape(-1, 3)


def match_greedy(a_centroids, b_centroids, radius):
    '''
    One-to-one greedy matching by ascending distance among pairs within
    `radius`. Returns the matched (i, j) pairs.

    Pairs of equal distance go by (min(i, j), max(i, j)) so the result
    does not depend on which side is called A.
    '''
    a_centroids = np.asarray(a_centroids, dtype=np.float64).reshape(-1, 3)
    b_centroids = np.asarray(b_centroids, dtype=np.float64).reshape(-1, 3)
    if not len(a_centroids) or not len(b_centroids):
        return []
    tree_a, tree_b = cKDTree(a_centroids), cKDTree(b_centroids)
    near = tree_a.query_ball_tree(tree_b, radius * (1 + _TIE_SLACK))
    pairs = []
    for i, js in enumerate(near):
        for j in js:
            d = math.sqrt(((a_centroids[i] - b_centroids[j]) ** 2).sum())
            if d <= radius:
                pairs.append((d, min(i, j), max(i, j), i, j))
    pairs.sort()
    used_a, used_b, matched = set(), set(), []
    for _, _, _, i, j in pairs:
        if i not in used_a and j not in used_b:
            used_a.add(i)
            used_b.add(j)
            matched.append((i, j))
    return matched


def complementarity(a_instances, b_instances, radius=1.0,
                    excluded=COMPLEMENTARITY_EXCLUDED):
    '''
    Partition same-class instances of two pipelines into found-by-both,
    A-only and B-only at a centroid match radius.

    Instances only match within their own area.
    '''
    groups = defaultdict(lambda: ([], []))
    for side, instances in enumerate((a_instances, b_instances)):
        for instance in instances:
            key = (instance.class_name, getattr(instance, 'area_id', ''))
            groups[key][side].append(instance)
    report = ComplementarityReport(radius, sorted(excluded))
    for name, area in sorted(groups):
        if name in excluded:
            continue
        a, b = groups[(name, area)]
        matched = match_greedy(_centroids(a), _centroids(b), radius)
        overlap = report.classes.setdefault(name, ClassOverlap())
        overlap.both += len(matched)
        overlap.a_only += len(a) - len(matched)
        overlap.b_only += len(b) - len(matched)
    return report


# retention and ratios

def _pct(n, total):
    return 100.0 * n / total if total else None


def retention_curve(instances, thresholds, safety_classes=None):
    '''
    Share of instances with confidence >= tau, over all classes and over
    the safety classes only.
    '''
    if safety_classes is None:
        safety_classes = default_taxonomy().safety_classes()
    confidences = np.array([i.confidence for i in instances], dtype=float)
    safety = np.array(
        [i.class_name in safety_classes for i in instances], dtype=bool
    )
    curve = []
    for tau in thresholds:
        kept = confidences >= tau
        curve.append({
            'threshold': tau,
            'all': _pct(int(kept.sum()), len(confidences)),
            'safety': _pct(int((kept & safety).sum()), int(safety.sum())),
        })
    return curve


def detection_ratio(a_counts, b_counts, classes=None):
    '''
    A count over B count per class; B = 0 is reported as '>1000x'.
    '''
    classes = sorted(classes or (set(a_counts) | set(b_counts)))
    ratios = {}
    for name in classes:
        a, b = a_counts.get(name, 0), b_counts.get(name, 0)
        if b:
            ratio = a / b
            display = f'{ratio:.1f}x'
        else:
            ratio = None
            display = '>1000x' if a else '-'
        ratios[name] = {'a': a, 'b': b, 'ratio': ratio, 'display': display}
    return ratios


def cap_fragmentation(counts, n_subareas, taxonomy=None):
    '''
    Fragmentation of every capped class against its cap times
    `n_subareas`.
    '''
    if taxonomy is None:
        taxonomy = default_taxonomy()
    reference = {
        name: taxonomy.cap_for(name, n_subareas)
        for name in sorted(taxonomy.caps)
    }
    capped = {name: counts.get(name, 0) for name in reference}
    return fragmentation(capped, reference)


@dataclass
class EvalReport:
    provenance: Optional[dict] = None
    sections: Dict[str, object] = field(default_factory=dict)

    def add(self, name, value):
        self.sections[name] = (
            value.to_json() if hasattr(value, 'to_json') else value
        )
        return self

    def to_json(self):
        return {'schema': SCHEMA, 'provenance': self.provenance,
                **self.sections}

    def write(self, path):
        with open(path, 'w', encoding='utf-8') as fh:
            json.dump(self.to_json(), fh, indent=1, sort_keys=True)
            fh.write('\n')
