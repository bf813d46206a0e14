'''
Plausibility filtering of fused instances.

A confidence gate at tau followed by a per-(subarea, class) top-K cap
taken from the taxonomy's cap table. Instances are only ever dropped.
'''
import logging
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import List, Tuple

from .exceptions import ConfigError
from .taxonomy import default_taxonomy

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PlausibilityConfig:
    tau: float = 0.70

    def __post_init__(self):
        if not 0.0 <= self.tau <= 1.0:
            raise ConfigError('tau must lie in [0, 1].')


@dataclass
class PlausibilityResult:
    retained: List = field(default_factory=list)
    discarded: List[Tuple[object, str]] = field(default_factory=list)


def _subarea(instance):
    return getattr(instance, 'subarea_id', None) or instance.area_id


def apply(instances, config=None, taxonomy=None, classes=None,
          subarea_of=_subarea):
    '''
    Filter `instances` (objects with class_name, confidence,
    instance_id and area_id).

    Only classes in `classes` are filtered when it is given; others pass
    untouched. Within each (subarea, class) group, instances below tau
    are dropped and the rest keep their first K by confidence desc,
    instance_id asc. Classes without a cap pass on tau alone.
    '''
    config = config or PlausibilityConfig()
    taxonomy = taxonomy or default_taxonomy()
    groups = defaultdict(list)
    result = PlausibilityResult()
    for instance in instances:
        if classes is not None and instance.class_name not in classes:
            result.retained.append(instance)
        else:
            groups[(subarea_of(instance), instance.class_name)].append(
                instance
            )
    for (subarea, name), members in sorted(groups.items()):
        k = taxonomy.cap_for(name, 1)
        ranked = sorted(members, key=lambda i: (-i.confidence, i.instance_id))
        kept = 0
        for instance in ranked:
            if instance.confidence < config.tau:
                result.discarded.append((instance, 'below_tau'))
            elif k is not None and kept >= k:
                result.discarded.append((instance, 'over_cap'))
            else:
                result.retained.append(instance)
                kept += 1
    result.retained.sort(key=lambda i: i.instance_id)
    logger.info(
        'Plausibility filter kept %d of %d instances (tau=%.2f).',
        len(result.retained), len(result.retained) + len(result.discarded),
        config.tau,
    )
    return result


def capped_totals(survivors, cap_totals):
    '''
    The table-level view: min(surviving, K) per class.
    '''
    return {
        name: min(count, cap_totals[name]) if name in cap_totals else count
        for name, count in survivors.items()
    }


def _reduction(raw, filtered):
    return 1.0 - filtered / raw if raw else None


def report(raw, filtered):
    '''
    Per-class and overall reduction from `raw` to `filtered` counts.
    '''
    raw, filtered = Counter(raw), Counter(filtered)
    classes = sorted(set(raw) | set(filtered))
    per_class = {
        name: {
            'raw': raw[name],
            'filtered': filtered[name],
            'reduction': _reduction(raw[name], filtered[name]),
        }
        for name in classes
    }
    total_raw, total_filtered = sum(raw.values()), sum(filtered.values())
    return {
        'classes': per_class,
        'overall': {
            'raw': total_raw,
            'filtered': total_filtered,
            'reduction': _reduction(total_raw, total_filtered),
        },
    }
