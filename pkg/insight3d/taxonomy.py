'''
The public-safety class taxonomy.

23 classes grouped by operational function, the mapping from the 13
source-dataset labels onto them, the responder role views, and the
per-subarea cardinality caps used by the plausibility filter.

Everything here is immutable once built; `default_taxonomy()` returns a
shared instance, `Taxonomy.from_dict` builds one with config overrides.
'''
import enum
import json
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import FrozenSet, Mapping, Optional, Tuple

from .exceptions import ConfigError, UnknownClassError


class Category(enum.Enum):
    EGRESS = 'Egress'
    FIRE_SUPPRESSION = 'FireSuppression'
    FIRE_ALARM = 'FireAlarm'
    UTILITY_CONTROL = 'UtilityControl'
    MEDICAL = 'Medical'
    STRUCTURAL = 'Structural'
    OBSTACLE = 'Obstacle'


class Priority(enum.IntEnum):
    '''
    Responder priority; lower value sorts first.
    '''
    CRITICAL = 0
    HIGH = 1
    NORMAL = 2

    @property
    def label(self):
        return self.name.capitalize()


class Role(enum.Enum):
    FIREFIGHTER = 'firefighter'
    EMS = 'ems'
    FULL = 'full'


class MappedKind(enum.Enum):
    DIRECT = 'direct'
    FURNITURE = 'furniture'
    COLUMN = 'column'
    EXCLUDED = 'excluded'


@dataclass(frozen=True)
class MappedLabel:
    kind: MappedKind
    class_name: Optional[str] = None

    @property
    def is_excluded(self):
        return self.kind is MappedKind.EXCLUDED


@dataclass(frozen=True)
class SafetyClass:
    id: int
    name: str
    category: Category
    iso_name: str
    priority: Priority
    is_structural_surface: bool = False


@dataclass(frozen=True)
class RoleFilterSpec:
    role: Role
    retained_classes: FrozenSet[str]
    keep_structural_context: bool = True


# (name, category, iso_name), in id order
_CLASS_TABLE = (
    ('door', Category.EGRESS, 'IfcDoor'),
    ('window', Category.EGRESS, 'IfcWindow'),
    ('stairs', Category.EGRESS, 'IfcStair'),
    ('elevator', Category.EGRESS, 'IfcTransportElement'),
    ('ramp', Category.EGRESS, 'IfcRamp'),
    ('exit_sign', Category.EGRESS, 'IfcSign'),
    ('railing', Category.EGRESS, 'IfcRailing'),
    ('fire_extinguisher', Category.FIRE_SUPPRESSION,
     'IfcFireSuppressionTerminal'),
    ('standpipe', Category.FIRE_SUPPRESSION, 'IfcPipeSegment'),
    ('fire_hose_cabinet', Category.FIRE_SUPPRESSION,
     'IfcFireSuppressionTerminal'),
    ('sprinkler', Category.FIRE_SUPPRESSION, 'IfcFireSuppressionTerminal'),
    ('fire_alarm_panel', Category.FIRE_ALARM, 'IfcUnitaryControlElement'),
    ('fire_alarm_pull', Category.FIRE_ALARM, 'IfcAlarm'),
    ('electrical_panel', Category.UTILITY_CONTROL,
     'IfcElectricDistributionBoard'),
    ('gas_shutoff', Category.UTILITY_CONTROL, 'IfcValve'),
    ('water_shutoff', Category.UTILITY_CONTROL, 'IfcValve'),
    ('aed', Category.MEDICAL, 'IfcMedicalDevice'),
    ('wall', Category.STRUCTURAL, 'IfcWall'),
    ('floor', Category.STRUCTURAL, 'IfcSlab'),
    ('ceiling', Category.STRUCTURAL, 'IfcCovering'),
    ('column', Category.STRUCTURAL, 'IfcColumn'),
    ('furniture', Category.OBSTACLE, 'IfcFurniture'),
    ('clutter', Category.OBSTACLE, 'IfcBuildingElementProxy'),
)

STRUCTURAL_SURFACES = frozenset({'wall', 'floor', 'ceiling'})

_PRIORITY_BY_CATEGORY = {
    Category.FIRE_ALARM: Priority.CRITICAL,
    Category.FIRE_SUPPRESSION: Priority.CRITICAL,
    Category.MEDICAL: Priority.CRITICAL,
    Category.UTILITY_CONTROL: Priority.CRITICAL,
    Category.EGRESS: Priority.HIGH,
    Category.STRUCTURAL: Priority.NORMAL,
    Category.OBSTACLE: Priority.NORMAL,
}

_SOURCE_LABELS = {
    'ceiling': MappedLabel(MappedKind.DIRECT, 'ceiling'),
    'floor': MappedLabel(MappedKind.DIRECT, 'floor'),
    'wall': MappedLabel(MappedKind.DIRECT, 'wall'),
    'column': MappedLabel(MappedKind.DIRECT, 'column'),
    'window': MappedLabel(MappedKind.DIRECT, 'window'),
    'door': MappedLabel(MappedKind.DIRECT, 'door'),
    'table': MappedLabel(MappedKind.FURNITURE, 'furniture'),
    'chair': MappedLabel(MappedKind.FURNITURE, 'furniture'),
    'sofa': MappedLabel(MappedKind.FURNITURE, 'furniture'),
    'bookcase': MappedLabel(MappedKind.FURNITURE, 'furniture'),
    'beam': MappedLabel(MappedKind.COLUMN, 'column'),
    'board': MappedLabel(MappedKind.EXCLUDED),
    'clutter': MappedLabel(MappedKind.EXCLUDED),
}

SOURCE_LABELS = tuple(_SOURCE_LABELS)

# per-subarea K; totals over the 7 subareas are 7 times these
DEFAULT_CAPS = {
    'aed': 1,
    'fire_alarm_panel': 1,
    'fire_alarm_pull': 3,
    'fire_extinguisher': 3,
    'fire_hose_cabinet': 2,
    'exit_sign': 5,
    'electrical_panel': 3,
}

EMS_CLASSES = frozenset({'elevator', 'ramp', 'aed'})
EMS_EGRESS_CLASSES = frozenset({'door', 'stairs', 'exit_sign'})


def _default_classes():
    return tuple(
        SafetyClass(
            id=i,
            name=name,
            category=category,
            iso_name=iso_name,
            priority=_PRIORITY_BY_CATEGORY[category],
            is_structural_surface=name in STRUCTURAL_SURFACES,
        )
        for i, (name, category, iso_name) in enumerate(_CLASS_TABLE)
    )


@dataclass(frozen=True)
class Taxonomy:
    '''
    An immutable class taxonomy with role views and caps.
    '''
    classes: Tuple[SafetyClass, ...] = field(default_factory=_default_classes)
    caps: Mapping[str, int] = field(
        default_factory=lambda: dict(DEFAULT_CAPS)
    )
    firefighter_includes_utility: bool = False
    ems_includes_egress: bool = False
    keep_structural_context: bool = True
    # explicit role sets; a role listed here ignores the two role flags
    roles: Mapping[Role, FrozenSet[str]] = field(default_factory=dict)

    def __post_init__(self):
        names = [c.name for c in self.classes]
        if len(set(names)) != len(names):
            raise ConfigError('Taxonomy class names must be unique.')
        if [c.id for c in self.classes] != list(range(len(self.classes))):
            raise ConfigError('Taxonomy class ids must be dense from 0.')
        for name, k in self.caps.items():
            if name not in names:
                raise ConfigError(f'Cap given for unknown class {name!r}.')
            if not isinstance(k, int) or k < 0:
                raise ConfigError(
                    f'Cap for {name!r} must be a non-negative integer.'
                )
        object.__setattr__(
            self, '_by_name', {c.name: c for c in self.classes}
        )
        object.__setattr__(self, 'roles', self._check_roles(self.roles))

    def _check_roles(self, roles):
        checked = {}
        for key, members in roles.items():
            try:
                role = Role(key)
            except ValueError:
                raise ConfigError(f'Unknown role {key!r} in role sets.') \
                    from None
            if role is Role.FULL:
                raise ConfigError(
                    'The full view keeps every class and takes no role set.\n'
                    'Remove "full" from the role sets.'
                )
            if not isinstance(members, (list, tuple, set, frozenset)):
                raise ConfigError(
                    f'Role set {role.value!r} must be a list of class names.'
                )
            members = frozenset(members)
            unknown = members - set(self._by_name)
            if unknown:
                raise ConfigError(
                    f'Role set {role.value!r} names unknown classes: '
                    f'{", ".join(sorted(unknown))}.'
                )
            if members == set(self._by_name):
                raise ConfigError(
                    f'Role set {role.value!r} keeps every class.\n'
                    f'A role view must drop at least one class.'
                )
            checked[role] = members
        return checked

    # lookups

    def get(self, name):
        '''
        Return the class called `name`.
        '''
        try:
            return self._by_name[name]
        except KeyError:
            raise UnknownClassError(
                f'Unknown taxonomy class {name!r}.\n'
                f'Try one of: {", ".join(self.names)}.'
            ) from None

    def __contains__(self, name):
        return name in self._by_name

    def by_id(self, class_id):
        if 0 <= class_id < len(self.classes):
            return self.classes[class_id]
        raise UnknownClassError(f'Unknown taxonomy class id {class_id}.')

    @property
    def names(self):
        return tuple(c.name for c in self.classes)

    def class_category(self, name):
        return self.get(name).category

    def priority(self, name):
        return self.get(name).priority

    def in_category(self, *categories):
        return frozenset(
            c.name for c in self.classes if c.category in categories
        )

    def overlapping_classes(self):
        '''
        Classes the source dataset labels too; these admit per-point
        accuracy.
        '''
        return frozenset(
            m.class_name for m in _SOURCE_LABELS.values()
            if not m.is_excluded
        )

    def novel_classes(self):
        '''
        The safety-critical classes with no source-dataset counterpart.
        '''
        return frozenset(
            c.name for c in self.classes
            if c.name not in self.overlapping_classes()
            and c.name != 'clutter'
        )

    safety_classes = novel_classes

    # source-dataset mapping

    @staticmethod
    def map_source_label(label):
        '''
        Map a source-dataset label onto the taxonomy.
        '''
        try:
            return _SOURCE_LABELS[label]
        except KeyError:
            raise UnknownClassError(
                f'Unknown source-dataset label {label!r}.\n'
                f'Expected one of: {", ".join(SOURCE_LABELS)}.'
            ) from None

    # roles

    def role_spec(self, role):
        role = Role(role)
        if role in self.roles:
            retained = self.roles[role]
        elif role is Role.FULL:
            retained = frozenset(self.names)
        elif role is Role.FIREFIGHTER:
            categories = [
                Category.FIRE_SUPPRESSION,
                Category.FIRE_ALARM,
                Category.EGRESS,
            ]
            if self.firefighter_includes_utility:
                categories.append(Category.UTILITY_CONTROL)
            retained = self.in_category(*categories)
        else:
            retained = EMS_CLASSES
            if self.ems_includes_egress:
                retained = retained | EMS_EGRESS_CLASSES
        return RoleFilterSpec(
            role=role,
            retained_classes=retained & frozenset(self.names),
            keep_structural_context=self.keep_structural_context,
        )

    def role_retained(self, name, role):
        '''
        Return whether a node of class `name` belongs in the `role` view.

        `role` may be a `Role`, its value, or a `RoleFilterSpec`.
        '''
        spec = role if isinstance(role, RoleFilterSpec) else \
            self.role_spec(role)
        cls = self.get(name)
        if cls.name in spec.retained_classes:
            return True
        return cls.is_structural_surface and spec.keep_structural_context

    # caps

    def cap_for(self, name, n_subareas=1):
        '''
        Return the total cap for `name` over `n_subareas` subareas, or
        None when the class is uncapped.
        '''
        self.get(name)
        if n_subareas < 0:
            raise ValueError('n_subareas must be non-negative')
        k = self.caps.get(name)
        if k is None:
            return None
        return k * n_subareas

    # (de)serialisation

    def to_dict(self):
        return {
            'classes': [
                {
                    'id': c.id,
                    'name': c.name,
                    'category': c.category.value,
                    'iso_name': c.iso_name,
                    'priority': c.priority.label,
                }
                for c in self.classes
            ],
            'caps': dict(sorted(self.caps.items())),
            'firefighter_includes_utility': self.firefighter_includes_utility,
            'ems_includes_egress': self.ems_includes_egress,
            'keep_structural_context': self.keep_structural_context,
            'roles': {
                role.value: sorted(members)
                for role, members in sorted(
                    self.roles.items(), key=lambda item: item[0].value
                )
            },
        }

    @classmethod
    def from_dict(cls, data):
        '''
        Build a taxonomy from the built-in tables overridden by `data`.

        Recognised keys: `iso_names` (name -> string), `caps`
        (name -> per-subarea K), `roles` (role -> class names) and the
        three boolean flags.
        '''
        data = dict(data or {})
        if not isinstance(data.get('roles', {}), dict):
            raise ConfigError('Taxonomy roles must map a role to its classes.')
        known = {
            'iso_names', 'caps', 'firefighter_includes_utility',
            'ems_includes_egress', 'keep_structural_context', 'roles',
        }
        unknown = set(data) - known
        if unknown:
            raise ConfigError(
                f'Unknown taxonomy keys: {", ".join(sorted(unknown))}.'
            )
        classes = _default_classes()
        iso_names = data.get('iso_names', {})
        for name in iso_names:
            if name not in {c.name for c in classes}:
                raise ConfigError(f'iso_name given for unknown class {name!r}.')
        classes = tuple(
            replace(c, iso_name=iso_names.get(c.name, c.iso_name))
            for c in classes
        )
        caps = dict(DEFAULT_CAPS)
        caps.update(data.get('caps', {}))
        return cls(
            classes=classes,
            caps=caps,
            firefighter_includes_utility=bool(
                data.get('firefighter_includes_utility', False)
            ),
            ems_includes_egress=bool(data.get('ems_includes_egress', False)),
            keep_structural_context=bool(
                data.get('keep_structural_context', True)
            ),
            roles=dict(data.get('roles', {})),
        )

    @classmethod
    def load(cls, path):
        with open(path, encoding='utf-8') as fh:
            return cls.from_dict(json.load(fh))


@lru_cache(maxsize=None)
def default_taxonomy():
    return Taxonomy()


map_source_label = Taxonomy.map_source_label
