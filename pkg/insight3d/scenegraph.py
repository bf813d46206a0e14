'''
Building -> Floor -> Surfaces/Instances scene graphs.

Graphs are networkx DiGraphs whose node attributes are flat scalars
(strings for tokens, floats for geometry, ints for counts), so the
GraphML export is readable by any graph tool. Node and attribute order
is fixed at build time, which makes the export byte-stable.
'''
import bisect
import io
import json
import logging
import math
from collections import Counter
from dataclasses import dataclass
from typing import Optional, Tuple

import networkx as nx

from .taxonomy import RoleFilterSpec, default_taxonomy

logger = logging.getLogger(__name__)

BUILDING, FLOOR, SURFACE, INSTANCE = 'Building', 'Floor', 'Surface', 'Instance'
KINDS = (BUILDING, FLOOR, SURFACE, INSTANCE)
DEFAULT_AREA_ID = 'building'


@dataclass(frozen=True)
class FloorModel:
    '''
    Sorted floor base elevations in meters; None means a single floor.
    '''
    bases: Optional[Tuple[float, ...]] = None

    def __post_init__(self):
        if self.bases is not None:
            object.__setattr__(self, 'bases', tuple(sorted(self.bases)))

    @classmethod
    def single(cls):
        return cls(None)



def assign_floor(centroid_z, floor_model=None):
    '''
    Index of the greatest base <= z; below the lowest base is floor 0.
    '''
    if floor_model is None or not floor_model.bases:
        return 0
    return max(bisect.bisect_right(floor_model.bases, centroid_z) - 1, 0)


class SceneGraph:
    def __init__(self, graph=None, diagnostics=None):
        self.graph = graph if graph is not None else nx.DiGraph()
        self.diagnostics = list(diagnostics or [])

    def __len__(self):
        return self.graph.number_of_nodes()

    def __eq__(self, other):
        return (
            isinstance(other, SceneGraph)
            and list(self.graph.nodes(data=True))
            == list(other.graph.nodes(data=True))
            and list(self.graph.edges) == list(other.graph.edges)
        )

    @property
    def node_count(self):
        return self.graph.number_of_nodes()

    @property
    def edge_count(self):
        return self.graph.number_of_edges()

    def nodes(self, kind=None):
        return [
            n for n, d in self.graph.nodes(data=True)
            if kind is None or d['kind'] == kind
        ]

    def breakdown(self):
        counts = Counter(d['kind'] for _, d in self.graph.nodes(data=True))
        return {kind: counts[kind] for kind in KINDS}

    def validate(self):
        return validate_hierarchy(self)

    def filter_role(self, role, taxonomy=None):
        return filter_role(self, role, taxonomy)

    def to_graphml(self):
        return export_graphml(self)


# building

def _box_attrs(box):
    cx, cy, cz = box.center
    dx, dy, dz = box.extents
    return {
        'box_cx': float(cx), 'box_cy': float(cy), 'box_cz': float(cz),
        'box_dx': float(dx), 'box_dy': float(dy), 'box_dz': float(dz),
        'box_yaw': float(box.yaw),
    }


def _histogram(names):
    return json.dumps(dict(sorted(Counter(names).items())), sort_keys=True)


def _refresh_aggregates(graph):
    '''
    Recompute the child counts and class histograms of Building and
    Floor nodes from the nodes currently in `graph`.
    '''
    for node, data in graph.nodes(data=True):
        if data['kind'] == FLOOR:
            children = [graph.nodes[c] for c in graph.successors(node)]
        elif data['kind'] == BUILDING:
            children = [
                graph.nodes[c]
                for f in graph.successors(node)
                for c in graph.successors(f)
            ]
        else:
            continue
        data['n_surfaces'] = sum(1 for c in children if c['kind'] == SURFACE)
        data['n_instances'] = sum(1 for c in children if c['kind'] == INSTANCE)
        data['class_histogram'] = _histogram(
            c['semantic_class'] for c in children
        )


def build(instances, floor_model=None, area_ids=None, taxonomy=None,
          source='pipeline', surfaces=(), up_index=2):
    '''
    Build the scene graph of one or more areas.

    Structural-surface classes become Surface nodes, everything else
    Instance nodes; both hang off the Floor their centroid height falls
    in, measured along axis `up_index`; only occupied floors get a node.
    `area_ids` adds a Building for areas that have no instances. With
    nothing at all the graph holds a single `DEFAULT_AREA_ID` Building.
    '''
    taxonomy = taxonomy or default_taxonomy()
    floor_model = floor_model or FloorModel.single()
    graph = nx.DiGraph()
    diagnostics = []
    members = list(instances) + list(surfaces)
    areas = sorted(set(area_ids or ()) | {i.area_id for i in members}) \
        or [DEFAULT_AREA_ID]
    placed = {area: [] for area in areas}
    for instance in members:
        centroid = [float(v) for v in instance.centroid]
        if not all(math.isfinite(v) for v in centroid):
            diagnostics.append({
                'instance_id': instance.instance_id,
                'reason': 'non-finite centroid',
            })
            logger.warning(
                'Skipping %s: non-finite centroid.', instance.instance_id
            )
            continue
        cls = taxonomy.get(instance.class_name)
        kind = SURFACE if cls.is_structural_surface else INSTANCE
        floor = assign_floor(centroid[up_index], floor_model)
        placed[instance.area_id].append((floor, kind, cls, instance, centroid))

    for area in areas:
        floors = sorted({p[0] for p in placed[area]})
        graph.add_node(area, kind=BUILDING, area_id=area,
                       n_floors=len(floors))
        for floor in floors:
            floor_node = f'{area}/{floor}'
            attrs = {'kind': FLOOR, 'area_id': area, 'floor_id': floor}
            if floor_model.bases:
                attrs['base_elevation'] = float(floor_model.bases[floor])
            graph.add_node(floor_node, **attrs)
            graph.add_edge(area, floor_node)
        seq = Counter()
        ordered = sorted(
            placed[area],
            key=lambda p: (p[0], KINDS.index(p[1]), p[2].id,
                           p[3].instance_id),
        )
        for floor, kind, cls, instance, centroid in ordered:
            key = (floor, kind, cls.name)
            node = f'{area}/{floor}/{kind.lower()}/{cls.name}/{seq[key]}'
            seq[key] += 1
            graph.add_node(
                node,
                kind=kind,
                semantic_class=cls.name,
                iso_name=cls.iso_name,
                category=cls.category.value,
                priority=cls.priority.label,
                confidence=float(instance.confidence),
                centroid_x=centroid[0],
                centroid_y=centroid[1],
                centroid_z=centroid[2],
                **_box_attrs(instance.box),
                area_id=area,
                floor_id=floor,
                n_observations=int(instance.n_observations),
                point_count=int(instance.point_count),
                source=source,
                instance_id=instance.instance_id,
            )
            graph.add_edge(f'{area}/{floor}', node)
    _refresh_aggregates(graph)
    return SceneGraph(graph, diagnostics)


# role views

def filter_role(scene, role, taxonomy=None):
    '''
    Project `scene` onto the classes one responder role needs.

    Building and Floor nodes always stay; Surface nodes stay while the
    role keeps structural context.
    '''
    taxonomy = taxonomy or default_taxonomy()
    spec = role if isinstance(role, RoleFilterSpec) else \
        taxonomy.role_spec(role)
    graph = nx.DiGraph()
    graph.graph.update(scene.graph.graph)
    for node, data in scene.graph.nodes(data=True):
        kind = data['kind']
        if kind == SURFACE:
            keep = spec.keep_structural_context
        elif kind == INSTANCE:
            keep = data['semantic_class'] in spec.retained_classes
        else:
            keep = True
        if keep:
            graph.add_node(node, **data)
    for parent, child in scene.graph.edges:
        if parent in graph and child in graph:
            graph.add_edge(parent, child)
    _refresh_aggregates(graph)
    return SceneGraph(graph, scene.diagnostics)


def validate_hierarchy(scene):
    '''
    Return the list of hierarchy violations; empty means valid.
    '''
    graph = scene.graph
    problems = []
    expected_parent = {FLOOR: BUILDING, SURFACE: FLOOR, INSTANCE: FLOOR}
    buildings = Counter()
    for node, data in graph.nodes(data=True):
        kind = data.get('kind')
        parents = list(graph.predecessors(node))
        if kind == BUILDING:
            buildings[data.get('area_id')] += 1
            if parents:
                problems.append(f'{node}: Building has a parent')
            continue
        if kind not in expected_parent:
            problems.append(f'{node}: unknown kind {kind!r}')
            continue
        if len(parents) != 1:
            problems.append(f'{node}: expected one parent, has {len(parents)}')
            continue
        if graph.nodes[parents[0]].get('kind') != expected_parent[kind]:
            problems.append(
                f'{node}: {kind} must hang off a {expected_parent[kind]}'
            )
    for area, n in buildings.items():
        if n != 1:
            problems.append(f'area {area}: {n} Building nodes')
    return problems


# GraphML

def export_graphml(scene) -> bytes:
    buffer = io.BytesIO()
    nx.write_graphml(scene.graph, buffer, encoding='utf-8', prettyprint=True)
    return buffer.getvalue()


def parse_graphml(document: bytes) -> SceneGraph:
    return SceneGraph(nx.read_graphml(io.BytesIO(document)))


def reduction_pct(full, view):
    return 100.0 * (1.0 - view / full) if full else None


def payload_stats(documents, full='full'):
    '''
    Byte size, node counts and reduction versus the `full` view for
    every exported GraphML document in `documents` (name -> bytes).
    '''
    stats = {}
    for name, document in documents.items():
        scene = parse_graphml(document)
        stats[name] = {
            'bytes': len(document),
            'nodes': scene.node_count,
            'breakdown': scene.breakdown(),
        }
    base = stats.get(full)
    for entry in stats.values():
        entry['node_reduction_pct'] = (
            reduction_pct(base['nodes'], entry['nodes']) if base else None
        )
        entry['byte_reduction_pct'] = (
            reduction_pct(base['bytes'], entry['bytes']) if base else None
        )
    return stats

