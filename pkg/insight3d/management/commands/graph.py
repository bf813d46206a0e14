import os

from ...conf import versions
from ...models import Instance
from ...scenegraph import build, export_graphml
from ..base import InsightCommand

GRAPH_SCHEMA = 'insight-graph/1'


class Command(InsightCommand):
    help = 'Build the Building/Floor/Surface/Instance graph of every area.'
    schema = 'insight-graph-report/1'

    def build_area(self, area_id, instances):
        scene = build(
            instances, self.config.floors, [area_id], self.config.taxonomy,
            source=self.pipeline, up_index=self.config.fusion.up_index,
        )
        scene.graph.graph.update({
            'schema': GRAPH_SCHEMA,
            'config_hash': self.config.config_hash,
        })
        # graph attributes must be scalars, so versions are flattened
        for package, version in versions().items():
            scene.graph.graph[f'version_{package}'] = version
        return scene, export_graphml(scene)

    def run(self, config, **options):
        # areas whose instances were all discarded still get a Building
        areas = sorted(set(
            Instance.all_objects.for_pipeline(self.pipeline)
            .values_list('area_id', flat=True)
        ))
        retained = Instance.objects.for_pipeline(self.pipeline)
        by_area = {
            area: [row.to_fused() for row in retained.for_area(area)]
            for area in areas
        }
        results = self.map_areas(
            lambda area: self.build_area(area, by_area[area]), areas
        )
        report = {}
        for area, (scene, document) in zip(areas, results):
            path = os.path.join(self.pipeline_dir('graph', area), 'full.graphml')
            with open(path, 'wb') as fh:
                fh.write(document)
            report[area] = {
                'bytes': len(document),
                'nodes': scene.node_count,
                'edges': scene.edge_count,
                'breakdown': scene.breakdown(),
                'problems': scene.validate(),
                'skipped': scene.diagnostics,
            }
        self.write_json(os.path.join(self.pipeline_dir(), 'graph.json'), {
            'provenance': self.provenance(),
            'pipeline': self.pipeline,
            'areas': report,
        })
        self.success(f'Wrote scene graphs for {len(areas)} areas.')
