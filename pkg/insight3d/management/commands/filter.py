import os

from ...exceptions import MissingInput
from ...scenegraph import export_graphml, parse_graphml, payload_stats
from ...taxonomy import Role
from ..base import InsightCommand


class Command(InsightCommand):
    help = (
        'Project every exported scene graph onto responder-role views and '
        'report their payload sizes.'
    )
    schema = 'insight-filter/1'

    def filter_area(self, area, roles):
        directory = os.path.join(self.out, self.pipeline, 'graph', area)
        with open(os.path.join(directory, 'full.graphml'), 'rb') as fh:
            full = fh.read()
        scene = parse_graphml(full)
        documents = {Role.FULL.value: full}
        for role in roles:
            if role is Role.FULL:
                continue
            view = scene.filter_role(role, self.config.taxonomy)
            problems = view.validate()
            if problems:
                raise AssertionError(
                    f'{role.value} view of {area} is not a valid hierarchy: '
                    f'{problems[0]}'
                )
            document = export_graphml(view)
            with open(os.path.join(directory, f'{role.value}.graphml'),
                      'wb') as fh:
                fh.write(document)
            documents[role.value] = document
        return payload_stats(documents)

    def run(self, config, **options):
        root = os.path.join(self.out, self.pipeline, 'graph')
        if not os.path.isdir(root):
            raise MissingInput(
                f'No scene graphs under {root}.\nRun the graph command first.'
            )
        areas = sorted(
            a for a in os.listdir(root)
            if os.path.exists(os.path.join(root, a, 'full.graphml'))
        )
        roles = [Role(options['role'])] if options['role'] else list(Role)
        stats = self.map_areas(lambda a: self.filter_area(a, roles), areas)
        self.write_json(os.path.join(self.pipeline_dir(), 'filter.json'), {
            'provenance': self.provenance(),
            'pipeline': self.pipeline,
            'roles': [r.value for r in roles],
            'areas': dict(zip(areas, stats)),
        })
        self.success(
            f'Filtered {len(areas)} scene graphs for '
            f'{", ".join(r.value for r in roles)}.'
        )
