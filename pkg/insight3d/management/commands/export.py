import os

from ...exceptions import MissingInput
from ...fusion import read_instance_dump
from ...models import Instance
from ...pcexport import export
from ..base import InsightCommand


class Command(InsightCommand):
    help = 'Write a labeled point cloud per area from the retained instances.'
    schema = 'insight-pc/1'

    def export_area(self, area, retained):
        dump = os.path.join(self.out, self.pipeline, 'instances', area)
        instances = [
            i for i in read_instance_dump(dump)
            if i.instance_id in retained
        ]
        return export(
            area, instances, self.pipeline_dir('clouds', area),
            self.config.taxonomy, self.provenance(),
        )

    def run(self, config, **options):
        root = os.path.join(self.out, self.pipeline, 'instances')
        if not os.path.isdir(root):
            raise MissingInput(
                f'No instance dumps under {root}.\nRun the fuse command first.'
            )
        retained = set(
            Instance.objects.for_pipeline(self.pipeline)
            .values_list('instance_id', flat=True)
        )
        areas = sorted(os.listdir(root))
        clouds = self.map_areas(
            lambda area: self.export_area(area, retained), areas
        )
        self.success(
            f'Exported {sum(len(c) for c in clouds)} points over '
            f'{len(areas)} areas.'
        )
