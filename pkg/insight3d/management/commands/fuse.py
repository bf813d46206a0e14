import json
import logging
import os
from collections import defaultdict

from django.db import transaction

from ...depthio import box_mask, read_mask, read_xyz_raster
from ...exceptions import (
    DimensionMismatchError, GeometryError, InvalidInput, MissingInput,
)
from ...fusion import (
    count_by_class, fragmentation, fuse_area, project, write_instance_dump,
)
from ...models import Detection, Instance
from ..base import InsightCommand

logger = logging.getLogger(__name__)


def load_reference(path):
    '''
    Reference instance counts per class from a synthetic manifest.
    '''
    try:
        with open(path, encoding='utf-8') as fh:
            return json.load(fh)['planted']
    except FileNotFoundError:
        raise MissingInput(f'Reference manifest {path} does not exist.') \
            from None


def skip_reason(error):
    if isinstance(error, MissingInput):
        return 'missing_input'
    if isinstance(error, DimensionMismatchError):
        return 'dimension_mismatch'
    if isinstance(error, GeometryError):
        return 'no_points'
    return 'invalid_input'


class Command(InsightCommand):
    help = 'Project stored detections into 3D and fuse them per area.'
    schema = 'insight-fuse/1'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument(
            '--rasters', help='Raster root; defaults to paths.rasters.'
        )
        parser.add_argument(
            '--reference',
            help='Synthetic manifest whose planted counts give the '
                 'fragmentation reference.',
        )

    def observe_area(self, area_id, records):
        '''
        Project the records of one area; per-record failures become
        diagnostics.
        '''
        rasters, observations, diagnostics = {}, [], []
        for record in records:
            try:
                if record.image_id not in rasters:
                    rasters[record.image_id] = read_xyz_raster(os.path.join(
                        self.rasters, area_id, f'{record.image_id}.xyzr'
                    ))
                raster = rasters[record.image_id]
                if record.mask:
                    mask = read_mask(os.path.join(self.rasters, record.mask))
                else:
                    mask = box_mask(record.box2d, raster.width, raster.height)
                observations.append(project(record, raster, mask))
            except (MissingInput, InvalidInput) as e:
                logger.warning('Skipping detection %d on %s: %s',
                               record.index, record.image_id, e)
                diagnostics.append({
                    'image_id': record.image_id,
                    'index': record.index,
                    'reason': skip_reason(e),
                    'detail': str(e),
                })
        instances = fuse_area(
            area_id, observations, self.config.fusion, self.config.taxonomy
        )
        return observations, instances, diagnostics

    def run(self, config, **options):
        self.rasters = self.require_dir(
            options['rasters'] or config.paths.get('rasters'), 'Raster'
        )
        by_area = defaultdict(list)
        for row in Detection.objects.for_pipeline(self.pipeline) \
                .order_by('record_index'):
            by_area[row.area_id].append(row.to_record())
        areas = sorted(by_area)
        results = self.map_areas(
            lambda area: self.observe_area(area, by_area[area]), areas
        )

        rows, report_areas = [], {}
        observed, fused = defaultdict(int), defaultdict(int)
        for area, (observations, instances, diagnostics) in \
                zip(areas, results):
            write_instance_dump(
                self.pipeline_dir('instances', area), instances,
                self.provenance(),
            )
            rows.extend(
                Instance.from_fused(self.pipeline, i, subarea_id=area)
                for i in instances
            )
            for name, n in count_by_class(o.detection for o in
                                          observations).items():
                observed[name] += n
            for name, n in count_by_class(instances).items():
                fused[name] += n
            report_areas[area] = {
                'observations': len(observations),
                'instances': len(instances),
                'classes': dict(sorted(count_by_class(instances).items())),
                'skipped': diagnostics,
            }
        with transaction.atomic():
            Instance.all_objects.for_pipeline(self.pipeline).delete()
            Instance.objects.bulk_create(rows)

        report = {
            'provenance': self.provenance(),
            'pipeline': self.pipeline,
            'areas': report_areas,
            'instances': len(rows),
        }
        if options['reference']:
            reference = load_reference(options['reference'])
            report['fragmentation'] = {
                'before_fusion': fragmentation(observed, reference),
                'after_fusion': fragmentation(fused, reference),
            }
        self.write_json(os.path.join(self.pipeline_dir(), 'fuse.json'), report)
        self.success(
            f'Fused {sum(len(r[0]) for r in results)} observations into '
            f'{len(rows)} instances over {len(areas)} areas.'
        )
