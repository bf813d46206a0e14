import os
from collections import Counter

from ...evaluation import (
    AccuracyReport, EvalReport, area_accuracy, cap_fragmentation,
    complementarity, detection_ratio, retention_curve, spatial_coverage,
)
from ...fusion import fragmentation
from ...models import Instance
from ...pcexport import read_cloud, read_ground_truth
from ...taxonomy import STRUCTURAL_SURFACES
from ..base import InsightCommand
from .fuse import load_reference


class Command(InsightCommand):
    help = (
        'Score exported clouds against reference clouds and compare two '
        'pipelines.'
    )
    schema = 'insight-eval/1'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument(
            '--gt', help='Reference cloud root; defaults to paths.gt.'
        )
        parser.add_argument(
            '--compare', help='Pipeline tag to compare against.'
        )
        parser.add_argument(
            '--reference',
            help='Synthetic manifest whose planted counts give the '
                 'fragmentation reference.',
        )

    def score_area(self, area):
        taxonomy = self.config.taxonomy
        pred = read_cloud(os.path.join(self.out, self.pipeline, 'clouds', area))
        gt = read_ground_truth(os.path.join(self.gt, area))
        accuracy = area_accuracy(pred, gt, taxonomy)
        coverage = {}
        for name in sorted(STRUCTURAL_SURFACES):
            if name not in taxonomy:
                continue
            selected = pred.segment == taxonomy.get(name).id
            if not selected.any():
                continue
            coverage[name] = spatial_coverage(
                pred.coord[selected], gt.coord, gt.labels,
                radius=self.config.eval.coverage_radius, class_name=name,
                taxonomy=taxonomy,
            ).to_json()
        return accuracy, coverage

    def run(self, config, **options):
        self.gt = self.require_dir(
            options['gt'] or config.paths.get('gt'), 'Reference cloud'
        )
        clouds = self.require_dir(
            os.path.join(self.out, self.pipeline, 'clouds'), 'Cloud'
        )
        areas = sorted(os.listdir(clouds))
        scored = self.map_areas(self.score_area, areas)

        report = EvalReport(self.provenance())
        report.add('pipeline', self.pipeline)
        report.add('accuracy', AccuracyReport([s[0] for s in scored]))
        report.add('coverage', dict(zip(areas, (s[1] for s in scored))))

        everything = list(Instance.all_objects.for_pipeline(self.pipeline))
        report.add('retention', retention_curve(
            everything, config.eval.retention_thresholds,
            config.taxonomy.safety_classes(),
        ))
        # every evaluated area counts as one subarea
        report.add('cap_fragmentation', cap_fragmentation(
            Counter(i.class_name for i in everything), len(areas),
            config.taxonomy,
        ))
        retained = list(Instance.objects.for_pipeline(self.pipeline))
        counts = Counter(i.class_name for i in retained)
        if options['compare']:
            other = list(Instance.objects.for_pipeline(options['compare']))
            report.add('compare', options['compare'])
            report.add('complementarity', complementarity(
                [i.to_fused() for i in retained],
                [i.to_fused() for i in other],
                radius=config.eval.match_radius,
            ))
            report.add('detection_ratio', detection_ratio(
                counts, Counter(i.class_name for i in other)
            ))
        if options['reference']:
            report.add('fragmentation', fragmentation(
                counts, load_reference(options['reference'])
            ))
        report.write(os.path.join(self.pipeline_dir(), 'eval.json'))
        overall = report.sections['accuracy']['overall']
        self.success(
            f'Per-point accuracy of {self.pipeline}: '
            f'{"n/a" if overall is None else f"{overall:.3f}"}.'
        )
