import os
from collections import defaultdict

from django.db import transaction

from ...models import Instance
from ...plausibility import apply, report
from ..base import InsightCommand


class Command(InsightCommand):
    help = (
        'Discard stored instances below the confidence gate or beyond '
        'their per-subarea cap.'
    )
    schema = 'insight-plausibility/1'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument(
            '--all-classes', action='store_true',
            help='Gate every class, not only the capped ones.',
        )

    def run(self, config, **options):
        taxonomy = config.taxonomy
        classes = None if options['all_classes'] else frozenset(taxonomy.caps)
        with transaction.atomic():
            Instance.discard_bin.for_pipeline(self.pipeline).restore()
            rows = list(Instance.objects.for_pipeline(self.pipeline))
            result = apply(rows, config.plausibility, taxonomy, classes)
            by_reason = defaultdict(list)
            for row, reason in result.discarded:
                by_reason[reason].append(row.pk)
            for reason, pks in sorted(by_reason.items()):
                Instance.objects.filter(pk__in=pks).delete(reason=reason)

        considered = Instance.all_objects.for_pipeline(self.pipeline)
        kept = Instance.objects.for_pipeline(self.pipeline)
        if classes is not None:
            considered = considered.filter(class_name__in=classes)
            kept = kept.filter(class_name__in=classes)
        raw, filtered = considered.class_counts(), kept.class_counts()
        payload = {
            'provenance': self.provenance(),
            'pipeline': self.pipeline,
            'tau': config.plausibility.tau,
            'caps': dict(sorted(
                (name, taxonomy.cap_for(name, 1)) for name in taxonomy.caps
            )),
            'reasons': dict(sorted(
                Instance.discard_bin.for_pipeline(self.pipeline)
                .reasons().items()
            )),
            'reduction': report(raw, filtered),
        }
        self.write_json(
            os.path.join(self.pipeline_dir(), 'plausibility.json'), payload
        )
        self.success(
            f'Kept {sum(filtered.values())} of {sum(raw.values())} '
            f'filtered instances for {self.pipeline}.'
        )
