import logging
import os

from django.db import transaction
from django.utils import timezone

from ...detect_ingest import (
    ingest, load_detections, ocr_exclusive_count, small_object_stats,
    source_shares, verification_stats,
)
from ...fusion import count_by_class
from ...models import Detection
from ..base import InsightCommand

logger = logging.getLogger(__name__)


class Command(InsightCommand):
    help = (
        'Load detector JSONL files, gate and deduplicate them, and store '
        'the result under one pipeline tag.'
    )
    schema = 'insight-ingest/1'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument(
            'detections', nargs='*',
            help='Detection JSONL files; defaults to paths.detections.',
        )

    def run(self, config, **options):
        paths = options['detections'] or config.paths.get('detections', [])
        if not paths:
            logger.warning('No detection files given; storing nothing.')
        loads, start = [], 0
        for path in paths:
            load = load_detections(path, config.taxonomy, start_index=start)
            start += len(load.records)
            loads.append(load)
        survivors, discarded, stats = ingest(loads, config.gate)

        now = timezone.now()
        rows = [Detection.from_record(self.pipeline, r) for r in survivors]
        for record, reason in discarded:
            row = Detection.from_record(self.pipeline, record)
            row.discarded_at = now
            row.discard_reason = reason
            rows.append(row)
        rows.sort(key=lambda row: row.record_index)
        with transaction.atomic():
            Detection.all_objects.for_pipeline(self.pipeline).delete()
            Detection.objects.bulk_create(rows)

        loaded = [r for load in loads for r in load.records]
        report = {
            'provenance': self.provenance(),
            'pipeline': self.pipeline,
            'files': [os.path.basename(p) for p in paths],
            'stats': stats.to_json(),
            'verification': verification_stats(loaded),
            'source_shares': source_shares(survivors),
            'small_objects': small_object_stats(
                survivors, config.eval.small_object_area
            ),
            'ocr_exclusive': ocr_exclusive_count(
                survivors, config.eval.ocr_radius
            ),
            'classes': dict(sorted(count_by_class(survivors).items())),
        }
        self.write_json(
            os.path.join(self.pipeline_dir(), 'ingest.json'), report
        )
        self.success(
            f'Stored {stats.survived} of {stats.raw} detections for '
            f'{self.pipeline}.'
        )
