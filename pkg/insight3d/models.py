import numpy as np
from django.db import models
from django.utils import timezone

from .detect_ingest import DetectionRecord, Source, Verdict
from .fusion import FusedInstance, GravityAlignedBox
from .managers import DiscardBinManager, NaiveManager, RetainedManager


class AbstractDiscardableModel(models.Model):
    '''
    Abstract model for pipeline artifacts which may be discarded.

    __ROW-LEVEL MANAGEMENT:__
    Rows rest in one of two mutually exclusive places: retained, or the
    discard bin. A gate, a deduplication pass or a plausibility filter
    never destroys a row; it discards it with a reason, so every
    statistic can be recounted from the store.

    * DISCARD (and the soft `delete`) sends a row to the bin.
    * RESTORE takes a row out of the bin.

    __TABLE-WIDE MANAGEMENT:__
    * `objects` (the default) manages retained rows only.
    * `all_objects` manages every row.
    * `discard_bin` manages discarded rows only.
    '''
    class Meta:
        abstract = True
        base_manager_name = 'all_objects'
        default_manager_name = 'objects'

    pipeline = models.CharField(max_length=32, db_index=True)
    area_id = models.CharField(max_length=64, db_index=True)
    class_name = models.CharField(max_length=64)
    confidence = models.FloatField()

    created_at = models.DateTimeField(auto_now_add=True)
    updated_at = models.DateTimeField(auto_now=True)
    discarded_at = models.DateTimeField(blank=True, null=True)
    discard_reason = models.CharField(max_length=32, blank=True, default='')

    # model managers
    objects = RetainedManager()
    all_objects = NaiveManager()
    discard_bin = DiscardBinManager()

    def delete(self, **kwargs):
        '''
        Delete this row (a discard, by default).

        If `hard` kwarg is set to `True`:
        * delete for good.
        Otherwise:
        * if the row is retained, send it into the bin.
        * otherwise leave it untouched.

        Return the number of rows 'deleted' and a dictionary with the
        number of 'deletions' per object type (wherever possible).
        '''
        if kwargs.pop('hard', False):
            return super().delete(**kwargs)
        return self.discard(kwargs.pop('reason', ''))

    def discard(self, reason=''):
        if not self.is_retained():
            return 0, {}
        self.discarded_at = timezone.now()
        self.discard_reason = reason
        self.save()
        return 1, {}

    def restore(self):
        '''
        Take this row out of the discard bin, if it is in there.
        '''
        if self.is_retained():
            return 0, {}
        self.discarded_at = None
        self.discard_reason = ''
        self.save()
        return 1, {}

    def is_retained(self):
        return self.discarded_at is None


class Detection(AbstractDiscardableModel):
    '''
    One normalized detection record of a vision stack.
    '''
    class Meta(AbstractDiscardableModel.Meta):
        ordering = ['pipeline', 'record_index']
        constraints = [
            models.UniqueConstraint(
                fields=['pipeline', 'record_index'],
                name='unique_detection_per_pipeline',
            ),
        ]

    image_id = models.CharField(max_length=128)
    record_index = models.PositiveIntegerField()
    source = models.CharField(
        max_length=16, choices=[(s.value, s.value) for s in Source]
    )
    verdict = models.CharField(
        max_length=16,
        choices=[(v.value, v.value) for v in Verdict],
        default=Verdict.UNVERIFIED.value,
    )
    box2d = models.JSONField()
    mask = models.CharField(max_length=255, blank=True, default='')

    def __str__(self):
        return f'{self.pipeline}:{self.image_id}#{self.record_index}'

    @classmethod
    def from_record(cls, pipeline, record: DetectionRecord):
        return cls(
            pipeline=pipeline,
            area_id=record.area_id,
            class_name=record.class_name,
            confidence=record.confidence,
            image_id=record.image_id,
            record_index=record.index,
            source=record.source.value,
            verdict=record.verdict.value,
            box2d=list(record.box2d),
            mask=record.mask or '',
        )

    def to_record(self) -> DetectionRecord:
        return DetectionRecord(
            image_id=self.image_id,
            area_id=self.area_id,
            class_name=self.class_name,
            box2d=tuple(self.box2d),
            confidence=self.confidence,
            source=Source(self.source),
            verdict=Verdict(self.verdict),
            mask=self.mask or None,
            index=self.record_index,
        )


class Instance(AbstractDiscardableModel):
    '''
    One fused 3D instance; its points live in the instance dump.
    '''
    class Meta(AbstractDiscardableModel.Meta):
        ordering = ['pipeline', 'instance_id']
        constraints = [
            models.UniqueConstraint(
                fields=['pipeline', 'instance_id'],
                name='unique_instance_per_pipeline',
            ),
        ]

    instance_id = models.CharField(max_length=96)
    subarea_id = models.CharField(max_length=64, blank=True, default='')
    centroid = models.JSONField()
    box = models.JSONField(null=True)
    point_count = models.PositiveIntegerField(default=0)
    observations = models.JSONField(default=list)

    def __str__(self):
        return f'{self.pipeline}:{self.instance_id}'

    @property
    def n_observations(self):
        return len(self.observations)

    @classmethod
    def from_fused(cls, pipeline, instance: FusedInstance, subarea_id=''):
        return cls(
            pipeline=pipeline,
            area_id=instance.area_id,
            class_name=instance.class_name,
            confidence=instance.confidence,
            instance_id=instance.instance_id,
            subarea_id=subarea_id,
            centroid=[float(v) for v in instance.centroid],
            box=instance.box.to_json() if instance.box else None,
            point_count=instance.point_count,
            observations=instance.observations,
        )

    def to_fused(self) -> FusedInstance:
        return FusedInstance(
            instance_id=self.instance_id,
            area_id=self.area_id,
            class_name=self.class_name,
            centroid=np.array(self.centroid, dtype=np.float64),
            confidence=self.confidence,
            point_count=self.point_count,
            observations=list(self.observations),
            box=GravityAlignedBox.from_json(self.box) if self.box else None,
        )
