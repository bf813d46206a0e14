from django.db import models
from django.db.models import Count
from django.db.models.query_utils import Q
from django.utils import timezone


class PipelineQuerySetMixin:
    '''
    Lookups shared by every pipeline artifact table.
    '''
    def for_pipeline(self, pipeline):
        return self.filter(pipeline=pipeline)

    def for_area(self, area_id):
        return self.filter(area_id=area_id)

    def class_counts(self):
        '''
        Return {class_name: row count} over the fetched rows.
        '''
        rows = self.order_by().values('class_name').annotate(n=Count('pk'))
        return {row['class_name']: row['n'] for row in rows}


class RetainedQuerySet(PipelineQuerySetMixin, models.QuerySet):
    '''
    Fetches only rows which are __not__ in the discard bin.
    '''
    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.query.add_q(Q(discarded_at__isnull=True))

    def delete(self, reason=''):
        '''
        Send the fetched rows into the discard bin.
        '''
        return self.update(
            discarded_at=timezone.now(), discard_reason=reason
        ), {}

    def restore(self):
        raise AssertionError(
            'Restore operation is not allowed on a retained queryset.\n'
            'Try restoring rows from a discard bin queryset.'
        )


class NaiveQuerySet(PipelineQuerySetMixin, models.QuerySet):
    '''
    Fetches __every__ row of the underlying model.
    '''
    def restore(self):
        raise AssertionError(
            'Restore operation is not allowed on a naive queryset.\n'
            'Try restoring rows from a discard bin queryset.'
        )


class DiscardBinQuerySet(PipelineQuerySetMixin, models.QuerySet):
    '''
    Fetches only rows which are __in__ the discard bin.
    '''
    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.query.add_q(Q(discarded_at__isnull=False))

    def reasons(self):
        rows = self.order_by().values('discard_reason').annotate(
            n=Count('pk')
        )
        return {row['discard_reason']: row['n'] for row in rows}

    def restore(self):
        '''
        Send the fetched rows out of the discard bin.
        '''
        return self.update(discarded_at=None, discard_reason='')
