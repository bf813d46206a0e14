from django.db.models.manager import BaseManager

from .querysets import DiscardBinQuerySet, NaiveQuerySet, RetainedQuerySet


class RetainedManager(BaseManager.from_queryset(RetainedQuerySet)):
    '''
    Manages only rows which are __not in__ the discard bin.
    '''
    pass


class NaiveManager(BaseManager.from_queryset(NaiveQuerySet)):
    '''
    Manages __all__ the rows of the model.
    '''
    pass


class DiscardBinManager(BaseManager.from_queryset(DiscardBinQuerySet)):
    pass
