'''
Payload budget arithmetic for narrowband delivery.

Decimal units throughout: 1 MB = 10**6 bytes, 1 GB = 10**9 bytes, and
bandwidths are bits per second.
'''
from dataclasses import dataclass
from typing import Tuple

from .exceptions import ConfigError, InvalidInput

KB = 10 ** 3
MB = 10 ** 6
GB = 10 ** 9
MBPS = 10 ** 6


@dataclass(frozen=True)
class BudgetConfig:
    window: float = 30.0
    bandwidths: Tuple[float, ...] = (1 * MBPS, 5 * MBPS, 25 * MBPS)
    overhead: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, 'bandwidths', tuple(self.bandwidths))
        if not self.window > 0:
            raise ConfigError('The delivery window must be positive.')
        if not self.bandwidths or any(not b > 0 for b in self.bandwidths):
            raise ConfigError('Bandwidths must be positive.')
        if not self.overhead >= 1.0:
            raise ConfigError('The protocol overhead factor must be >= 1.')

    def budget_bytes(self, bandwidth):
        return budget_bytes(self.window, bandwidth, self.overhead)


def transmit_time(payload_bytes, bandwidth_bps, overhead=1.0):
    if not bandwidth_bps > 0:
        raise InvalidInput('Bandwidth must be positive.')
    return payload_bytes * 8 * overhead / bandwidth_bps


def budget_bytes(window, bandwidth_bps, overhead=1.0):
    '''
    The largest payload that fits in `window` seconds.
    '''
    return window * bandwidth_bps / 8 / overhead


def compression_ratio(source_bytes, graph_bytes):
    if not graph_bytes > 0:
        raise InvalidInput('Graph size must be positive.')
    return source_bytes / graph_bytes


def rounding_interval(source, graph, source_unit=GB, graph_unit=MB,
                      digits=1):
    '''
    The range of ratios consistent with sizes displayed rounded to
    `digits` decimals.
    '''
    half = 0.5 * 10 ** -digits
    return (
        (source - half) * source_unit / ((graph + half) * graph_unit),
        (source + half) * source_unit / ((graph - half) * graph_unit),
    )


def fits_window(payload_bytes, config=None):
    '''
    Per bandwidth: whether the payload arrives within the window and the
    margin left (negative when it does not).
    '''
    config = config or BudgetConfig()
    verdicts = []
    for bandwidth in config.bandwidths:
        seconds = transmit_time(payload_bytes, bandwidth, config.overhead)
        verdicts.append({
            'bandwidth_bps': bandwidth,
            'seconds': seconds,
            'fits': seconds <= config.window,
            'margin': config.window - seconds,
        })
    return verdicts


def format_duration(seconds):
    '''
    Seconds below a minute, minutes below an hour, hours to three
    significant figures.
    '''
    if seconds < 60:
        return f'{seconds:.1f} s'
    if seconds < 3600:
        return f'{seconds / 60:.1f} min'
    return f'{seconds / 3600:.3g} h'


def format_size(n_bytes):
    if n_bytes >= GB:
        return f'{n_bytes / GB:.1f} GB'
    if n_bytes >= MB:
        return f'{n_bytes / MB:.1f} MB'
    return f'{n_bytes / KB:.1f} kB'


def format_bandwidth(bps):
    return f'{bps / MBPS:g} Mbps'


def budget_report(payloads, config=None, source_bytes=None):
    '''
    The payload x bandwidth delivery grid.

    `payloads` maps a payload name to its size in bytes, in display
    order. With `source_bytes`, each row also carries its compression
    ratio.
    '''
    config = config or BudgetConfig()
    rows = []
    for name, size in payloads.items():
        cells = []
        for verdict in fits_window(size, config):
            cells.append({
                **verdict,
                'bandwidth': format_bandwidth(verdict['bandwidth_bps']),
                'display': format_duration(verdict['seconds']),
            })
        row = {
            'payload': name,
            'bytes': size,
            'size': format_size(size),
            'cells': cells,
        }
        if source_bytes is not None and size > 0:
            row['compression_ratio'] = compression_ratio(source_bytes, size)
        rows.append(row)
    return {
        'window': config.window,
        'budgets': {
            format_bandwidth(b): config.budget_bytes(b)
            for b in config.bandwidths
        },
        'rows': rows,
    }
