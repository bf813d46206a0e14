import glob
import os
import re

from ...budget import GB, KB, MB, budget_report
from ...exceptions import InvalidInput, MissingInput
from ..base import InsightCommand

_SIZE = re.compile(r'^\s*([0-9]*\.?[0-9]+)\s*(B|kB|KB|MB|GB)?\s*$')
_UNITS = {None: 1, 'B': 1, 'kB': KB, 'KB': KB, 'MB': MB, 'GB': GB}


def parse_size(text):
    '''
    '4.2MB' -> 4200000.0; decimal units, bare numbers are bytes.
    '''
    match = _SIZE.match(text)
    if not match:
        raise InvalidInput(
            f'Cannot read {text!r} as a size.\n'
            f'Use a number of bytes or a number with kB, MB or GB.'
        )
    return float(match.group(1)) * _UNITS[match.group(2)]


def parse_payload(text):
    name, sep, size = text.partition('=')
    if not sep or not name:
        raise InvalidInput(
            f'Payload {text!r} is not NAME=SIZE.\nFor example full=4.2MB.'
        )
    return name, parse_size(size)


class Command(InsightCommand):
    help = (
        'Tabulate transmission time of payloads per bandwidth tier against '
        'the delivery window.'
    )
    schema = 'insight-budget/1'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument(
            '--payload', action='append', default=[],
            help='NAME=SIZE; repeat for several rows. Defaults to the '
                 'exported scene graphs.',
        )
        parser.add_argument(
            '--source', help='Source geometry size, for compression ratios.'
        )

    def exported_payloads(self):
        root = os.path.join(self.out, self.pipeline, 'graph')
        documents = sorted(glob.glob(os.path.join(root, '*', '*.graphml')))
        if not documents:
            raise MissingInput(
                f'No scene graphs under {root}.\n'
                f'Pass --payload or run the graph command first.'
            )
        return {
            os.path.relpath(path, root)[:-len('.graphml')]:
                float(os.path.getsize(path))
            for path in documents
        }

    def run(self, config, **options):
        if options['payload']:
            payloads = dict(parse_payload(p) for p in options['payload'])
        else:
            payloads = self.exported_payloads()
        source = parse_size(options['source']) if options['source'] else None
        report = budget_report(payloads, config.budget, source)
        report['provenance'] = self.provenance()
        path = self.write_json(
            os.path.join(self.pipeline_dir(), 'budget.json'), report
        )
        for row in report['rows']:
            cells = '  '.join(
                f'{c["bandwidth"]}: {c["display"]}'
                + ('' if c['fits'] else ' (over)')
                for c in row['cells']
            )
            self.stdout.write(f'{row["payload"]:<24} {row["size"]:>10}  {cells}')
        self.success(f'Wrote {path}.')
