import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor

from django.core.management.base import BaseCommand, CommandError

from ..conf import load_config
from ..exceptions import InsightError, MissingInput
from ..taxonomy import Role

logger = logging.getLogger(__name__)

INTERNAL_ERROR = 3


class InsightCommand(BaseCommand):
    '''
    Base class of the pipeline subcommands.

    Subclasses implement `run(config, **options)`. Pipeline errors leave
    the process with their own exit code (1 invalid input, 2 missing
    input); anything else is an internal error (3).
    '''
    # the output schema of the artifact this command writes
    schema = None

    def add_arguments(self, parser):
        parser.add_argument(
            '--config', help='JSON file overriding the pipeline defaults.'
        )
        parser.add_argument(
            '--out', help='Root directory for every artifact.'
        )
        parser.add_argument('--jobs', type=int, help='Parallel areas.')
        parser.add_argument('--seed', type=int)
        parser.add_argument(
            '--role', choices=[r.value for r in Role],
            help='Responder role view.',
        )
        parser.add_argument(
            '--pipeline', default='sam3',
            help='Tag of the vision stack whose artifacts are processed.',
        )

    def handle(self, *args, **options):
        try:
            self.config = load_config(
                options['config'],
                jobs=options['jobs'],
                seed=options['seed'],
                role=options['role'],
            )
            self.out = options['out'] or self.config.paths.get('out') \
                or 'insight_out'
            self.pipeline = options['pipeline']
            # the --config path is consumed above; `config` is the loaded one
            options = {k: v for k, v in options.items() if k != 'config'}
            self.run(self.config, **options)
        except InsightError as e:
            logger.error('%s failed: %s', self.command_name, e)
            raise CommandError(str(e), returncode=e.exit_code) from e
        except CommandError:
            raise
        except Exception as e:
            logger.exception('%s failed with an internal error.',
                             self.command_name)
            raise CommandError(
                f'Internal error: {e}', returncode=INTERNAL_ERROR
            ) from e

    @property
    def command_name(self):
        return self.__module__.rsplit('.', 1)[-1]

    def run(self, config, **options):
        raise NotImplementedError(
            'subclasses of InsightCommand must provide a run() method'
        )

    # helpers

    def pipeline_dir(self, *parts):
        path = os.path.join(self.out, self.pipeline, *parts)
        os.makedirs(path, exist_ok=True)
        return path

    def provenance(self, schema=None):
        return self.config.provenance(schema or self.schema)

    def write_json(self, path, payload):
        os.makedirs(os.path.dirname(path) or '.', exist_ok=True)
        with open(path, 'w', encoding='utf-8') as fh:
            json.dump(payload, fh, indent=1, sort_keys=True)
            fh.write('\n')
        return path

    def map_areas(self, fn, areas):
        '''
        Apply `fn` to every area on `config.jobs` threads; results come
        back in area order.
        '''
        with ThreadPoolExecutor(max_workers=self.config.jobs) as pool:
            return list(pool.map(fn, areas))

    def require_dir(self, path, what):
        if not path or not os.path.isdir(path):
            raise MissingInput(
                f'{what} directory {path!r} does not exist.\n'
                f'Pass it on the command line or under "paths" in --config.'
            )
        return path

    def success(self, message):
        self.stdout.write(self.style.SUCCESS(message))
