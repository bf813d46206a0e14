from ...synth import SynthSpec, generate, load_spec
from ..base import InsightCommand


class Command(InsightCommand):
    help = (
        'Generate a synthetic building: rasters, masks, detections of both '
        'stacks, reference clouds and the planted truth.'
    )
    schema = 'insight-synth/1'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument(
            '--spec', help='Scene spec JSON; drawn from --seed if omitted.'
        )

    def run(self, config, **options):
        spec = load_spec(options['spec']) if options['spec'] \
            else SynthSpec.random(config.seed)
        manifest = generate(self.out, spec, config.seed, self.provenance())
        self.success(
            f'Planted {sum(manifest["planted"].values())} instances in '
            f'{len(manifest["areas"])} areas under {self.out}.'
        )
