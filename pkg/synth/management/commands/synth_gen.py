from pathlib import Path

from django.conf import settings

from skeletons.commands import PoseLiftCommand
from skeletons.renderer import RendererConfig
from synth.clutter import ClutterConfig
from synth.dataset import generate_dataset
from synth.forms import SynthGenForm
from synth.kinematics import get_model


class Command(PoseLiftCommand):
    help = 'Generate a synthetic stick-figure dataset: unlabelled train images, unpaired prior poses and labelled test data.'
    form_class = SynthGenForm

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--out', type=str, required=True, help='Dataset directory to create')
        parser.add_argument('--topology', type=str, help='Figure to generate (humanoid-9 or hand-21)')
        parser.add_argument('--train', type=int, help='Number of unlabelled training images')
        parser.add_argument('--prior', type=int, help='Number of unpaired prior poses')
        parser.add_argument('--val', type=int, help='Number of labelled validation samples')
        parser.add_argument('--test', type=int, help='Number of labelled test samples')
        parser.add_argument('--height', type=int)
        parser.add_argument('--width', type=int)
        parser.add_argument('--gamma', type=float)
        parser.add_argument('--frame-scale', type=float)
        parser.add_argument('--ellipse-count', type=int)
        parser.add_argument('--ellipse-intensity', type=float)
        parser.add_argument('--noise-amplitude', type=float)
        parser.add_argument('--augment-rotations', type=float, nargs='+',
                            help='Also write training images rotated in-plane by these angles (degrees)')

    def defaults(self):
        height, width = getattr(settings, 'RENDERER_RESOLUTION', (64, 64))
        defaults = {
            'seed': 0,
            'topology': getattr(settings, 'POSE_TOPOLOGY', 'humanoid-9'),
            'height': height,
            'width': width,
            'gamma': getattr(settings, 'RENDERER_GAMMA', 0.308),
            'frame_scale': getattr(settings, 'POSE_FRAME_SCALE', 0.2),
        }
        defaults.update(getattr(settings, 'SYNTH_COUNTS', {}))
        defaults.update(getattr(settings, 'SYNTH_CLUTTER', {}))
        return defaults

    def run(self, config, **options):
        out = Path(config['out'])
        model = get_model(config['topology'].name)
        renderer = RendererConfig(height=config['height'], width=config['width'], gamma=config['gamma'])
        clutter = ClutterConfig(
            ellipse_count=config['ellipse_count'],
            ellipse_intensity=config['ellipse_intensity'],
            noise_amplitude=config['noise_amplitude'],
        )
        counts = {split: config[split] for split in ('train', 'prior', 'val', 'test')}
        self.stdout.write(f'Generating {model.topology.name} dataset in {out}: '
                          + ', '.join(f'{split} {count}' for split, count in counts.items()))

        manifest = generate_dataset(
            model, counts, renderer, clutter, config['seed'], out,
            frame_scale=config['frame_scale'], augment_rotations=config['augment_rotations'],
        )
        self.write_resolved_config(out, config)
        self.stdout.write(self.style.SUCCESS(f'Dataset written; config hash {manifest["config_hash"][:12]}'))
