from pathlib import Path

from django.conf import settings

from evaluation.figures import emit_pose_figure
from skeletons.commands import PoseLiftCommand
from skeletons.renderer import load_png
from skeletons.storage import write_json
from training.checkpoints import load_checkpoint
from training.forms import LiftForm
from training.trainer import predict


class Command(PoseLiftCommand):
    help = 'Lift the pose in a single image to 3D with a trained checkpoint.'
    form_class = LiftForm

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--checkpoint', type=str, required=True)
        parser.add_argument('--image', type=str, required=True, help='Grayscale PNG at the training resolution')
        parser.add_argument('--out', type=str, required=True, help='Output directory')
        parser.add_argument('--figure', action='store_true', help='Also draw the input image and the 3D pose')

    def defaults(self):
        return {'views': list(getattr(settings, 'EVAL_FIGURE_VIEWS', (0.0, 90.0)))}

    def run(self, config, **options):
        out = Path(config['out'])
        state = load_checkpoint(config['checkpoint'])
        image = load_png(config['image'])
        prediction = predict(state, image)

        path = write_json(out / 'lift.json', {
            'id': Path(config['image']).stem,
            'topology': state.topology.name,
            'p2d': prediction.pose2d.tolist(),
            'p3d': prediction.pose3d.tolist(),
        })
        self.write_resolved_config(out, config)
        if config['figure']:
            figure = emit_pose_figure(image, prediction.pose3d.numpy(), state.topology, out / 'lift.png',
                                      views=config['views'])
            self.stdout.write(f'Figure written to {figure}')
        self.stdout.write(self.style.SUCCESS(f'Lifted pose written to {path}'))
