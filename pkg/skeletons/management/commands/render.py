from pathlib import Path

import torch
from django.conf import settings

from priors.flow import load_flow_checkpoint, sample_poses
from skeletons.codec import read_poses, stack_poses
from skeletons.commands import PoseLiftCommand
from skeletons.forms import RenderForm
from skeletons.renderer import RendererConfig, place_in_frame, render, save_png
from skeletons.topology import normalize_pose2d


class Command(PoseLiftCommand):
    help = 'Render skeleton images of the poses in a pose file, or of poses sampled from a flow prior.'
    form_class = RenderForm

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--poses', type=str, help='Pose file (JSON lines) to render')
        parser.add_argument('--flow', type=str, help='Flow checkpoint to sample poses from')
        parser.add_argument('--count', type=int, help='Number of poses to sample from --flow')
        parser.add_argument('--out', type=str, required=True, help='Directory for the PNG files')
        parser.add_argument('--topology', type=str, help='Preset name or JSON topology descriptor')
        parser.add_argument('--limit', type=int, help='Render at most this many poses')
        parser.add_argument('--height', type=int)
        parser.add_argument('--width', type=int)
        parser.add_argument('--gamma', type=float)
        parser.add_argument('--frame-scale', type=float, help='Image-frame size of a unit-scale pose')

    def defaults(self):
        height, width = getattr(settings, 'RENDERER_RESOLUTION', (64, 64))
        return {
            'topology': getattr(settings, 'POSE_TOPOLOGY', 'humanoid-9'),
            'height': height,
            'width': width,
            'gamma': getattr(settings, 'RENDERER_GAMMA', 0.308),
            'frame_scale': getattr(settings, 'POSE_FRAME_SCALE', 0.2),
            'seed': 0,
        }

    def run(self, config, **options):
        out = Path(config['out'])
        renderer = RendererConfig(height=config['height'], width=config['width'], gamma=config['gamma'])

        if config['flow']:
            bundle = load_flow_checkpoint(config['flow'])
            topology = bundle.topology
            generator = torch.Generator().manual_seed(config['seed'] or 0)
            poses = sample_poses(bundle.prior, bundle.pca, config['count'], topology, generator)
            ids = [f'sample-{index:06d}' for index in range(config['count'])]
        else:
            topology = config['topology']
            records = read_poses(config['poses'], topology)
            if config['limit']:
                records = records[:config['limit']]
            if not records:
                self.stdout.write(self.style.NOTICE('No poses to render.'))
                return
            poses = torch.from_numpy(stack_poses(records))
            ids = [record.id for record in records]

        framed = place_in_frame(normalize_pose2d(poses, topology), config['frame_scale'])
        images = render(framed, topology, renderer)

        out.mkdir(parents=True, exist_ok=True)
        for pose_id, image in zip(ids, images):
            save_png(image, out / f'{pose_id}.png')
        self.write_resolved_config(out, config)
        self.stdout.write(self.style.SUCCESS(f'Rendered {len(ids)} skeleton images to {out}'))
