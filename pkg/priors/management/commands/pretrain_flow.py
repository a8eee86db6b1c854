import json
import math
from pathlib import Path

import torch
from django.conf import settings

from priors.flow import FlowBundle, FlowConfig, build_flow_prior, pretrain_flow, save_flow_checkpoint
from priors.forms import PretrainFlowForm
from priors.pca import flatten_poses, pca_fit
from skeletons.codec import read_poses, stack_poses
from skeletons.commands import PoseLiftCommand
from skeletons.exceptions import NonFiniteLossError, RankError
from skeletons.topology import normalize_pose2d


def prior_pose_file(path):
    """A pose file, or the prior split of a generated dataset directory."""
    path = Path(path)
    return path / 'prior' / 'poses.jsonl' if path.is_dir() else path


class Command(PoseLiftCommand):
    help = 'Fit the PCA subspace and pretrain the normalizing-flow pose prior on unpaired 2D poses.'
    form_class = PretrainFlowForm

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--prior', type=str, required=True, help='Prior pose file or dataset directory')
        parser.add_argument('--out', type=str, required=True, help='Output directory')
        parser.add_argument('--topology', type=str)
        parser.add_argument('--components', type=int, help='PCA dimension (default per topology)')
        parser.add_argument('--epochs', type=int)
        parser.add_argument('--batch-size', type=int)
        parser.add_argument('--learning-rate', type=float)
        parser.add_argument('--holdout-fraction', type=float, help='Share of poses kept aside to report NLL')
        parser.add_argument('--layers', type=int, help='Number of coupling layers')
        parser.add_argument('--hidden', type=int, help='Hidden units of the coupling subnetworks')
        parser.add_argument('--scale-limit', type=float)

    def defaults(self):
        return {
            'topology': getattr(settings, 'POSE_TOPOLOGY', 'humanoid-9'),
            'epochs': getattr(settings, 'FLOW_EPOCHS', 50),
            'batch_size': getattr(settings, 'FLOW_BATCH_SIZE', 256),
            'learning_rate': getattr(settings, 'FLOW_LEARNING_RATE', 1e-3),
            'holdout_fraction': getattr(settings, 'FLOW_HOLDOUT_FRACTION', 0.1),
            'layers': getattr(settings, 'FLOW_COUPLING_LAYERS', 8),
            'hidden': getattr(settings, 'FLOW_HIDDEN_UNITS', 64),
            'scale_limit': getattr(settings, 'FLOW_SCALE_LIMIT', 2.0),
            'seed': 0,
        }

    def run(self, config, **options):
        topology = config['topology']
        components = config['components'] or getattr(settings, 'FLOW_COMPONENTS', {}).get(topology.name, 10)
        config['components'] = components
        out = Path(config['out'])

        poses = torch.from_numpy(stack_poses(read_poses(prior_pose_file(config['prior']), topology)))
        if poses.shape[0] < components:
            raise RankError(f'{poses.shape[0]} prior poses cannot support {components} PCA components')

        generator = torch.Generator().manual_seed(config['seed'])
        order = torch.randperm(poses.shape[0], generator=generator)
        held = int(math.floor(config['holdout_fraction'] * poses.shape[0]))
        if poses.shape[0] - held < components:
            held = 0
        holdout, fitting = poses[order[:held]], poses[order[held:]]

        pca = pca_fit(flatten_poses(normalize_pose2d(fitting, topology)), components)
        flow_config = FlowConfig(
            dimension=components, layers=config['layers'], hidden=config['hidden'], scale_limit=config['scale_limit'],
        )
        prior = build_flow_prior(flow_config, seed=config['seed'])
        self.stdout.write(f'Pretraining a {flow_config.layers}-layer flow on {fitting.shape[0]} poses '
                          f'({components} PCA components, {held} held out)')

        prior, history = pretrain_flow(
            prior, pca, fitting, topology,
            epochs=config['epochs'],
            generator=generator,
            batch_size=config['batch_size'],
            learning_rate=config['learning_rate'],
            holdout=holdout if held else None,
        )
        final = history[-1]
        reported = final.get('holdout_nll', final['train_nll'])
        if not math.isfinite(reported):
            raise NonFiniteLossError('flow_nll', reported)

        out.mkdir(parents=True, exist_ok=True)
        save_flow_checkpoint(out / 'flow.pt', FlowBundle(prior=prior, pca=pca, topology=topology, history=history))
        with (out / 'nll_curve.jsonl').open('w') as handle:
            for entry in history:
                handle.write(json.dumps(entry) + '\n')
        self.write_resolved_config(out, config)

        label = 'held-out' if held else 'training'
        self.stdout.write(self.style.SUCCESS(f'Flow prior saved to {out / "flow.pt"}; final {label} NLL {reported:.4f}'))
