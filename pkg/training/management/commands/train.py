from pathlib import Path

from django.conf import settings

from evaluation.metrics import mean_pose_baseline
from priors.flow import load_flow_checkpoint
from skeletons.commands import PoseLiftCommand
from skeletons.exceptions import TopologyMismatchError
from skeletons.renderer import RendererConfig
from skeletons.storage import write_json
from training.checkpoints import load_checkpoint
from training.forms import TrainConfigForm
from training.losses import LossWeights, reference_bone_lengths
from training.state import TrainConfig, build_state
from training.trainer import fit, load_training_data


def training_defaults():
    return {
        'steps': getattr(settings, 'TRAIN_STEPS', 50000),
        'batch_size': getattr(settings, 'TRAIN_BATCH_SIZE', 64),
        'lr_generator': getattr(settings, 'TRAIN_LR_GENERATOR', 2e-4),
        'lr_discriminator': getattr(settings, 'TRAIN_LR_DISCRIMINATOR', 1e-4),
        'eval_every': getattr(settings, 'TRAIN_EVAL_EVERY', 1000),
        'checkpoint_every': getattr(settings, 'TRAIN_CHECKPOINT_EVERY', 1000),
        'eval_batch_size': getattr(settings, 'EVAL_BATCH_SIZE', 256),
        'lifter_width': getattr(settings, 'LIFTER_WIDTH', 512),
        'lifter_blocks': getattr(settings, 'LIFTER_BLOCKS', 2),
        'omega_lambda': getattr(settings, 'LOSS_OMEGA_LAMBDA', 0.1),
        'bone_sigma': getattr(settings, 'LOSS_BONE_SIGMA', 0.1),
        'weights': dict(getattr(settings, 'LOSS_WEIGHTS', {})),
        'seed': 0,
    }


def add_training_arguments(parser):
    parser.add_argument('--data', type=str, required=True, help='Dataset directory written by synth_gen')
    parser.add_argument('--flow', type=str, required=True, help='Pretrained flow checkpoint')
    parser.add_argument('--out', type=str, required=True, help='Output directory')
    parser.add_argument('--steps', type=int)
    parser.add_argument('--batch-size', type=int)
    parser.add_argument('--lr-generator', type=float)
    parser.add_argument('--lr-discriminator', type=float)
    parser.add_argument('--eval-every', type=int, help='Validation interval in steps (0: final step only)')
    parser.add_argument('--checkpoint-every', type=int, help='Checkpoint interval in steps (0: final step only)')
    parser.add_argument('--eval-batch-size', type=int)
    parser.add_argument('--lifter-width', type=int)
    parser.add_argument('--lifter-blocks', type=int)
    parser.add_argument('--frame-scale', type=float, help='Overrides the frame scale recorded by the dataset')
    parser.add_argument('--weights', type=str, help='JSON object of loss weights, e.g. \'{"bone_length": 0}\'')
    parser.add_argument('--omega-lambda', type=float)
    parser.add_argument('--bone-sigma', type=float)


def prepare_training(config):
    """Flow prior, training data, renderer, train config and loss weights for a resolved run config."""
    flow = load_flow_checkpoint(config['flow'])
    topology = flow.topology
    data = load_training_data(config['data'], topology)
    dataset_topology = data.manifest.get('topology')
    if dataset_topology != topology.name:
        raise TopologyMismatchError(
            f'dataset holds {dataset_topology!r} poses but the flow prior models {topology.name!r}'
        )
    dataset_config = data.manifest['config']
    renderer = RendererConfig(**dataset_config['renderer'])
    frame_scale = config.get('frame_scale') or dataset_config.get('frame_scale')

    values = {key: config.get(key) for key in TrainConfig.__dataclass_fields__}
    values['frame_scale'] = frame_scale
    train_config = TrainConfig.from_settings(**values)
    weights = LossWeights.from_settings(
        **config['weights'], omega_lambda=config['omega_lambda'], bone_sigma=config['bone_sigma'],
    ).with_reference(reference_bone_lengths(data.prior, topology))
    return flow, topology, data, renderer, train_config, weights


class Command(PoseLiftCommand):
    help = 'Train the skeleton, joint, lifting and discriminator networks without 3D supervision.'
    form_class = TrainConfigForm

    def add_arguments(self, parser):
        super().add_arguments(parser)
        add_training_arguments(parser)
        parser.add_argument('--resume', type=str, help='Continue from this training checkpoint')

    def defaults(self):
        return training_defaults()

    def run(self, config, **options):
        out = Path(config['out'])
        flow, topology, data, renderer, train_config, weights = prepare_training(config)
        self.write_resolved_config(out, {**config, 'frame_scale': train_config.frame_scale})

        if config.get('resume'):
            state = load_checkpoint(config['resume'], topology)
            self.stdout.write(f'Resuming from step {state.step}')
        else:
            state = build_state(train_config, topology, renderer, weights, flow)

        self.stdout.write(
            f'Training on {len(data.images)} images and {len(data.prior)} prior poses for {config["steps"]} steps'
            + (f', validating on the {data.validation_split} split' if data.validation is not None else '')
        )
        result = fit(
            state, data, steps=config['steps'],
            metrics_path=out / 'metrics.jsonl', checkpoint_dir=out / 'checkpoints',
        )

        summary = {'final_step': state.step, 'best': state.best, 'initial_p_mpjpe': result.initial_p_mpjpe}
        if data.validation is not None:
            summary['mean_pose_baseline_p_mpjpe'] = mean_pose_baseline(data.validation.pose3d.numpy()).p_mpjpe
        write_json(out / 'summary.json', summary)

        if state.best:
            self.stdout.write(
                f'Best validation P-MPJPE {state.best["p_mpjpe"]:.3f} at step {state.best["step"]}'
            )
        self.stdout.write(self.style.SUCCESS(f'Training finished at step {state.step}; checkpoints in {out / "checkpoints"}'))
