"""Training configuration and the mutable state a training run carries between steps."""
from dataclasses import asdict, dataclass, field, fields

import torch
from django.conf import settings

from skeletons.exceptions import ConfigurationError, InvalidWeightsError, TopologyMismatchError

from .networks import NetworkSpec, PosePipeline


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 50000
    batch_size: int = 64
    lr_generator: float = 2e-4
    lr_discriminator: float = 1e-4
    eval_every: int = 1000
    checkpoint_every: int = 1000
    eval_batch_size: int = 256
    lifter_width: int = 512
    lifter_blocks: int = 2
    frame_scale: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 2:
            raise ConfigurationError(f'batch size must be at least 2 to pair samples, got {self.batch_size}')
        if self.steps < 0 or self.eval_every < 0 or self.checkpoint_every < 0:
            raise ConfigurationError('step counts must be non-negative')
        if self.lr_generator <= 0 or self.lr_discriminator <= 0:
            raise ConfigurationError('learning rates must be positive')
        if self.frame_scale <= 0:
            raise ConfigurationError(f'frame scale must be positive, got {self.frame_scale}')

    @classmethod
    def from_settings(cls, **overrides):
        values = {
            'steps': getattr(settings, 'TRAIN_STEPS', 50000),
            'batch_size': getattr(settings, 'TRAIN_BATCH_SIZE', 64),
            'lr_generator': getattr(settings, 'TRAIN_LR_GENERATOR', 2e-4),
            'lr_discriminator': getattr(settings, 'TRAIN_LR_DISCRIMINATOR', 1e-4),
            'eval_every': getattr(settings, 'TRAIN_EVAL_EVERY', 1000),
            'checkpoint_every': getattr(settings, 'TRAIN_CHECKPOINT_EVERY', 1000),
            'eval_batch_size': getattr(settings, 'EVAL_BATCH_SIZE', 256),
            'lifter_width': getattr(settings, 'LIFTER_WIDTH', 512),
            'lifter_blocks': getattr(settings, 'LIFTER_BLOCKS', 2),
            'frame_scale': getattr(settings, 'POSE_FRAME_SCALE', 0.2),
        }
        values.update({key: value for key, value in overrides.items() if value is not None})
        return cls(**{key: value for key, value in values.items() if key in {f.name for f in fields(cls)}})

    def to_dict(self):
        return asdict(self)


@dataclass
class TrainState:
    config: TrainConfig
    spec: NetworkSpec
    topology: object
    renderer: object
    weights: object
    flow: object
    pipeline: PosePipeline
    generator_optimizer: torch.optim.Optimizer
    discriminator_optimizer: torch.optim.Optimizer
    rng: torch.Generator
    step: int = 0
    best: dict = field(default_factory=dict)


def build_state(config, topology, renderer, weights, flow):
    """A fresh state whose network initialisation depends only on ``config.seed``."""
    if flow.topology.name != topology.name:
        raise TopologyMismatchError(
            f'flow prior was trained on {flow.topology.name!r}, training uses {topology.name!r}'
        )
    if weights.reference_bones is None:
        raise InvalidWeightsError('reference bone lengths are not configured')
    if len(weights.reference_bones) != topology.bone_count:
        raise InvalidWeightsError(
            f'{len(weights.reference_bones)} reference bone lengths for {topology.bone_count} bones'
        )

    spec = NetworkSpec(
        joint_count=topology.joint_count,
        height=renderer.height,
        width=renderer.width,
        lifter_width=config.lifter_width,
        lifter_blocks=config.lifter_blocks,
    )
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(config.seed)
        pipeline = PosePipeline(spec)

    return TrainState(
        config=config,
        spec=spec,
        topology=topology,
        renderer=renderer,
        weights=weights,
        flow=flow,
        pipeline=pipeline,
        generator_optimizer=torch.optim.Adam(pipeline.generator_parameters(), lr=config.lr_generator),
        discriminator_optimizer=torch.optim.Adam(
            pipeline.discriminator.parameters(), lr=config.lr_discriminator, betas=(0.5, 0.999),
        ),
        rng=torch.Generator().manual_seed(config.seed),
    )
