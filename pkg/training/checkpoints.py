"""Training checkpoints in the shared checksummed container.

A checkpoint is self-contained: besides network and optimizer state it embeds the frozen
flow prior, the renderer and loss settings, and the skeleton topology it was trained on.
"""
import logging

from priors.flow import bundle_from_payload, flow_payload
from skeletons.exceptions import VersionError
from skeletons.renderer import RendererConfig
from skeletons.storage import read_checksummed, write_checksummed
from skeletons.topology import SkeletonTopology

from .losses import LossWeights
from .state import TrainConfig, build_state

logger = logging.getLogger(__name__)

TRAIN_FORMAT = 'poselift-train'
TRAIN_VERSION = 1


def save_checkpoint(path, state):
    payload = {
        'format': TRAIN_FORMAT,
        'version': TRAIN_VERSION,
        'step': state.step,
        'best': dict(state.best),
        'topology': state.topology.to_dict(),
        'config': state.config.to_dict(),
        'renderer': state.renderer.to_dict(),
        'weights': state.weights.to_dict(),
        'flow': flow_payload(state.flow),
        'pipeline': state.pipeline.state_dict(),
        'generator_optimizer': state.generator_optimizer.state_dict(),
        'discriminator_optimizer': state.discriminator_optimizer.state_dict(),
        'rng': state.rng.get_state(),
    }
    path = write_checksummed(path, payload)
    logger.debug('checkpoint for step %d written to %s', state.step, path)
    return path


def same_topology(first, second):
    return (first.joint_names, first.parent, first.edges) == (second.joint_names, second.parent, second.edges)


def load_checkpoint(path, topology=None):
    """Restore a :class:`TrainState`; ``topology``, when given, must match the checkpoint's."""
    payload = read_checksummed(path, TRAIN_FORMAT, {TRAIN_VERSION})
    stored = SkeletonTopology.from_dict(payload['topology'])
    if topology is not None and not same_topology(stored, topology):
        raise VersionError(f'{path}: checkpoint was trained on {stored.name!r}, not {topology.name!r}')

    state = build_state(
        TrainConfig(**payload['config']),
        stored,
        RendererConfig(**payload['renderer']),
        LossWeights.from_dict(payload['weights']),
        bundle_from_payload(payload['flow']),
    )
    state.pipeline.load_state_dict(payload['pipeline'])
    state.generator_optimizer.load_state_dict(payload['generator_optimizer'])
    state.discriminator_optimizer.load_state_dict(payload['discriminator_optimizer'])
    state.rng.set_state(payload['rng'])
    state.step = int(payload['step'])
    state.best = dict(payload.get('best', {}))
    return state
