"""The self-supervised training loop.

One step updates the discriminator once on rendered prior skeletons against predicted
skeleton images, then updates the skeleton, joint and lifting networks once on the weighted
sum of the seven loss terms. Training only ever sees unlabelled images and unpaired 2D
prior poses; 3D labels are read solely by :func:`evaluate_state`.
"""
import copy
import logging
from dataclasses import dataclass, field
from pathlib import Path

import torch

from evaluation.metrics import evaluate_predictions
from priors.flow import nll_loss
from skeletons.exceptions import DatasetEmptyError, NonFiniteLossError, PairingError
from skeletons.geometry import consistency_cycle
from skeletons.renderer import place_in_frame, render
from skeletons.topology import center_pose2d, normalize_pose2d
from synth.dataset import has_split, load_labelled_split, load_prior_poses, load_training_images, read_manifest

from .checkpoints import save_checkpoint
from .losses import (
    TERMS,
    loss_2d,
    loss_3d,
    loss_bl,
    loss_def,
    loss_discriminator_from_logits,
    loss_generator_from_logits,
    loss_omega,
    loss_total,
)
from .signals import step_completed

logger = logging.getLogger(__name__)


@dataclass
class TrainingData:
    images: torch.Tensor
    prior: torch.Tensor
    validation: object = None
    validation_split: str = None
    manifest: dict = field(default_factory=dict)


@dataclass(frozen=True)
class StepResult:
    losses: dict
    total: float
    discriminator_objective: float

    def record(self, step, validation_p_mpjpe=None):
        return {
            'step': step,
            **self.losses,
            'total': self.total,
            'discriminator_objective': self.discriminator_objective,
            'validation_p_mpjpe': validation_p_mpjpe,
        }


@dataclass(frozen=True)
class Prediction:
    skeletons: torch.Tensor
    pose2d: torch.Tensor
    pose3d: torch.Tensor


@dataclass
class FitResult:
    state: object
    history: list
    initial_p_mpjpe: float = None


def load_training_data(dataset_dir, topology):
    """Training images, normalized prior poses and the validation split (``val``, else ``test``)."""
    images = load_training_images(dataset_dir)
    prior = normalize_pose2d(load_prior_poses(dataset_dir, topology), topology).to(torch.float32)
    validation, split = None, None
    for candidate in ('val', 'test'):
        if has_split(dataset_dir, candidate):
            validation, split = load_labelled_split(dataset_dir, candidate, topology), candidate
            break
    logger.info('loaded %d training images and %d prior poses from %s', len(images), len(prior), dataset_dir)
    return TrainingData(images, prior, validation, split, read_manifest(dataset_dir))


def sample_batch(data, batch_size, generator):
    if len(data.images) == 0 or len(data.prior) == 0:
        raise DatasetEmptyError('training needs at least one image and one prior pose')
    images = data.images[torch.randint(len(data.images), (batch_size,), generator=generator)]
    prior = data.prior[torch.randint(len(data.prior), (batch_size,), generator=generator)]
    return images, prior


def train_step(state, images, prior_poses, generator=None):
    """One discriminator update followed by one update of the skeleton, joint and lifting networks."""
    generator = state.rng if generator is None else generator
    if images.shape[0] < 2:
        raise PairingError(f'a training step needs at least 2 images, got {images.shape[0]}')
    pipeline, topology, weights = state.pipeline, state.topology, state.weights
    pipeline.train()

    images = images.to(torch.float32)
    prior_frame = place_in_frame(prior_poses.to(torch.float32), state.config.frame_scale)
    with torch.no_grad():
        prior_skeletons = render(prior_frame, topology, state.renderer)
    skeletons = pipeline.skeleton_net(images)

    objective = loss_discriminator_from_logits(
        pipeline.discriminator(prior_skeletons), pipeline.discriminator(skeletons.detach()),
    )
    if not torch.isfinite(objective):
        raise NonFiniteLossError('discriminator', float(objective))
    state.discriminator_optimizer.zero_grad(set_to_none=True)
    (-objective).backward()
    state.discriminator_optimizer.step()

    pose2d = pipeline.joint_net(skeletons)
    centered = center_pose2d(pose2d, topology)
    cycle = consistency_cycle(centered, lambda pose: pipeline.lift(pose, topology), generator)

    pipeline.discriminator.requires_grad_(False)
    try:
        components = {
            'adversarial': loss_generator_from_logits(pipeline.discriminator(skeletons)),
            'omega': loss_omega(
                pipeline.joint_net(prior_skeletons), prior_frame,
                render(pose2d, topology, state.renderer), skeletons, weights.omega_lambda,
            ),
            'reprojection_2d': loss_2d(cycle.y_prime, centered),
            'consistency_3d': loss_3d(cycle.v_hat_prime, cycle.v_hat),
            'deformation': loss_def(cycle.v, cycle.v_prime, generator=generator),
            'flow_nll': nll_loss(state.flow.prior, state.flow.pca, cycle.y_hat, topology),
            'bone_length': loss_bl(cycle.v, topology, weights.reference_bones, weights.bone_sigma),
        }
        total, breakdown = loss_total(components, weights)
        state.generator_optimizer.zero_grad(set_to_none=True)
        total.backward()
        state.generator_optimizer.step()
    finally:
        pipeline.discriminator.requires_grad_(True)

    state.step += 1
    return StepResult(
        losses={term: breakdown[term] for term in TERMS},
        total=float(total.detach()),
        discriminator_objective=float(objective.detach()),
    )


@torch.no_grad()
def predict(state, images, batch_size=None):
    """Skeleton images, 2D joints and 3D poses for images (n, H, W) or a single image (H, W)."""
    images = torch.as_tensor(images, dtype=torch.float32)
    single = images.dim() == 2
    if single:
        images = images.unsqueeze(0)
    batch_size = batch_size or state.config.eval_batch_size

    pipeline = state.pipeline
    training = pipeline.training
    pipeline.eval()
    try:
        parts = [pipeline.predict(images[start:start + batch_size], state.topology)
                 for start in range(0, len(images), batch_size)]
    finally:
        pipeline.train(training)

    skeletons, pose2d, pose3d = (torch.cat(tensors) for tensors in zip(*parts))
    if single:
        skeletons, pose2d, pose3d = skeletons[0], pose2d[0], pose3d[0]
    return Prediction(skeletons, pose2d, pose3d)


def evaluate_state(state, split, batch_size=None, unit_scale=None, threshold=None):
    prediction = predict(state, split.images, batch_size)
    return evaluate_predictions(
        prediction.pose3d.to(torch.float64).numpy(), split.pose3d.numpy(), unit_scale, threshold,
    )


def due(step, every, last):
    return step == last or bool(every) and step % every == 0


def fit(state, data, steps=None, metrics_path=None, checkpoint_dir=None):
    """Run ``steps`` training steps (the configured count by default) from the current step.

    Validation snapshots and checkpoints follow ``eval_every`` and ``checkpoint_every`` and
    always include the final step. When validation data is present the returned state holds
    the best weights seen during this call, and ``state.best`` describes them; a best carried
    in from a resumed checkpoint is replaced.
    """
    steps = state.config.steps if steps is None else steps
    last = state.step + steps
    checkpoint_dir = None if checkpoint_dir is None else Path(checkpoint_dir)
    result = FitResult(state=state, history=[])
    best_weights, best_p_mpjpe = None, None

    if data.validation is not None and state.step == 0:
        result.initial_p_mpjpe = evaluate_state(state, data.validation).p_mpjpe
        logger.info('step 0: validation P-MPJPE %.3f', result.initial_p_mpjpe)

    while state.step < last:
        images, prior = sample_batch(data, state.config.batch_size, state.rng)
        outcome = train_step(state, images, prior)

        validation = None
        if data.validation is not None and due(state.step, state.config.eval_every, last):
            validation = evaluate_state(state, data.validation).p_mpjpe
            if best_p_mpjpe is None or validation < best_p_mpjpe:
                best_p_mpjpe = validation
                state.best = {'step': state.step, 'p_mpjpe': validation}
                best_weights = copy.deepcopy(state.pipeline.state_dict())
                if checkpoint_dir is not None:
                    save_checkpoint(checkpoint_dir / 'best.pt', state)

        record = outcome.record(state.step, validation)
        result.history.append(record)
        step_completed.send(sender=state.__class__, record=record, metrics_path=metrics_path)

        if checkpoint_dir is not None and due(state.step, state.config.checkpoint_every, last):
            save_checkpoint(checkpoint_dir / f'step-{state.step:06d}.pt', state)
            save_checkpoint(checkpoint_dir / 'last.pt', state)

    if best_weights is not None:
        state.pipeline.load_state_dict(best_weights)
    return result
