"""Loss terms of the self-supervised lifting objective.

Every term uses mean reduction. The adversarial terms have probability forms (checked
against the open unit interval) and logit forms used during training for stability.
"""
import math
from dataclasses import dataclass, fields, replace

import torch
import torch.nn.functional as F
from django.conf import settings

from skeletons.exceptions import (
    DomainError,
    InvalidWeightsError,
    NonFiniteLossError,
    PairingError,
    ShapeMismatchError,
    ZeroSkeletonError,
)

TERMS = ('adversarial', 'omega', 'reprojection_2d', 'consistency_3d', 'deformation', 'flow_nll', 'bone_length')
BASE_TERMS = ('reprojection_2d', 'consistency_3d', 'deformation')


@dataclass(frozen=True)
class LossWeights:
    adversarial: float = 1.0
    omega: float = 1.0
    base: float = 1.0
    flow_nll: float = 1.0
    bone_length: float = 1.0
    omega_lambda: float = 0.1
    bone_sigma: float = 0.1
    reference_bones: tuple = None

    def __post_init__(self):
        for name in ('adversarial', 'omega', 'base', 'flow_nll', 'bone_length'):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise InvalidWeightsError(f'loss weight {name!r} must be a finite non-negative number, got {value}')
        if not self.omega_lambda > 0:
            raise InvalidWeightsError(f'omega lambda must be positive, got {self.omega_lambda}')
        if not self.bone_sigma > 0:
            raise InvalidWeightsError(f'bone-length sigma must be positive, got {self.bone_sigma}')
        if self.reference_bones is not None:
            mean = sum(self.reference_bones) / len(self.reference_bones)
            if abs(mean - 1.0) > 1e-6:
                raise InvalidWeightsError(f'reference bone lengths must average 1, got {mean}')

    @classmethod
    def from_settings(cls, **overrides):
        values = dict(getattr(settings, 'LOSS_WEIGHTS', {}))
        values['omega_lambda'] = getattr(settings, 'LOSS_OMEGA_LAMBDA', 0.1)
        values['bone_sigma'] = getattr(settings, 'LOSS_BONE_SIGMA', 0.1)
        values.update({key: value for key, value in overrides.items() if value is not None})
        unknown = set(values) - {field.name for field in fields(cls)}
        if unknown:
            raise InvalidWeightsError(f'unknown loss weights: {", ".join(sorted(unknown))}')
        return cls(**values)

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        if data.get('reference_bones') is not None:
            data['reference_bones'] = tuple(data['reference_bones'])
        return cls(**data)

    def with_reference(self, reference_bones):
        return replace(self, reference_bones=tuple(float(value) for value in reference_bones))

    def to_dict(self):
        data = {field.name: getattr(self, field.name) for field in fields(self)}
        if self.reference_bones is not None:
            data['reference_bones'] = list(self.reference_bones)
        return data


def _same_shape(first, second, what):
    if first.shape != second.shape:
        raise ShapeMismatchError(f'{what}: shapes {tuple(first.shape)} and {tuple(second.shape)} differ')


def loss_2d(y_prime, y):
    _same_shape(y_prime, y, '2D consistency')
    return ((y_prime - y) ** 2).mean()


def loss_3d(v_hat_prime, v_hat):
    _same_shape(v_hat_prime, v_hat, '3D consistency')
    return ((v_hat_prime - v_hat) ** 2).mean()


def random_derangement(n, generator=None):
    """A permutation of range(n) without fixed points, uniform by rejection."""
    if n < 2:
        raise PairingError(f'pairing samples needs a batch of at least 2, got {n}')
    identity = torch.arange(n)
    while True:
        permutation = torch.randperm(n, generator=generator)
        if not (permutation == identity).any():
            return permutation


def loss_def(v, v_prime, pairing=None, generator=None):
    """Mean squared change of pairwise pose differences across the cycle, pairs ``j -> pairing[j]``."""
    _same_shape(v, v_prime, 'deformation')
    if v.shape[0] < 2:
        raise PairingError(f'deformation loss needs a batch of at least 2, got {v.shape[0]}')
    pairing = random_derangement(v.shape[0], generator) if pairing is None else pairing
    pairing = pairing.to(v.device)
    change = (v_prime - v_prime[pairing]) - (v - v[pairing])
    return (change ** 2).sum(-1).mean()


def relative_bone_lengths(pose, topology):
    """Bone lengths (..., N) divided by their per-pose mean."""
    first, second = topology.edge_index(device=pose.device)
    lengths = torch.linalg.vector_norm(pose[..., first, :] - pose[..., second, :], dim=-1)
    mean = lengths.mean(dim=-1, keepdim=True)
    if (mean <= 0).any():
        raise ZeroSkeletonError('every bone has zero length')
    return lengths / mean


def reference_bone_lengths(prior_poses, topology):
    """Mean relative 2D bone lengths over prior poses, rescaled to average exactly 1."""
    prior_poses = torch.as_tensor(prior_poses, dtype=torch.float64)
    reference = relative_bone_lengths(prior_poses, topology).reshape(-1, topology.bone_count).mean(dim=0)
    return tuple((reference / reference.mean()).tolist())


def loss_bl(pose3d, topology, reference, sigma):
    """Gaussian negative log-likelihood of relative bone lengths, summed over bones, batch-averaged."""
    lengths = relative_bone_lengths(pose3d, topology)
    reference = torch.as_tensor(reference, dtype=lengths.dtype, device=lengths.device)
    if reference.shape != lengths.shape[-1:]:
        raise ShapeMismatchError(f'{reference.numel()} reference bone lengths for {lengths.shape[-1]} bones')
    nll = 0.5 * ((lengths - reference) / sigma) ** 2 + math.log(sigma * math.sqrt(2.0 * math.pi))
    return nll.sum(-1).mean()


def _check_probabilities(values, what):
    if torch.isnan(values).any() or (values < 0).any() or (values > 1).any():
        raise DomainError(f'{what} must lie in [0, 1]')


def loss_discriminator(real, fake):
    """Discriminator objective ``mean log D(w) + mean log(1 - D(s))``; the discriminator maximises it."""
    _check_probabilities(real, 'discriminator outputs on prior skeletons')
    _check_probabilities(fake, 'discriminator outputs on predicted skeletons')
    return torch.log(real).mean() + torch.log1p(-fake).mean()


def loss_generator_adv(fake):
    _check_probabilities(fake, 'discriminator outputs on predicted skeletons')
    return -torch.log(fake).mean()


def loss_discriminator_from_logits(real_logits, fake_logits):
    return F.logsigmoid(real_logits).mean() + F.logsigmoid(-fake_logits).mean()


def loss_generator_from_logits(fake_logits):
    return -F.logsigmoid(fake_logits).mean()


def loss_omega(predicted_on_prior, prior_joints, rendered, skeleton, omega_lambda):
    """Joint error of the regressor on prior skeletons plus ``omega_lambda`` times the re-render error."""
    _same_shape(predicted_on_prior, prior_joints, 'prior joints')
    _same_shape(rendered, skeleton, 'skeleton images')
    return ((predicted_on_prior - prior_joints) ** 2).mean() + omega_lambda * ((rendered - skeleton) ** 2).mean()


def loss_total(components, weights):
    """Weighted sum of the seven terms; returns the total and a breakdown of raw term values."""
    missing = set(TERMS) - set(components)
    if missing:
        raise ShapeMismatchError(f'loss components lack {", ".join(sorted(missing))}')
    for term in TERMS:
        value = torch.as_tensor(components[term])
        if not torch.isfinite(value).all():
            raise NonFiniteLossError(term, float(value))

    base = sum(components[term] for term in BASE_TERMS)
    total = (
        weights.adversarial * components['adversarial']
        + weights.omega * components['omega']
        + weights.base * base
        + weights.flow_nll * components['flow_nll']
        + weights.bone_length * components['bone_length']
    )
    breakdown = {term: float(torch.as_tensor(components[term]).detach()) for term in TERMS}
    return total, breakdown
