"""Affine coupling normalizing flow over PCA coordinates of 2D poses.

``forward`` is the data-to-latent map f, ``inverse`` is g = f^-1; both return the
log-determinant of their Jacobian so that
``log p(ybar) = log N(f(ybar); 0, I) + log|det df/dybar|``.
"""
import hashlib
import logging
import math
from dataclasses import dataclass, field

import torch
from django.conf import settings
from torch import nn

from skeletons.exceptions import ConfigurationError
from skeletons.storage import read_checksummed, write_checksummed
from skeletons.topology import SkeletonTopology, normalize_pose2d

from .pca import PcaSubspace, flatten_poses, pca_project, pca_reconstruct

logger = logging.getLogger(__name__)

FLOW_FORMAT = 'poselift-flow'
FLOW_VERSION = 1


@dataclass(frozen=True)
class FlowConfig:
    dimension: int
    layers: int = 8
    hidden: int = 64
    scale_limit: float = 2.0

    @classmethod
    def from_settings(cls, dimension, **overrides):
        values = {
            'layers': getattr(settings, 'FLOW_COUPLING_LAYERS', 8),
            'hidden': getattr(settings, 'FLOW_HIDDEN_UNITS', 64),
            'scale_limit': getattr(settings, 'FLOW_SCALE_LIMIT', 2.0),
        }
        values.update({key: value for key, value in overrides.items() if value is not None})
        return cls(dimension=dimension, **values)

    def to_dict(self):
        return {'dimension': self.dimension, 'layers': self.layers, 'hidden': self.hidden, 'scale_limit': self.scale_limit}


def _subnet(dimension, hidden):
    net = nn.Sequential(
        nn.Linear(dimension, hidden),
        nn.LeakyReLU(0.2),
        nn.Linear(hidden, hidden),
        nn.LeakyReLU(0.2),
        nn.Linear(hidden, dimension),
    )
    # A fresh coupling is the identity map
    nn.init.zeros_(net[-1].weight)
    nn.init.zeros_(net[-1].bias)
    return net


class AffineCoupling(nn.Module):
    def __init__(self, mask, hidden, scale_limit):
        super().__init__()
        self.register_buffer('mask', mask)
        self.scale_limit = scale_limit
        self.scale_net = _subnet(mask.numel(), hidden)
        self.translation_net = _subnet(mask.numel(), hidden)

    def _scale_and_shift(self, x):
        kept = x * self.mask
        free = 1.0 - self.mask
        scale = self.scale_limit * torch.tanh(self.scale_net(kept)) * free
        shift = self.translation_net(kept) * free
        return scale, shift

    def forward(self, x):
        scale, shift = self._scale_and_shift(x)
        z = x * self.mask + (1.0 - self.mask) * (x * torch.exp(scale) + shift)
        return z, scale.sum(-1)

    def inverse(self, z):
        scale, shift = self._scale_and_shift(z)
        x = z * self.mask + (1.0 - self.mask) * ((z - shift) * torch.exp(-scale))
        return x, -scale.sum(-1)


class FlowPrior(nn.Module):
    def __init__(self, config):
        super().__init__()
        if config.dimension < 2:
            raise ConfigurationError('a coupling flow needs at least two dimensions')
        self.config = config
        half = (torch.arange(config.dimension) < config.dimension // 2).float()
        self.layers = nn.ModuleList(
            AffineCoupling(half if k % 2 == 0 else 1.0 - half, config.hidden, config.scale_limit)
            for k in range(config.layers)
        )

    @property
    def dimension(self):
        return self.config.dimension

    def forward(self, x):
        log_det = torch.zeros(x.shape[:-1], dtype=x.dtype, device=x.device)
        for layer in self.layers:
            x, layer_log_det = layer(x)
            log_det = log_det + layer_log_det
        return x, log_det

    def inverse(self, z):
        log_det = torch.zeros(z.shape[:-1], dtype=z.dtype, device=z.device)
        for layer in reversed(self.layers):
            z, layer_log_det = layer.inverse(z)
            log_det = log_det + layer_log_det
        return z, log_det

    def log_prob(self, ybar):
        z, log_det = self(ybar)
        base = -0.5 * (z ** 2).sum(-1) - 0.5 * self.dimension * math.log(2.0 * math.pi)
        return base + log_det

    def sample(self, count, generator=None):
        reference = next(self.parameters())
        z = torch.randn(count, self.dimension, generator=generator, dtype=reference.dtype)
        with torch.no_grad():
            return self.inverse(z.to(reference.device))[0]

    def freeze(self):
        self.requires_grad_(False)
        self.eval()
        return self


def build_flow_prior(config, seed=0):
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        return FlowPrior(config)


def parameter_checksum(module):
    digest = hashlib.sha256()
    for name, tensor in sorted(module.state_dict().items()):
        digest.update(name.encode())
        digest.update(tensor.detach().cpu().contiguous().numpy().tobytes())
    return digest.hexdigest()


def pca_coordinates(pca, poses, topology):
    """Normalize poses (..., J, 2) and project them into the PCA subspace."""
    return pca_project(pca, flatten_poses(normalize_pose2d(poses, topology)))


def log_density(prior, pca, poses, topology):
    ybar = pca_coordinates(pca, poses, topology)
    reference = next(prior.parameters())
    return prior.log_prob(ybar.to(reference.dtype))


def nll_loss(prior, pca, poses, topology):
    return -log_density(prior, pca, poses, topology).mean()


def sample_poses(prior, pca, count, topology, generator=None):
    """Draw poses (count, J, 2) from the prior through g and the PCA reconstruction."""
    vectors = pca_reconstruct(pca, prior.sample(count, generator).to(torch.float64))
    return vectors.reshape(count, topology.joint_count, 2)


def pretrain_flow(prior, pca, poses, topology, epochs, generator, batch_size=256, learning_rate=1e-3, holdout=None):
    """Fit the flow by maximum likelihood; return the frozen prior and per-epoch mean NLLs.

    ``holdout`` poses, when given, are scored after every epoch as well.
    """
    reference = next(prior.parameters())
    data = pca_coordinates(pca, poses, topology).to(reference.dtype)
    held = None if holdout is None else pca_coordinates(pca, holdout, topology).to(reference.dtype)
    optimizer = torch.optim.Adam(prior.parameters(), lr=learning_rate)

    history = []
    prior.train()
    for epoch in range(epochs):
        order = torch.randperm(data.shape[0], generator=generator)
        total, seen = 0.0, 0
        for start in range(0, data.shape[0], batch_size):
            batch = data[order[start:start + batch_size]].to(reference.device)
            loss = -prior.log_prob(batch).mean()
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            total += loss.item() * batch.shape[0]
            seen += batch.shape[0]
        entry = {'epoch': epoch + 1, 'train_nll': total / max(seen, 1)}
        if held is not None:
            with torch.no_grad():
                entry['holdout_nll'] = -prior.log_prob(held.to(reference.device)).mean().item()
        history.append(entry)
        logger.debug('flow epoch %d: %s', epoch + 1, entry)
    return prior.freeze(), history


@dataclass
class FlowBundle:
    prior: FlowPrior
    pca: PcaSubspace
    topology: SkeletonTopology
    history: list = field(default_factory=list)


def flow_payload(bundle):
    return {
        'config': bundle.prior.config.to_dict(),
        'pca': bundle.pca.to_dict(),
        'topology': bundle.topology.to_dict(),
        'state_dict': bundle.prior.state_dict(),
    }


def save_flow_checkpoint(path, bundle):
    payload = {'format': FLOW_FORMAT, 'version': FLOW_VERSION, 'history': bundle.history}
    payload.update(flow_payload(bundle))
    return write_checksummed(path, payload)


def bundle_from_payload(payload):
    prior = FlowPrior(FlowConfig(**payload['config']))
    prior.load_state_dict(payload['state_dict'])
    return FlowBundle(
        prior=prior.freeze(),
        pca=PcaSubspace.from_dict(payload['pca']),
        topology=SkeletonTopology.from_dict(payload['topology']),
        history=list(payload.get('history', [])),
    )


def load_flow_checkpoint(path):
    """Load a pretrained prior; the returned flow is frozen."""
    return bundle_from_payload(read_checksummed(path, FLOW_FORMAT, {FLOW_VERSION}))
