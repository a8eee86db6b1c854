"""Differentiable skeleton images.

A pixel's value is ``exp(-gamma * d**2)`` where ``d`` is its distance (in pixels) to the
nearest bone segment. Distances use the clamped point-to-segment projection, so the
image is exact and differentiable in the joint coordinates.
"""
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from django.conf import settings
from PIL import Image

from .exceptions import ConfigurationError


@dataclass(frozen=True)
class RendererConfig:
    height: int = 64
    width: int = 64
    gamma: float = 0.308

    def __post_init__(self):
        if self.gamma <= 0:
            raise ConfigurationError(f'renderer gamma must be positive, got {self.gamma}')
        if self.height < 8 or self.width < 8:
            raise ConfigurationError(f'renderer resolution {self.height}x{self.width} is below 8x8')

    @property
    def resolution(self):
        return (self.height, self.width)

    @classmethod
    def from_settings(cls, **overrides):
        height, width = getattr(settings, 'RENDERER_RESOLUTION', (64, 64))
        values = {'height': height, 'width': width, 'gamma': getattr(settings, 'RENDERER_GAMMA', 0.308)}
        values.update({key: value for key, value in overrides.items() if value is not None})
        return cls(**values)

    def to_dict(self):
        return {'height': self.height, 'width': self.width, 'gamma': self.gamma}


def to_pixels(pose, config):
    """Map image-frame coordinates in [-1, 1] (y up) to (column, row) pixel coordinates."""
    pose = torch.as_tensor(pose)
    column = (pose[..., 0] + 1.0) * 0.5 * (config.width - 1)
    row = (1.0 - pose[..., 1]) * 0.5 * (config.height - 1)
    return torch.stack([column, row], dim=-1)


def pixel_grid(config, dtype=torch.float32, device=None):
    rows, columns = torch.meshgrid(
        torch.arange(config.height, dtype=dtype, device=device),
        torch.arange(config.width, dtype=dtype, device=device),
        indexing='ij',
    )
    return torch.stack([columns, rows], dim=-1)


def segment_distance_field(pose, topology, config):
    """Squared pixel distance from every pixel centre to the nearest bone; shape (..., H, W)."""
    points = to_pixels(pose, config)
    first, second = topology.edge_index(device=points.device)
    start = points[..., second, :]
    segment = points[..., first, :] - start

    grid = pixel_grid(config, dtype=points.dtype, device=points.device)
    relative = grid - start[..., None, None, :]
    direction = segment[..., None, None, :]
    length2 = (segment ** 2).sum(-1).clamp_min(1e-12)[..., None, None]
    r = ((relative * direction).sum(-1) / length2).clamp(0.0, 1.0)
    offset = relative - r[..., None] * direction
    return (offset ** 2).sum(-1).amin(dim=-3)


def render(pose, topology, config):
    """Skeleton image of poses (..., J, 2) given in the image frame; values in (0, 1]."""
    return torch.exp(-config.gamma * segment_distance_field(pose, topology, config))


def render_batch(poses, topology, config):
    if isinstance(poses, (list, tuple)):
        poses = torch.stack([torch.as_tensor(pose) for pose in poses])
    return render(poses, topology, config)


def place_in_frame(normalized_pose, scale=None):
    """Place root-centred unit-scale poses at the image centre."""
    if scale is None:
        scale = getattr(settings, 'POSE_FRAME_SCALE', 0.2)
    return torch.as_tensor(normalized_pose) * scale


def to_uint8(image):
    image = torch.as_tensor(image).detach().cpu().clamp(0.0, 1.0)
    return np.round(image.numpy().astype(np.float64) * 255.0).astype(np.uint8)


def save_png(image, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(to_uint8(image)).save(path)
    return path


def load_png(path):
    with Image.open(path) as img:
        if img.mode != 'L':
            img = img.convert('L')
        return torch.from_numpy(np.asarray(img, dtype=np.float32) / 255.0)
