"""Procedural background clutter composited under skeleton renders."""
import math
from dataclasses import dataclass

import torch
from django.conf import settings

from skeletons.exceptions import ConfigurationError


@dataclass(frozen=True)
class ClutterConfig:
    ellipse_count: int = 4
    ellipse_intensity: float = 0.5
    noise_amplitude: float = 0.1

    def __post_init__(self):
        if self.ellipse_count < 0:
            raise ConfigurationError('ellipse count must be non-negative')
        if not 0.0 <= self.ellipse_intensity <= 1.0:
            raise ConfigurationError('ellipse intensity must lie in [0, 1]')
        if self.noise_amplitude < 0:
            raise ConfigurationError('noise amplitude must be non-negative')

    @classmethod
    def from_settings(cls, **overrides):
        values = dict(getattr(settings, 'SYNTH_CLUTTER', {}))
        values.update({key: value for key, value in overrides.items() if value is not None})
        return cls(**values)

    def to_dict(self):
        return {
            'ellipse_count': self.ellipse_count,
            'ellipse_intensity': self.ellipse_intensity,
            'noise_amplitude': self.noise_amplitude,
        }


def clutter_layer(config, resolution, generator, dtype=torch.float64):
    """Filled, randomly rotated ellipses of random grey levels; overlaps keep the brighter one."""
    height, width = resolution
    layer = torch.zeros(height, width, dtype=dtype)
    if config.ellipse_count == 0 or config.ellipse_intensity == 0:
        return layer

    rows, columns = torch.meshgrid(
        torch.arange(height, dtype=dtype), torch.arange(width, dtype=dtype), indexing='ij',
    )
    largest = max(2.0, min(height, width) / 4.0)
    for _ in range(config.ellipse_count):
        draw = torch.rand(6, generator=generator, dtype=dtype)
        center_x, center_y = draw[0] * (width - 1), draw[1] * (height - 1)
        radius_x = 2.0 + draw[2] * (largest - 2.0)
        radius_y = 2.0 + draw[3] * (largest - 2.0)
        angle = draw[4] * math.pi
        level = draw[5] * config.ellipse_intensity

        dx, dy = columns - center_x, rows - center_y
        along = dx * torch.cos(angle) + dy * torch.sin(angle)
        across = -dx * torch.sin(angle) + dy * torch.cos(angle)
        inside = (along / radius_x) ** 2 + (across / radius_y) ** 2 <= 1.0
        layer = torch.where(inside, torch.maximum(layer, level), layer)
    return layer


def clutter_composite(skeleton, config, generator):
    """Lay the skeleton over clutter, add uniform noise and clamp to [0, 1]."""
    skeleton = torch.as_tensor(skeleton)
    layer = clutter_layer(config, skeleton.shape[-2:], generator, skeleton.dtype)
    image = torch.maximum(skeleton, layer)
    if config.noise_amplitude > 0:
        noise = 2.0 * torch.rand(skeleton.shape, generator=generator, dtype=skeleton.dtype) - 1.0
        image = image + config.noise_amplitude * noise
    return image.clamp(0.0, 1.0)
