"""The four trained networks and the pipeline that wires them together.

``SkeletonNet`` maps an image to a skeleton image, ``JointNet`` regresses 2D joints from a
skeleton image, ``Lifter`` turns root-centred 2D joints into depth offsets and an elevation
angle, and ``Discriminator`` scores skeleton images against rendered prior skeletons.
"""
from dataclasses import asdict, dataclass

import torch
from django.conf import settings
from torch import nn

from skeletons.exceptions import ConfigurationError, ShapeMismatchError
from skeletons.geometry import LiftOutput, lift_to_3d
from skeletons.topology import center_pose2d

ENCODER_CHANNELS = (32, 64, 128, 128)
DECODER_CHANNELS = (128, 64, 32, 32)
DOWNSAMPLING = 2 ** len(ENCODER_CHANNELS)


@dataclass(frozen=True)
class NetworkSpec:
    joint_count: int
    height: int = 64
    width: int = 64
    lifter_width: int = 512
    lifter_blocks: int = 2

    def __post_init__(self):
        if self.height % DOWNSAMPLING or self.width % DOWNSAMPLING:
            raise ConfigurationError(
                f'network resolution {self.height}x{self.width} must be a multiple of {DOWNSAMPLING}'
            )
        if self.lifter_width < 1 or self.lifter_blocks < 0:
            raise ConfigurationError('lifter width must be positive and its block count non-negative')

    @classmethod
    def from_settings(cls, joint_count, resolution, **overrides):
        values = {
            'joint_count': joint_count,
            'height': resolution[0],
            'width': resolution[1],
            'lifter_width': getattr(settings, 'LIFTER_WIDTH', 512),
            'lifter_blocks': getattr(settings, 'LIFTER_BLOCKS', 2),
        }
        values.update({key: value for key, value in overrides.items() if value is not None})
        return cls(**values)

    def to_dict(self):
        return asdict(self)


def conv_block(in_channels, out_channels, stride=1, normalize=True):
    layers = [nn.Conv2d(in_channels, out_channels, 3, stride=stride, padding=1, bias=not normalize)]
    if normalize:
        layers.append(nn.BatchNorm2d(out_channels))
    layers.append(nn.LeakyReLU(0.2))
    return nn.Sequential(*layers)


def coordinate_channels(images):
    """Two channels holding each pixel's image-frame x and y (y up), for images (B, 1, H, W)."""
    batch, _, height, width = images.shape
    y = torch.linspace(1.0, -1.0, height, dtype=images.dtype, device=images.device)
    x = torch.linspace(-1.0, 1.0, width, dtype=images.dtype, device=images.device)
    rows, columns = torch.meshgrid(y, x, indexing='ij')
    return torch.stack([columns, rows]).expand(batch, 2, height, width)


class SkeletonNet(nn.Module):
    """Image to skeleton image: strided encoder, upsampling decoder, sigmoid output."""

    def __init__(self, spec):
        super().__init__()
        self.spec = spec
        encoder, channels = [], 1
        for width in ENCODER_CHANNELS:
            encoder.append(conv_block(channels, width, stride=2))
            channels = width
        decoder = []
        for width in DECODER_CHANNELS:
            decoder.append(nn.Sequential(nn.Upsample(scale_factor=2, mode='nearest'), conv_block(channels, width)))
            channels = width
        self.encoder = nn.Sequential(*encoder)
        self.decoder = nn.Sequential(*decoder)
        self.head = nn.Conv2d(channels, 1, 3, padding=1)

    def forward(self, images):
        check_images(images, self.spec)
        features = self.decoder(self.encoder(images.unsqueeze(1)))
        return torch.sigmoid(self.head(features)).squeeze(1)


class JointNet(nn.Module):
    """Skeleton image to 2D joints in the image frame, squashed to [-1, 1]."""

    def __init__(self, spec):
        super().__init__()
        self.spec = spec
        blocks, channels = [], 3
        for width in ENCODER_CHANNELS:
            blocks.append(conv_block(channels, width, stride=2))
            channels = width
        self.features = nn.Sequential(*blocks, nn.AdaptiveAvgPool2d(1), nn.Flatten())
        self.head = nn.Linear(channels, 2 * spec.joint_count)

    def forward(self, skeletons):
        check_images(skeletons, self.spec)
        images = skeletons.unsqueeze(1)
        features = self.features(torch.cat([images, coordinate_channels(images)], dim=1))
        return torch.tanh(self.head(features)).reshape(-1, self.spec.joint_count, 2)


class ResidualBlock(nn.Module):
    def __init__(self, width):
        super().__init__()
        self.layers = nn.Sequential(
            nn.Linear(width, width),
            nn.BatchNorm1d(width),
            nn.LeakyReLU(0.2),
            nn.Linear(width, width),
            nn.BatchNorm1d(width),
            nn.LeakyReLU(0.2),
        )

    def forward(self, x):
        return x + self.layers(x)


class Lifter(nn.Module):
    """Residual fully-connected lifter: 2J inputs, J depth offsets plus one elevation angle."""

    def __init__(self, spec):
        super().__init__()
        self.spec = spec
        self.input = nn.Sequential(nn.Linear(2 * spec.joint_count, spec.lifter_width), nn.LeakyReLU(0.2))
        self.blocks = nn.Sequential(*(ResidualBlock(spec.lifter_width) for _ in range(spec.lifter_blocks)))
        self.output = nn.Linear(spec.lifter_width, spec.joint_count + 1)

    def forward(self, pose2d):
        if pose2d.shape[-2:] != (self.spec.joint_count, 2):
            raise ShapeMismatchError(
                f'lifter expects poses of shape (..., {self.spec.joint_count}, 2), got {tuple(pose2d.shape)}'
            )
        leading = pose2d.shape[:-2]
        flat = pose2d.reshape(-1, 2 * self.spec.joint_count)
        out = self.output(self.blocks(self.input(flat)))
        out = out.reshape(*leading, self.spec.joint_count + 1)
        return LiftOutput(depth_offsets=out[..., :-1], elevation=out[..., -1])


class Discriminator(nn.Module):
    """Skeleton image classifier; ``forward`` returns logits, ``probability`` squashes them."""

    def __init__(self, spec):
        super().__init__()
        self.spec = spec
        blocks, channels = [], 1
        for width in ENCODER_CHANNELS:
            blocks.append(conv_block(channels, width, stride=2, normalize=False))
            channels = width
        self.features = nn.Sequential(*blocks, nn.AdaptiveAvgPool2d(1), nn.Flatten())
        self.head = nn.Linear(channels, 1)

    def forward(self, skeletons):
        check_images(skeletons, self.spec)
        return self.head(self.features(skeletons.unsqueeze(1))).squeeze(-1)

    def probability(self, skeletons):
        return torch.sigmoid(self(skeletons))


def check_images(images, spec):
    if images.dim() != 3 or tuple(images.shape[-2:]) != (spec.height, spec.width):
        raise ShapeMismatchError(
            f'expected images of shape (batch, {spec.height}, {spec.width}), got {tuple(images.shape)}'
        )


class PosePipeline(nn.Module):
    def __init__(self, spec):
        super().__init__()
        self.spec = spec
        self.skeleton_net = SkeletonNet(spec)
        self.joint_net = JointNet(spec)
        self.lifter = Lifter(spec)
        self.discriminator = Discriminator(spec)

    def generator_parameters(self):
        for module in (self.skeleton_net, self.joint_net, self.lifter):
            yield from module.parameters()

    def lift(self, pose2d, topology):
        """Lifter output for image-frame poses, which are root-centred before entering the lifter."""
        return self.lifter(center_pose2d(pose2d, topology))

    def predict(self, images, topology, delta=None):
        """Test-time composition: skeleton image, 2D joints and the lifted 3D pose."""
        skeletons = self.skeleton_net(images)
        pose2d = self.joint_net(skeletons)
        centered = center_pose2d(pose2d, topology)
        pose3d = lift_to_3d(centered, self.lifter(centered).depth_offsets, delta)
        return skeletons, pose2d, pose3d
