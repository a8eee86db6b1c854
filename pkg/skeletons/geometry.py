"""Perspective lift and projection, rotations, and the rotate-and-relift consistency cycle.

Camera frame: x right, y up, z forward (depth). Azimuth rotates about y, elevation about x.
"""
import math
from dataclasses import dataclass

import torch
import torch.nn.functional as F
from django.conf import settings

from .exceptions import EmptyBatchError, NonPositiveDepthError


def depth_anchor():
    return getattr(settings, 'POSE_DEPTH_ANCHOR', 10.0)


@dataclass(frozen=True)
class LiftOutput:
    """Per-joint depth offsets ``d`` (..., J) and the predicted elevation angle (...)."""
    depth_offsets: torch.Tensor
    elevation: torch.Tensor

    def depths(self, delta=None):
        return bound_depth(self.depth_offsets + (depth_anchor() if delta is None else delta))


@dataclass(frozen=True)
class RotationSpec:
    azimuth: torch.Tensor
    elevation: torch.Tensor
    new_elevation: torch.Tensor
    matrix: torch.Tensor

    def inverse_matrix(self):
        return self.matrix.transpose(-1, -2)


@dataclass(frozen=True)
class ElevationStats:
    mean: torch.Tensor
    std: torch.Tensor


@dataclass(frozen=True)
class CycleResult:
    v: torch.Tensor
    v_hat: torch.Tensor
    y_hat: torch.Tensor
    v_hat_prime: torch.Tensor
    v_prime: torch.Tensor
    y_prime: torch.Tensor
    rotation: RotationSpec
    lift: LiftOutput
    lift_hat: LiftOutput


def bound_depth(raw, eps=None, sharpness=None):
    """Smoothly keep depths above ``1 + eps``; exactly the identity once ``raw`` clears the knee."""
    eps = getattr(settings, 'POSE_DEPTH_EPSILON', 1e-3) if eps is None else eps
    sharpness = getattr(settings, 'POSE_DEPTH_SHARPNESS', 10.0) if sharpness is None else sharpness
    floor = 1.0 + eps
    return floor + F.softplus(raw - floor, beta=sharpness, threshold=20.0)


def lift_to_3d(pose2d, depth_offsets, delta=None, bounded=True):
    """Lift tangent-plane joints (..., J, 2) to camera-frame points ``(x z, y z, z)``."""
    pose2d = torch.as_tensor(pose2d)
    depth = torch.as_tensor(depth_offsets, dtype=pose2d.dtype) + (depth_anchor() if delta is None else delta)
    if bounded:
        depth = bound_depth(depth)
    return torch.cat([pose2d * depth[..., None], depth[..., None]], dim=-1)


def bound_pose_depth(pose3d):
    """Pass the depth of every joint (..., J, 3) through :func:`bound_depth`; x and y are kept."""
    return torch.cat([pose3d[..., :2], bound_depth(pose3d[..., 2:])], dim=-1)


def perspective_project(pose3d):
    pose3d = torch.as_tensor(pose3d)
    depth = pose3d[..., 2:3]
    if (depth <= 0).any():
        raise NonPositiveDepthError('cannot project a joint at or behind the camera centre')
    return pose3d[..., :2] / depth


def rotation_x(angle):
    angle = torch.as_tensor(angle)
    c, s = torch.cos(angle), torch.sin(angle)
    one, zero = torch.ones_like(angle), torch.zeros_like(angle)
    rows = [
        torch.stack([one, zero, zero], dim=-1),
        torch.stack([zero, c, -s], dim=-1),
        torch.stack([zero, s, c], dim=-1),
    ]
    return torch.stack(rows, dim=-2)


def rotation_y(angle):
    angle = torch.as_tensor(angle)
    c, s = torch.cos(angle), torch.sin(angle)
    one, zero = torch.ones_like(angle), torch.zeros_like(angle)
    rows = [
        torch.stack([c, zero, s], dim=-1),
        torch.stack([zero, one, zero], dim=-1),
        torch.stack([-s, zero, c], dim=-1),
    ]
    return torch.stack(rows, dim=-2)


def build_rotation(azimuth, elevation, new_elevation=None):
    """``R = R_x(new_elevation)^T R_y(azimuth) R_x(elevation)``.

    ``elevation`` levels the pose, the azimuth turns it about the vertical axis and
    ``new_elevation`` tilts it back; it defaults to ``elevation`` (a pure conjugation).
    """
    elevation = torch.as_tensor(elevation)
    azimuth = torch.as_tensor(azimuth, dtype=elevation.dtype)
    new_elevation = elevation if new_elevation is None else torch.as_tensor(new_elevation, dtype=elevation.dtype)
    matrix = rotation_x(new_elevation).transpose(-1, -2) @ rotation_y(azimuth) @ rotation_x(elevation)
    return RotationSpec(azimuth=azimuth, elevation=elevation, new_elevation=new_elevation, matrix=matrix)


def sample_azimuth(generator, size=(), dtype=torch.float32, device=None):
    """Uniform azimuth on [-pi, pi]."""
    unit = torch.rand(size, generator=generator, dtype=dtype, device=device)
    return (2.0 * unit - 1.0) * math.pi


def elevation_stats(alphas):
    alphas = torch.as_tensor(alphas).reshape(-1)
    if alphas.numel() == 0:
        raise EmptyBatchError('elevation statistics need at least one predicted elevation')
    return ElevationStats(mean=alphas.mean(), std=alphas.std(correction=0))


def sample_elevation(stats, generator, size=()):
    noise = torch.randn(size, generator=generator, dtype=stats.mean.dtype, device=stats.mean.device)
    return stats.mean + stats.std * noise


def centroid(pose3d):
    return pose3d.mean(dim=-2, keepdim=True)


def rotate_about_centroid(pose3d, matrix, center=None):
    """Apply ``matrix`` about ``center`` (the pose centroid by default) and put it back there."""
    center = centroid(pose3d) if center is None else center
    return (pose3d - center) @ matrix.transpose(-1, -2) + center


def consistency_cycle(pose2d, lifter, generator=None, delta=None, rotation=None):
    """Lift, rotate, project, lift again, rotate back and project.

    ``lifter`` maps 2D poses (..., J, 2) to a :class:`LiftOutput`. Without an explicit
    ``rotation`` the azimuth is uniform and the new elevation is drawn from the batch
    statistics of the predicted elevations.
    """
    lift = lifter(pose2d)
    v = lift_to_3d(pose2d, lift.depth_offsets, delta)

    if rotation is None:
        shape = lift.elevation.shape
        azimuth = sample_azimuth(generator, shape, dtype=lift.elevation.dtype, device=lift.elevation.device)
        new_elevation = sample_elevation(elevation_stats(lift.elevation), generator, shape)
        rotation = build_rotation(azimuth, lift.elevation, new_elevation)

    center = centroid(v)
    # Every rotated joint stays in front of the camera.
    v_hat = bound_pose_depth(rotate_about_centroid(v, rotation.matrix, center))
    y_hat = perspective_project(v_hat)

    lift_hat = lifter(y_hat)
    v_hat_prime = lift_to_3d(y_hat, lift_hat.depth_offsets, delta)
    v_prime = bound_pose_depth((v_hat_prime - centroid(v_hat_prime)) @ rotation.matrix + center)
    y_prime = perspective_project(v_prime)

    return CycleResult(
        v=v, v_hat=v_hat, y_hat=y_hat, v_hat_prime=v_hat_prime, v_prime=v_prime, y_prime=y_prime,
        rotation=rotation, lift=lift, lift_hat=lift_hat,
    )
