"""Procedural stick figures built by forward kinematics in a body frame.

Each bone has a rest direction ``r`` and two angles ``(a, b)`` that turn it away from
rest inside the orthonormal frame ``(r, u1, u2)``::

    direction = cos(a) cos(b) r + sin(a) u1 + cos(a) sin(b) u2

Angles are absolute in the body frame, so inverse kinematics reads them straight back off
each bone direction. The body is then yawed about the vertical axis, tilted by its
elevation and placed with its root on the optical axis at the depth anchor.
"""
import math
from dataclasses import dataclass

import torch
from django.conf import settings

from skeletons.exceptions import ConfigurationError
from skeletons.geometry import rotation_x, rotation_y
from skeletons.topology import HAND_21, HUMANOID_9


@dataclass(frozen=True)
class KinematicModel:
    topology: object
    lengths: tuple
    rest_directions: tuple
    angle_ranges: tuple
    yaw_range: tuple = (-math.pi, math.pi)
    elevation: tuple = (0.15, 0.1)
    depth_anchor: float = 10.0

    def __post_init__(self):
        count = self.topology.joint_count
        if not len(self.lengths) == len(self.rest_directions) == len(self.angle_ranges) == count:
            raise ConfigurationError(f'kinematic model needs one length, direction and range per joint ({count})')
        for joint, parent in enumerate(self.topology.parent):
            if parent in (-1, joint):
                continue
            if self.lengths[joint] <= 0:
                raise ConfigurationError(f'bone to joint {joint} has non-positive length {self.lengths[joint]}')
            (a_low, a_high), (b_low, b_high) = self.angle_ranges[joint]
            if a_low > a_high or b_low > b_high:
                raise ConfigurationError(f'joint {joint} has an empty angle range')
            if not (-math.pi / 2 < a_low and a_high < math.pi / 2 and -math.pi < b_low and b_high < math.pi):
                raise ConfigurationError(f'joint {joint} angle range leaves the invertible domain')
        if self.elevation[1] < 0:
            raise ConfigurationError('elevation spread must be non-negative')

    @property
    def bone_joints(self):
        return [joint for joint, parent in enumerate(self.topology.parent) if parent not in (-1, joint)]

    def frames(self, dtype=torch.float64):
        """Per-joint orthonormal frames (J, 3, 3) with rows ``r, u1, u2``."""
        rest = torch.nn.functional.normalize(torch.tensor(self.rest_directions, dtype=dtype), dim=-1)
        forward = torch.tensor([0.0, 0.0, 1.0], dtype=dtype).expand_as(rest)
        sideways = torch.tensor([1.0, 0.0, 0.0], dtype=dtype).expand_as(rest)
        helper = torch.where((rest @ forward[0]).abs()[:, None] > 0.9, sideways, forward)
        u2 = torch.nn.functional.normalize(helper - (helper * rest).sum(-1, keepdim=True) * rest, dim=-1)
        u1 = torch.linalg.cross(u2, rest)
        return torch.stack([rest, u1, u2], dim=-2)

    def order(self):
        """Joints ordered so that every parent precedes its children."""
        parent = self.topology.parent
        depth = []
        for joint in range(len(parent)):
            steps, current = 0, joint
            while parent[current] not in (-1, current):
                current = parent[current]
                steps += 1
            depth.append(steps)
        return sorted(range(len(parent)), key=lambda joint: (depth[joint], joint))

    @classmethod
    def with_settings(cls, model):
        elevation = getattr(settings, 'SYNTH_ELEVATION', model.elevation)
        anchor = getattr(settings, 'POSE_DEPTH_ANCHOR', model.depth_anchor)
        return cls(
            topology=model.topology,
            lengths=model.lengths,
            rest_directions=model.rest_directions,
            angle_ranges=model.angle_ranges,
            yaw_range=model.yaw_range,
            elevation=tuple(elevation),
            depth_anchor=anchor,
        )

    def to_dict(self):
        return {
            'topology': self.topology.name,
            'lengths': list(self.lengths),
            'rest_directions': [list(direction) for direction in self.rest_directions],
            'angle_ranges': [[list(pair) for pair in ranges] for ranges in self.angle_ranges],
            'yaw_range': list(self.yaw_range),
            'elevation': list(self.elevation),
            'depth_anchor': self.depth_anchor,
        }


@dataclass(frozen=True)
class PoseSamples:
    pose3d: torch.Tensor
    angles: torch.Tensor
    azimuth: torch.Tensor
    elevation: torch.Tensor


_FIXED = ((0.0, 0.0), (0.0, 0.0))


def humanoid9_model():
    lengths = (0.0, 1.0, 0.5, 0.8, 0.7, 0.8, 0.7, 1.8, 1.8)
    rest = (
        (0.0, 1.0, 0.0),
        (0.0, 1.0, 0.0),
        (0.0, 1.0, 0.0),
        (-1.0, -0.3, 0.0),
        (-1.0, -0.3, 0.0),
        (1.0, -0.3, 0.0),
        (1.0, -0.3, 0.0),
        (-0.25, -1.0, 0.0),
        (0.25, -1.0, 0.0),
    )
    ranges = (
        _FIXED,
        ((-0.3, 0.3), (-0.4, 0.4)),
        ((-0.3, 0.3), (-0.5, 0.5)),
        ((-1.2, 1.2), (-1.0, 1.2)),
        ((-1.4, 1.4), (-0.4, 1.8)),
        ((-1.2, 1.2), (-1.2, 1.0)),
        ((-1.4, 1.4), (-1.8, 0.4)),
        ((-0.4, 0.4), (-0.8, 0.8)),
        ((-0.4, 0.4), (-0.8, 0.8)),
    )
    return KinematicModel(topology=HUMANOID_9, lengths=lengths, rest_directions=rest, angle_ranges=ranges)


def hand21_model():
    """Wrist-rooted hand: five fanned fingers of four bones each, flexing towards the palm side."""
    spread = (-0.9, -0.3, 0.0, 0.3, 0.6)
    finger_lengths = ((0.6, 0.5, 0.35, 0.3), (1.0, 0.5, 0.3, 0.25), (1.0, 0.55, 0.35, 0.25),
                      (0.95, 0.5, 0.3, 0.25), (0.9, 0.4, 0.25, 0.2))
    lengths, rest, ranges = [0.0], [(0.0, 1.0, 0.0)], [_FIXED]
    for angle, segments in zip(spread, finger_lengths):
        direction = (math.sin(angle), math.cos(angle), 0.0)
        for k, length in enumerate(segments):
            lengths.append(length)
            rest.append(direction)
            ranges.append(((-0.15, 0.15), (-0.1, 0.1)) if k == 0 else ((-0.2, 0.2), (0.0, 0.4 * (k + 1))))
    return KinematicModel(topology=HAND_21, lengths=tuple(lengths), rest_directions=tuple(rest), angle_ranges=tuple(ranges))


MODELS = {'humanoid-9': humanoid9_model, 'hand-21': hand21_model}


def get_model(name):
    try:
        return KinematicModel.with_settings(MODELS[name]())
    except KeyError:
        raise ConfigurationError(f'no kinematic model for topology {name!r}; choose from {", ".join(MODELS)}') from None


def _uniform(generator, low, high, size, dtype):
    return low + (high - low) * torch.rand(size, generator=generator, dtype=dtype)


def body_pose(model, angles):
    """Body-frame joint positions (n, J, 3) for joint angles (n, J, 2); the root sits at the origin."""
    frames = model.frames(angles.dtype)
    a, b = angles[..., 0], angles[..., 1]
    coefficients = torch.stack([torch.cos(a) * torch.cos(b), torch.sin(a), torch.cos(a) * torch.sin(b)], dim=-1)
    directions = (coefficients[..., None] * frames).sum(-2)
    lengths = torch.tensor(model.lengths, dtype=angles.dtype)

    positions = [None] * model.topology.joint_count
    for joint in model.order():
        parent = model.topology.parent[joint]
        if parent in (-1, joint):
            positions[joint] = torch.zeros(angles.shape[0], 3, dtype=angles.dtype)
        else:
            positions[joint] = positions[parent] + lengths[joint] * directions[:, joint]
    return torch.stack(positions, dim=1)


def orientation(azimuth, elevation):
    return rotation_x(elevation).transpose(-1, -2) @ rotation_y(azimuth)


def sample_poses(model, count, generator, dtype=torch.float64):
    """Draw ``count`` camera-frame poses together with the angles that produced them."""
    joints = model.topology.joint_count
    low = torch.tensor([[pair[0] for pair in ranges] for ranges in model.angle_ranges], dtype=dtype)
    high = torch.tensor([[pair[1] for pair in ranges] for ranges in model.angle_ranges], dtype=dtype)
    angles = low + (high - low) * torch.rand(count, joints, 2, generator=generator, dtype=dtype)
    azimuth = _uniform(generator, model.yaw_range[0], model.yaw_range[1], (count,), dtype)
    mean, spread = model.elevation
    elevation = mean + spread * torch.randn(count, generator=generator, dtype=dtype)

    body = body_pose(model, angles)
    camera = body @ orientation(azimuth, elevation).transpose(-1, -2)
    camera = camera + torch.tensor([0.0, 0.0, model.depth_anchor], dtype=dtype)
    return PoseSamples(pose3d=camera, angles=angles, azimuth=azimuth, elevation=elevation)


def sample_pose3d(model, generator):
    return sample_poses(model, 1, generator).pose3d[0]


def joint_angles(model, pose3d, azimuth, elevation):
    """Recover the (a, b) angles (..., J, 2) of camera-frame poses with known global orientation."""
    pose3d = torch.as_tensor(pose3d)
    root = pose3d[..., model.topology.root:model.topology.root + 1, :]
    rotation = orientation(torch.as_tensor(azimuth, dtype=pose3d.dtype), torch.as_tensor(elevation, dtype=pose3d.dtype))
    body = (pose3d - root) @ rotation
    frames = model.frames(pose3d.dtype)

    angles = torch.zeros(*pose3d.shape[:-1], 2, dtype=pose3d.dtype)
    for joint in model.bone_joints:
        parent = model.topology.parent[joint]
        direction = torch.nn.functional.normalize(body[..., joint, :] - body[..., parent, :], dim=-1)
        rest, u1, u2 = frames[joint]
        angles[..., joint, 0] = torch.asin((direction @ u1).clamp(-1.0, 1.0))
        angles[..., joint, 1] = torch.atan2(direction @ u2, direction @ rest)
    return angles


def bone_lengths(model, pose3d):
    pose3d = torch.as_tensor(pose3d)
    joints = model.bone_joints
    parents = [model.topology.parent[joint] for joint in joints]
    return torch.linalg.vector_norm(pose3d[..., joints, :] - pose3d[..., parents, :], dim=-1)
