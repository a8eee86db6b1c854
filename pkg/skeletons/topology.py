"""Skeleton topologies, their validation and 2D pose normalization."""
import json
from dataclasses import dataclass
from pathlib import Path

import torch

from .exceptions import (
    CycleError,
    DegeneratePoseError,
    DuplicateEdgeError,
    FormatError,
    JointIndexError,
    TopologyError,
)


@dataclass(frozen=True)
class SkeletonTopology:
    """Joint names, a parent tree and the bone (edge) set drawn by the renderer.

    ``parent[i]`` is the parent joint of ``i``; the root points at itself or at -1.
    Edges are ordered pairs ``(i, j)``; a bone runs from joint ``i`` to joint ``j``.
    """
    name: str
    joint_names: tuple
    parent: tuple
    edges: tuple
    root: int = 0

    @property
    def joint_count(self):
        return len(self.joint_names)

    @property
    def bone_count(self):
        return len(self.edges)

    def edge_index(self, device=None):
        """Two index tensors ``(i, j)`` of shape (N,)."""
        index = torch.tensor(self.edges, dtype=torch.long, device=device).reshape(-1, 2)
        return index[:, 0], index[:, 1]

    def to_dict(self):
        return {
            'name': self.name,
            'joints': list(self.joint_names),
            'parent': list(self.parent),
            'edges': [list(edge) for edge in self.edges],
            'root': self.root,
        }

    @classmethod
    def from_dict(cls, data, name=None):
        try:
            joints = tuple(str(joint) for joint in data['joints'])
            parent = tuple(int(p) for p in data['parent'])
            edges = tuple((int(i), int(j)) for i, j in data['edges'])
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f'bad topology descriptor: {exc}') from exc
        root = data.get('root')
        if root is None:
            root = next((i for i, p in enumerate(parent) if p in (-1, i)), 0)
        return cls(
            name=name or data.get('name', 'custom'),
            joint_names=joints,
            parent=parent,
            edges=edges,
            root=int(root),
        )

    @classmethod
    def from_parents(cls, name, joint_names, parent):
        edges = tuple((p, i) for i, p in enumerate(parent) if p not in (-1, i))
        root = next(i for i, p in enumerate(parent) if p in (-1, i))
        return cls(name=name, joint_names=tuple(joint_names), parent=tuple(parent), edges=edges, root=root)


def validate_topology(topology):
    """Return ``topology`` unchanged when its parent links form one tree and its edges are sound."""
    joint_count = topology.joint_count
    if joint_count == 0:
        raise TopologyError(f'topology {topology.name!r} has no joints')
    if len(set(topology.joint_names)) != joint_count:
        raise TopologyError(f'topology {topology.name!r} repeats a joint name')
    if len(topology.parent) != joint_count:
        raise TopologyError(
            f'topology {topology.name!r} has {len(topology.parent)} parent links for {joint_count} joints'
        )

    parent = topology.parent
    for joint, link in enumerate(parent):
        if not -1 <= link < joint_count:
            raise JointIndexError(f'joint {joint} has parent {link}, outside 0..{joint_count - 1}')

    for joint in range(joint_count):
        seen = set()
        current = joint
        while parent[current] not in (-1, current):
            if current in seen:
                raise CycleError(f'parent links of {topology.name!r} loop through joint {current}')
            seen.add(current)
            current = parent[current]

    roots = [joint for joint, link in enumerate(parent) if link in (-1, joint)]
    if len(roots) != 1:
        raise TopologyError(f'topology {topology.name!r} has {len(roots)} roots, expected one tree')
    if topology.root != roots[0]:
        raise TopologyError(f'declared root {topology.root} is not the tree root {roots[0]}')

    if not topology.edges:
        raise TopologyError(f'topology {topology.name!r} has no bones')
    seen_edges = set()
    for i, j in topology.edges:
        if not (0 <= i < joint_count and 0 <= j < joint_count):
            raise JointIndexError(f'edge ({i}, {j}) references a joint outside 0..{joint_count - 1}')
        if i == j:
            raise DuplicateEdgeError(f'edge ({i}, {j}) is a self-loop')
        key = frozenset((i, j))
        if key in seen_edges:
            raise DuplicateEdgeError(f'edge ({i}, {j}) appears twice')
        seen_edges.add(key)
    return topology


HUMANOID_17 = SkeletonTopology.from_parents(
    'humanoid-17',
    [
        'pelvis', 'right_hip', 'right_knee', 'right_ankle', 'left_hip', 'left_knee', 'left_ankle',
        'spine', 'thorax', 'neck', 'head', 'left_shoulder', 'left_elbow', 'left_wrist',
        'right_shoulder', 'right_elbow', 'right_wrist',
    ],
    [-1, 0, 1, 2, 0, 4, 5, 0, 7, 8, 9, 8, 11, 12, 8, 14, 15],
)

HUMANOID_9 = SkeletonTopology.from_parents(
    'humanoid-9',
    ['pelvis', 'spine', 'head', 'left_elbow', 'left_wrist', 'right_elbow', 'right_wrist', 'left_foot', 'right_foot'],
    [-1, 0, 1, 1, 3, 1, 5, 0, 0],
)

_FINGERS = ('thumb', 'index', 'middle', 'ring', 'little')

HAND_21 = SkeletonTopology.from_parents(
    'hand-21',
    ['wrist'] + [f'{finger}_{k}' for finger in _FINGERS for k in range(1, 5)],
    [-1] + [0 if k == 0 else 1 + 4 * f + k - 1 for f in range(5) for k in range(4)],
)

PRESETS = {topology.name: topology for topology in (HUMANOID_17, HUMANOID_9, HAND_21)}


def get_topology(name):
    try:
        return PRESETS[name]
    except KeyError:
        raise TopologyError(f'unknown topology {name!r}; presets are {", ".join(sorted(PRESETS))}') from None


def load_topology(path):
    """Load and validate a JSON topology descriptor ``{"joints", "parent", "edges"}``."""
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(exc.msg, path=path, line=exc.lineno) from exc
    return validate_topology(SkeletonTopology.from_dict(data, name=data.get('name', path.stem)))


def resolve_topology(name_or_path):
    if name_or_path in PRESETS:
        return PRESETS[name_or_path]
    if Path(name_or_path).suffix == '.json':
        return load_topology(name_or_path)
    return get_topology(name_or_path)


def center_pose2d(pose, topology):
    """Translate poses of shape (..., J, D) so the root joint sits at the origin."""
    pose = torch.as_tensor(pose)
    return pose - pose[..., topology.root:topology.root + 1, :]


def normalize_pose2d(pose, topology, eps=1e-12):
    """Root-centre poses and scale them to unit mean joint distance from the root."""
    centered = center_pose2d(pose, topology)
    mean_distance = torch.linalg.vector_norm(centered, dim=-1).mean(dim=-1, keepdim=True)
    if not torch.isfinite(centered).all():
        raise DegeneratePoseError('pose has non-finite coordinates')
    if (mean_distance <= eps).any():
        raise DegeneratePoseError('all joints coincide; the pose has no scale')
    return centered / mean_distance.unsqueeze(-1)
