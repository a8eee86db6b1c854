"""JSON-lines pose files.

One record per line::

    {"topology": "humanoid-9", "id": "prior-000001", "p2d": [[x, y], ...], "p3d": [[X, Y, Z], ...] | null}
"""
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import FormatError, TopologyMismatchError


@dataclass(frozen=True)
class PoseRecord:
    id: str
    topology: str
    p2d: np.ndarray
    p3d: np.ndarray = None

    def to_json(self):
        return {
            'topology': self.topology,
            'p2d': self.p2d.tolist(),
            'p3d': None if self.p3d is None else self.p3d.tolist(),
            'id': self.id,
        }


def _coordinates(value, dims, path, line, field):
    if not isinstance(value, list) or not value:
        raise FormatError(f'{field} must be a non-empty list of joints', path=path, line=line)
    rows = []
    for joint in value:
        if not isinstance(joint, list) or len(joint) != dims:
            raise FormatError(f'{field} joints must have {dims} coordinates, got {joint!r}', path=path, line=line)
        row = []
        for token in joint:
            if isinstance(token, bool) or not isinstance(token, (int, float)):
                raise FormatError(f'{field} holds a non-numeric token {token!r}', path=path, line=line)
            if not math.isfinite(token):
                raise FormatError(f'{field} holds a non-finite value', path=path, line=line)
            row.append(float(token))
        rows.append(row)
    return np.asarray(rows, dtype=np.float64)


def parse_record(text, topology=None, path=None, line=None):
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f'not valid JSON ({exc.msg})', path=path, line=line) from exc
    if not isinstance(data, dict):
        raise FormatError('record must be a JSON object', path=path, line=line)
    missing = {'topology', 'p2d', 'id'} - data.keys()
    if missing:
        raise FormatError(f'record lacks {", ".join(sorted(missing))}', path=path, line=line)

    p2d = _coordinates(data['p2d'], 2, path, line, 'p2d')
    p3d = data.get('p3d')
    if p3d is not None:
        p3d = _coordinates(p3d, 3, path, line, 'p3d')
        if len(p3d) != len(p2d):
            raise FormatError('p2d and p3d joint counts differ', path=path, line=line)

    if topology is not None:
        if data['topology'] != topology.name:
            raise TopologyMismatchError(
                f'line {line}: record topology {data["topology"]!r} is not {topology.name!r}'
            )
        if len(p2d) != topology.joint_count:
            raise TopologyMismatchError(
                f'line {line}: record has {len(p2d)} joints, {topology.name} has {topology.joint_count}'
            )
    return PoseRecord(id=str(data['id']), topology=str(data['topology']), p2d=p2d, p3d=p3d)


def read_poses(path, topology=None):
    """Read every record of a pose file, checking joint counts against ``topology`` when given."""
    path = Path(path)
    records = []
    with path.open() as handle:
        for number, text in enumerate(handle, start=1):
            if text.strip():
                records.append(parse_record(text, topology=topology, path=path, line=number))
    return records


def write_poses(path, records):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open('w') as handle:
        for record in records:
            handle.write(json.dumps(record.to_json()))
            handle.write('\n')
    return path


def stack_poses(records, field='p2d'):
    """Stack one field of the records into an array of shape (n, J, D)."""
    return np.stack([getattr(record, field) for record in records])
