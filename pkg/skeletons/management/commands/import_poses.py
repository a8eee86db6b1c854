import json
from pathlib import Path

import numpy as np
import torch
from django.conf import settings

from skeletons.codec import PoseRecord, write_poses
from skeletons.commands import PoseLiftCommand
from skeletons.exceptions import DegeneratePoseError, FormatError
from skeletons.forms import ImportPosesForm
from skeletons.topology import normalize_pose2d


def keypoint_array(value, joint_count):
    """Accept ``[[x, y], ...]``, ``[[x, y, v], ...]`` or a flat ``[x, y, v, ...]`` list."""
    array = np.asarray(value, dtype=np.float64)
    if array.ndim == 1:
        if array.size == 3 * joint_count:
            array = array.reshape(joint_count, 3)
        elif array.size == 2 * joint_count:
            array = array.reshape(joint_count, 2)
    if array.ndim != 2 or array.shape[0] != joint_count or array.shape[1] not in (2, 3):
        raise ValueError(f'expected {joint_count} keypoints, got shape {array.shape}')
    return array[:, :2]


class Command(PoseLiftCommand):
    help = 'Convert external 2D keypoint JSON into a normalized PoseLift pose file.'
    form_class = ImportPosesForm

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--input', type=str, required=True, help='JSON list of objects with a "keypoints" array')
        parser.add_argument('--out', type=str, required=True, help='Pose file to write')
        parser.add_argument('--topology', type=str, help='Topology the keypoints are ordered by')
        parser.add_argument('--y-down', action='store_true', help='Keypoints use image rows (y pointing down)')
        parser.add_argument('--id-prefix', type=str, help='Prefix for generated record ids')

    def defaults(self):
        return {'topology': getattr(settings, 'POSE_TOPOLOGY', 'humanoid-9'), 'id_prefix': 'import'}

    def run(self, config, **options):
        source = Path(config['input'])
        topology = config['topology']
        try:
            entries = json.loads(source.read_text())
        except json.JSONDecodeError as exc:
            raise FormatError(exc.msg, path=source, line=exc.lineno) from exc
        if not isinstance(entries, list):
            raise FormatError('expected a JSON list of pose objects', path=source)

        records, skipped = [], 0
        for index, entry in enumerate(entries):
            if not isinstance(entry, dict) or 'keypoints' not in entry:
                raise FormatError(f'entry {index} has no "keypoints"', path=source)
            try:
                keypoints = keypoint_array(entry['keypoints'], topology.joint_count)
            except ValueError as exc:
                raise FormatError(f'entry {index}: {exc}', path=source) from exc
            if config['y_down']:
                keypoints[:, 1] = -keypoints[:, 1]
            try:
                pose = normalize_pose2d(torch.from_numpy(keypoints), topology)
            except DegeneratePoseError:
                skipped += 1
                continue
            pose_id = entry.get('id', f'{config["id_prefix"] or "import"}-{index:06d}')
            records.append(PoseRecord(id=str(pose_id), topology=topology.name, p2d=pose.numpy()))

        out = write_poses(config['out'], records)
        self.write_resolved_config(out.parent, config)
        if skipped:
            self.stdout.write(self.style.NOTICE(f'Skipped {skipped} degenerate poses.'))
        self.stdout.write(self.style.SUCCESS(f'Wrote {len(records)} poses to {out}'))
