import os
import sys
from pathlib import Path

import django

BASE_DIR = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(BASE_DIR))
os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'PoseLift.settings')
django.setup()

import torch  # noqa: E402

from skeletons.codec import read_poses  # noqa: E402
from skeletons.geometry import perspective_project  # noqa: E402
from skeletons.topology import get_topology  # noqa: E402
from synth.dataset import LABELLED_SPLITS, read_manifest  # noqa: E402

if len(sys.argv) != 2:
    print('usage: check_dataset.py DATASET_DIR')
    sys.exit(2)

dataset = Path(sys.argv[1])
manifest = read_manifest(dataset)
topology = get_topology(manifest['topology'])
problems = []

seen = {}
for split, entry in manifest['splits'].items():
    print(split, entry['count'], 'samples')
    for identifier in entry['ids']:
        if identifier in seen:
            problems.append(f'{identifier} appears in {seen[identifier]} and {split}')
        seen[identifier] = split
    for name in entry.get('images', []):
        if not (dataset / name).exists():
            problems.append(f'missing image {name}')

train = dataset / 'train'
if list(train.glob('*.jsonl')) or 'poses' in manifest['splits'].get('train', {}):
    problems.append('train split carries pose annotations')

prior = manifest['splits'].get('prior')
if prior and any(record.p3d is not None for record in read_poses(dataset / prior['poses'], topology)):
    problems.append('prior split carries 3D poses')

for split in LABELLED_SPLITS:
    entry = manifest['splits'].get(split)
    if not entry:
        continue
    for record in read_poses(dataset / entry['poses'], topology):
        reprojected = perspective_project(torch.from_numpy(record.p3d))
        error = (reprojected - torch.from_numpy(record.p2d)).abs().max().item()
        if error > 1e-9:
            problems.append(f'{record.id}: 2D pose is {error:.2e} away from the projected 3D pose')

for problem in problems:
    print('PROBLEM', problem)
print('OK' if not problems else f'{len(problems)} problems')
sys.exit(1 if problems else 0)
