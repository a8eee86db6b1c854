"""Synthetic dataset generation and loading.

Layout of a generated dataset::

    manifest.json
    train/images/train-000000.png ...       images only
    prior/poses.jsonl                       2D poses only
    val/images/*.png, val/poses.jsonl       image, 2D and 3D (optional split)
    test/images/*.png, test/poses.jsonl     image, 2D and 3D

Every sample draws from its own random stream, derived from ``(seed, split, index)``.
"""
import hashlib
import logging
import math
from pathlib import Path

import torch

from skeletons.codec import PoseRecord, read_poses, stack_poses, write_poses
from skeletons.exceptions import DatasetEmptyError
from skeletons.geometry import perspective_project
from skeletons.renderer import load_png, place_in_frame, render, save_png
from skeletons.storage import config_hash, read_json, write_json
from skeletons.topology import normalize_pose2d

from .clutter import clutter_composite
from .kinematics import sample_poses

logger = logging.getLogger(__name__)

SPLITS = ('train', 'prior', 'val', 'test')
IMAGE_SPLITS = ('train', 'val', 'test')
LABELLED_SPLITS = ('val', 'test')


def sample_generator(seed, split, index):
    digest = hashlib.sha256(f'{seed}:{split}:{index}'.encode()).digest()
    return torch.Generator().manual_seed(int.from_bytes(digest[:8], 'big') & (2 ** 63 - 1))


def sample_id(split, index):
    return f'{split}-{index:06d}'


def rotate_in_plane(pose2d, degrees):
    angle = torch.tensor(math.radians(degrees), dtype=pose2d.dtype)
    c, s = torch.cos(angle), torch.sin(angle)
    matrix = torch.stack([torch.stack([c, -s]), torch.stack([s, c])])
    return pose2d @ matrix.T


def skeleton_image(pose2d, topology, renderer, clutter, generator, frame_scale=None, degrees=0.0):
    framed = place_in_frame(normalize_pose2d(pose2d, topology), frame_scale)
    if degrees:
        framed = rotate_in_plane(framed, degrees)
    return clutter_composite(render(framed, topology, renderer), clutter, generator)


def generate_dataset(model, counts, renderer, clutter, seed, out_dir, frame_scale=None, augment_rotations=()):
    """Write every split of a synthetic dataset under ``out_dir`` and return its manifest."""
    out_dir = Path(out_dir)
    topology = model.topology
    config = {
        'model': model.to_dict(),
        'counts': {split: int(counts.get(split, 0)) for split in SPLITS},
        'renderer': renderer.to_dict(),
        'clutter': clutter.to_dict(),
        'frame_scale': frame_scale,
        'augment_rotations': [float(angle) for angle in augment_rotations],
    }
    manifest = {'seed': seed, 'topology': topology.name, 'config': config, 'config_hash': config_hash(config), 'splits': {}}

    for split in SPLITS:
        count = config['counts'][split]
        if count == 0:
            continue
        ids, files, records = [], [], []
        for index in range(count):
            generator = sample_generator(seed, split, index)
            pose3d = sample_poses(model, 1, generator).pose3d[0]
            pose2d = perspective_project(pose3d)
            identifier = sample_id(split, index)
            ids.append(identifier)

            if split in IMAGE_SPLITS:
                image = skeleton_image(pose2d, topology, renderer, clutter, generator, frame_scale)
                files.append(str(save_png(image, out_dir / split / 'images' / f'{identifier}.png').relative_to(out_dir)))
            if split == 'train':
                for degrees in augment_rotations:
                    image = skeleton_image(pose2d, topology, renderer, clutter, generator, frame_scale, degrees)
                    name = f'{identifier}-rot{degrees:+g}.png'
                    files.append(str(save_png(image, out_dir / split / 'images' / name).relative_to(out_dir)))

            if split == 'prior':
                records.append(PoseRecord(id=identifier, topology=topology.name, p2d=pose2d.numpy()))
            elif split in LABELLED_SPLITS:
                records.append(PoseRecord(id=identifier, topology=topology.name, p2d=pose2d.numpy(), p3d=pose3d.numpy()))

        entry = {'count': count, 'ids': ids}
        if files:
            entry['images'] = files
        if records:
            entry['poses'] = str(write_poses(out_dir / split / 'poses.jsonl', records).relative_to(out_dir))
        manifest['splits'][split] = entry
        logger.info('wrote %d %s samples', count, split)

    write_json(out_dir / 'manifest.json', manifest)
    return manifest


def read_manifest(dataset_dir):
    return read_json(Path(dataset_dir) / 'manifest.json')


def has_split(dataset_dir, split):
    return split in read_manifest(dataset_dir)['splits']


def load_images(dataset_dir, files):
    dataset_dir = Path(dataset_dir)
    return torch.stack([load_png(dataset_dir / name) for name in files])


def load_training_images(dataset_dir):
    """Unlabelled training images (n, H, W); the train split carries no poses."""
    entry = read_manifest(dataset_dir)['splits'].get('train')
    if not entry:
        raise DatasetEmptyError(f'{dataset_dir}: dataset has no training images')
    return load_images(dataset_dir, entry['images'])


def load_prior_poses(dataset_dir, topology):
    entry = read_manifest(dataset_dir)['splits'].get('prior')
    if not entry:
        raise DatasetEmptyError(f'{dataset_dir}: dataset has no prior poses')
    records = read_poses(Path(dataset_dir) / entry['poses'], topology)
    return torch.from_numpy(stack_poses(records))


def load_labelled_split(dataset_dir, split, topology):
    """Images, 2D poses, 3D poses and ids of a labelled (val or test) split."""
    entry = read_manifest(dataset_dir)['splits'].get(split)
    if not entry:
        raise DatasetEmptyError(f'{dataset_dir}: dataset has no {split} split')
    records = read_poses(Path(dataset_dir) / entry['poses'], topology)
    return LabelledSplit(
        ids=[record.id for record in records],
        images=load_images(dataset_dir, entry['images']),
        pose2d=torch.from_numpy(stack_poses(records, 'p2d')),
        pose3d=torch.from_numpy(stack_poses(records, 'p3d')),
    )


class LabelledSplit:
    def __init__(self, ids, images, pose2d, pose3d):
        self.ids = ids
        self.images = images
        self.pose2d = pose2d
        self.pose3d = pose3d

    def __len__(self):
        return len(self.ids)

    def subset(self, count):
        return LabelledSplit(self.ids[:count], self.images[:count], self.pose2d[:count], self.pose3d[:count])
