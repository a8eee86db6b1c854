import dataclasses
import io
import json
import tempfile
from pathlib import Path

import torch
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase

from skeletons.codec import read_poses
from skeletons.exceptions import ConfigurationError, DatasetEmptyError
from skeletons.geometry import elevation_stats, perspective_project
from skeletons.renderer import RendererConfig, render
from skeletons.topology import HUMANOID_9

from .clutter import ClutterConfig, clutter_composite, clutter_layer
from .dataset import generate_dataset, load_labelled_split, load_prior_poses, load_training_images, read_manifest
from .kinematics import (
    bone_lengths,
    hand21_model,
    humanoid9_model,
    joint_angles,
    sample_pose3d,
    sample_poses,
)


class KinematicsTests(SimpleTestCase):
    def test_collapsed_ranges_give_one_pose(self):
        model = humanoid9_model()
        fixed = tuple(((0.1, 0.1), (-0.2, -0.2)) for _ in model.angle_ranges)
        collapsed = dataclasses.replace(model, angle_ranges=fixed, yaw_range=(0.4, 0.4), elevation=(0.1, 0.0))
        poses = sample_poses(collapsed, 20, torch.Generator().manual_seed(0)).pose3d
        torch.testing.assert_close(poses, poses[:1].expand_as(poses), atol=1e-12, rtol=0)
        again = sample_pose3d(collapsed, torch.Generator().manual_seed(99))
        torch.testing.assert_close(again, poses[0], atol=1e-12, rtol=0)

    def test_bone_lengths_are_canonical(self):
        for model in (humanoid9_model(), hand21_model()):
            samples = sample_poses(model, 500, torch.Generator().manual_seed(1))
            expected = torch.tensor([model.lengths[joint] for joint in model.bone_joints], dtype=torch.float64)
            lengths = bone_lengths(model, samples.pose3d)
            self.assertLess((lengths - expected).abs().max().item(), 1e-9)

    def test_inverse_kinematics_stays_in_range(self):
        model = humanoid9_model()
        samples = sample_poses(model, 10000, torch.Generator().manual_seed(2))
        angles = joint_angles(model, samples.pose3d, samples.azimuth, samples.elevation)
        for joint in model.bone_joints:
            for k in range(2):
                low, high = model.angle_ranges[joint][k]
                self.assertGreaterEqual(angles[:, joint, k].min().item(), low - 1e-9)
                self.assertLessEqual(angles[:, joint, k].max().item(), high + 1e-9)
        torch.testing.assert_close(angles[:, model.bone_joints], samples.angles[:, model.bone_joints], atol=1e-9, rtol=0)

    def test_root_on_axis_at_anchor(self):
        model = humanoid9_model()
        pose = sample_pose3d(model, torch.Generator().manual_seed(3))
        torch.testing.assert_close(pose[0], torch.tensor([0.0, 0.0, model.depth_anchor], dtype=torch.float64))
        self.assertTrue(bool((pose[:, 2] > 1.0).all()))

    def test_elevation_is_recoverable(self):
        model = humanoid9_model()
        samples = sample_poses(model, 10000, torch.Generator().manual_seed(4))
        stats = elevation_stats(samples.elevation)
        self.assertAlmostEqual(stats.mean.item(), model.elevation[0], delta=0.02)
        self.assertAlmostEqual(stats.std.item(), model.elevation[1], delta=0.02)

    def test_invalid_model(self):
        model = humanoid9_model()
        with self.assertRaises(ConfigurationError):
            dataclasses.replace(model, lengths=(0.0,) * 9)
        with self.assertRaises(ConfigurationError):
            dataclasses.replace(model, angle_ranges=tuple(((0.3, -0.3), (0.0, 0.0)) for _ in range(9)))


class ClutterTests(SimpleTestCase):
    def skeleton(self, seed):
        pose = 0.25 * torch.randn(9, 2, generator=torch.Generator().manual_seed(seed), dtype=torch.float64)
        return render(pose, HUMANOID_9, RendererConfig())

    def test_no_clutter_is_identity(self):
        skeleton = self.skeleton(0)
        config = ClutterConfig(ellipse_count=0, ellipse_intensity=0.0, noise_amplitude=0.0)
        self.assertTrue(torch.equal(clutter_composite(skeleton, config, torch.Generator().manual_seed(0)), skeleton))

    def test_output_stays_in_unit_interval(self):
        config = ClutterConfig(ellipse_count=6, ellipse_intensity=1.0, noise_amplitude=0.5)
        generator = torch.Generator().manual_seed(1)
        skeleton = self.skeleton(1)
        for _ in range(1000):
            image = clutter_composite(skeleton, config, generator)
            self.assertTrue(bool((image >= 0).all()) and bool((image <= 1).all()))

    def test_deviation_bound_and_signal(self):
        config = ClutterConfig()
        for seed in range(50):
            skeleton = self.skeleton(seed)
            layer = clutter_layer(config, skeleton.shape, torch.Generator().manual_seed(seed))
            image = clutter_composite(skeleton, config, torch.Generator().manual_seed(seed))
            coverage = (layer > 0).double().mean().item()
            deviation = (image - skeleton).abs().mean().item()
            self.assertLessEqual(deviation, config.noise_amplitude + coverage * config.ellipse_intensity + 1e-12)
            correlation = torch.corrcoef(torch.stack([image.flatten(), skeleton.flatten()]))[0, 1].item()
            self.assertGreater(correlation, 0.2)


class DatasetTests(SimpleTestCase):
    counts = {'train': 4, 'prior': 5, 'val': 2, 'test': 3}

    def generate(self, directory, **kwargs):
        return generate_dataset(
            humanoid9_model(), self.counts, RendererConfig(height=32, width=32), ClutterConfig(), 7, directory, **kwargs
        )

    def test_fixed_seed_is_byte_identical(self):
        with tempfile.TemporaryDirectory() as first, tempfile.TemporaryDirectory() as second:
            self.generate(first)
            self.generate(second)
            files = sorted(path.relative_to(first) for path in Path(first).rglob('*') if path.is_file())
            self.assertEqual(files, sorted(path.relative_to(second) for path in Path(second).rglob('*') if path.is_file()))
            for name in files:
                self.assertEqual((Path(first) / name).read_bytes(), (Path(second) / name).read_bytes(), str(name))

    def test_split_contracts(self):
        with tempfile.TemporaryDirectory() as tmp:
            manifest = self.generate(tmp)
            self.assertEqual(read_manifest(tmp), json.loads(json.dumps(manifest)))
            ids = [set(entry['ids']) for entry in manifest['splits'].values()]
            self.assertEqual(sum(len(group) for group in ids), len(set().union(*ids)))

            self.assertFalse((Path(tmp) / 'train' / 'poses.jsonl').exists())
            self.assertNotIn('poses', manifest['splits']['train'])
            self.assertEqual(tuple(load_training_images(tmp).shape), (4, 32, 32))

            prior = read_poses(Path(tmp) / 'prior' / 'poses.jsonl', HUMANOID_9)
            self.assertTrue(all(record.p3d is None for record in prior))
            self.assertEqual(tuple(load_prior_poses(tmp, HUMANOID_9).shape), (5, 9, 2))

            for record in read_poses(Path(tmp) / 'test' / 'poses.jsonl', HUMANOID_9):
                reprojected = perspective_project(torch.from_numpy(record.p3d))
                self.assertLess((reprojected - torch.from_numpy(record.p2d)).abs().max().item(), 1e-9)

            split = load_labelled_split(tmp, 'val', HUMANOID_9)
            self.assertEqual(len(split), 2)
            self.assertEqual(tuple(split.pose3d.shape), (2, 9, 3))

    def test_missing_split(self):
        with tempfile.TemporaryDirectory() as tmp:
            generate_dataset(humanoid9_model(), {'prior': 3}, RendererConfig(height=16, width=16), ClutterConfig(), 0, tmp)
            with self.assertRaises(DatasetEmptyError):
                load_training_images(tmp)
            with self.assertRaises(DatasetEmptyError):
                load_labelled_split(tmp, 'test', HUMANOID_9)

    def test_rotation_augmentation(self):
        with tempfile.TemporaryDirectory() as tmp:
            manifest = self.generate(tmp, augment_rotations=(45.0, -90.0))
            self.assertEqual(len(manifest['splits']['train']['images']), 12)
            self.assertTrue((Path(tmp) / 'train' / 'images' / 'train-000000-rot+45.png').exists())
            self.assertTrue((Path(tmp) / 'train' / 'images' / 'train-000000-rot-90.png').exists())


class SynthGenCommandTests(SimpleTestCase):
    def test_identical_manifests(self):
        with tempfile.TemporaryDirectory() as tmp:
            for name in ('a', 'b'):
                call_command('synth_gen', out=str(Path(tmp) / name), seed=7, train=3, prior=3, test=2,
                             height=16, width=16, stdout=io.StringIO())
            self.assertEqual((Path(tmp) / 'a' / 'manifest.json').read_bytes(), (Path(tmp) / 'b' / 'manifest.json').read_bytes())
            resolved = json.loads((Path(tmp) / 'a' / 'resolved_config.json').read_text())
        self.assertEqual(resolved['seed'], 7)
        self.assertEqual(resolved['topology']['name'], 'humanoid-9')

    def test_tiny_counts(self):
        with tempfile.TemporaryDirectory() as tmp:
            call_command('synth_gen', out=tmp, train=1, prior=1, val=0, test=1, height=16, width=16, stdout=io.StringIO())
            manifest = read_manifest(tmp)
        self.assertEqual(sorted(manifest['splits']), ['prior', 'test', 'train'])

    def test_hand_world(self):
        with tempfile.TemporaryDirectory() as tmp:
            call_command('synth_gen', out=tmp, topology='hand-21', train=1, prior=2, val=0, test=1,
                         height=16, width=16, augment_rotations=[90.0], stdout=io.StringIO())
            split = load_labelled_split(tmp, 'test', hand21_model().topology)
        self.assertEqual(tuple(split.pose3d.shape), (1, 21, 3))

    def test_missing_out(self):
        with self.assertRaisesMessage(CommandError, '--out'):
            call_command('synth_gen', train=1)

    def test_configuration_errors(self):
        with tempfile.TemporaryDirectory() as tmp:
            with self.assertRaises(CommandError) as raised:
                call_command('synth_gen', out=tmp, gamma=-1.0, stdout=io.StringIO())
            self.assertEqual(raised.exception.returncode, 2)
            with self.assertRaises(CommandError) as raised:
                call_command('synth_gen', out=tmp, topology='humanoid-17', stdout=io.StringIO())
            self.assertEqual(raised.exception.returncode, 2)
