import dataclasses
import io
import json
import math
import tempfile
from pathlib import Path

import numpy as np
import torch
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase

from .codec import PoseRecord, parse_record, read_poses, stack_poses, write_poses
from .exceptions import (
    CorruptCheckpointError,
    CycleError,
    DegeneratePoseError,
    DuplicateEdgeError,
    EmptyBatchError,
    FormatError,
    JointIndexError,
    NonPositiveDepthError,
    TopologyError,
    TopologyMismatchError,
    ConfigurationError,
    VersionError,
)
from .geometry import (
    LiftOutput,
    bound_depth,
    build_rotation,
    consistency_cycle,
    elevation_stats,
    lift_to_3d,
    perspective_project,
    rotate_about_centroid,
    rotation_x,
    rotation_y,
    sample_azimuth,
    sample_elevation,
)
from .renderer import (
    RendererConfig,
    load_png,
    render,
    render_batch,
    save_png,
    segment_distance_field,
    to_pixels,
)
from .storage import read_checksummed, write_checksummed
from .topology import (
    HAND_21,
    HUMANOID_9,
    HUMANOID_17,
    PRESETS,
    SkeletonTopology,
    get_topology,
    load_topology,
    normalize_pose2d,
    validate_topology,
)

BONE = SkeletonTopology.from_parents('bone', ['a', 'b'], [-1, 0])


def pixel_to_frame(column, row, config):
    return [2.0 * column / (config.width - 1) - 1.0, 1.0 - 2.0 * row / (config.height - 1)]


class TopologyTests(SimpleTestCase):
    def test_presets_are_trees(self):
        self.assertEqual(validate_topology(HUMANOID_17).joint_count, 17)
        self.assertEqual(HUMANOID_17.bone_count, 16)
        self.assertEqual(HUMANOID_17.joint_names[HUMANOID_17.root], 'pelvis')
        for topology in PRESETS.values():
            validate_topology(topology)
            self.assertEqual(topology.bone_count, topology.joint_count - 1)
        self.assertEqual(HAND_21.joint_count, 21)

    def test_self_loop_is_rejected(self):
        looped = dataclasses.replace(HUMANOID_17, edges=HUMANOID_17.edges + ((3, 3),))
        with self.assertRaises(DuplicateEdgeError):
            validate_topology(looped)

    def test_reversed_duplicate_edge_is_rejected(self):
        i, j = HUMANOID_9.edges[0]
        doubled = dataclasses.replace(HUMANOID_9, edges=HUMANOID_9.edges + ((j, i),))
        with self.assertRaises(DuplicateEdgeError):
            validate_topology(doubled)

    def test_parent_cycle_is_rejected(self):
        parent = list(HUMANOID_17.parent)
        parent[2], parent[5] = 5, 2
        with self.assertRaises(CycleError):
            validate_topology(dataclasses.replace(HUMANOID_17, parent=tuple(parent)))

    def test_edge_outside_joint_range(self):
        broken = dataclasses.replace(HUMANOID_9, edges=HUMANOID_9.edges + ((0, 9),))
        with self.assertRaises(JointIndexError) as raised:
            validate_topology(broken)
        self.assertIsInstance(raised.exception, IndexError)

    def test_unknown_preset(self):
        with self.assertRaises(TopologyError):
            get_topology('octopus-8')

    def test_load_descriptor(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'chain.json'
            path.write_text(json.dumps({'joints': ['a', 'b', 'c'], 'parent': [-1, 0, 1], 'edges': [[0, 1], [1, 2]]}))
            topology = load_topology(path)
            self.assertEqual(topology.name, 'chain')
            self.assertEqual(topology.bone_count, 2)

            path.write_text('{"joints": [')
            with self.assertRaises(FormatError):
                load_topology(path)


class NormalizeTests(SimpleTestCase):
    def setUp(self):
        self.generator = torch.Generator().manual_seed(3)
        self.pose = torch.randn(17, 2, generator=self.generator, dtype=torch.float64)

    def test_postconditions(self):
        normalized = normalize_pose2d(self.pose, HUMANOID_17)
        self.assertTrue(torch.allclose(normalized[0], torch.zeros(2, dtype=torch.float64), atol=1e-12))
        self.assertAlmostEqual(normalized.norm(dim=-1).mean().item(), 1.0, places=9)

    def test_identity_on_normalized_pose(self):
        normalized = normalize_pose2d(self.pose, HUMANOID_17)
        torch.testing.assert_close(normalize_pose2d(normalized, HUMANOID_17), normalized, atol=1e-9, rtol=0)

    def test_translation_and_scale_invariance(self):
        reference = normalize_pose2d(self.pose, HUMANOID_17)
        moved = self.pose * 3.5 + torch.tensor([5.0, 5.0], dtype=torch.float64)
        torch.testing.assert_close(normalize_pose2d(moved, HUMANOID_17), reference, atol=1e-9, rtol=0)

    def test_batched(self):
        batch = torch.randn(8, 9, 2, generator=self.generator, dtype=torch.float64)
        normalized = normalize_pose2d(batch, HUMANOID_9)
        torch.testing.assert_close(normalized[3], normalize_pose2d(batch[3], HUMANOID_9))

    def test_degenerate_pose(self):
        with self.assertRaises(DegeneratePoseError):
            normalize_pose2d(torch.ones(9, 2), HUMANOID_9)


class CodecTests(SimpleTestCase):
    def test_roundtrip_is_exact(self):
        rng = np.random.default_rng(0)
        records = [
            PoseRecord(
                id=f'pose-{k}',
                topology='humanoid-17',
                p2d=rng.normal(size=(17, 2)),
                p3d=rng.normal(size=(17, 3)) if k % 2 else None,
            )
            for k in range(100)
        ]
        with tempfile.TemporaryDirectory() as tmp:
            path = write_poses(Path(tmp) / 'poses.jsonl', records)
            loaded = read_poses(path, HUMANOID_17)
        self.assertEqual([record.id for record in loaded], [record.id for record in records])
        np.testing.assert_array_equal(stack_poses(loaded), stack_poses(records))
        np.testing.assert_array_equal(loaded[1].p3d, records[1].p3d)
        self.assertIsNone(loaded[0].p3d)

    def test_joint_count_mismatch(self):
        text = json.dumps({'topology': 'humanoid-17', 'id': 'x', 'p2d': [[0.0, 0.0]] * 16, 'p3d': None})
        with self.assertRaises(TopologyMismatchError):
            parse_record(text, HUMANOID_17)

    def test_non_numeric_token_names_the_line(self):
        good = json.dumps({'topology': 'humanoid-9', 'id': 'a', 'p2d': [[0.0, 1.0]] * 9, 'p3d': None})
        bad = json.dumps({'topology': 'humanoid-9', 'id': 'b', 'p2d': [['x', 1.0]] + [[0.0, 1.0]] * 8})
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'poses.jsonl'
            path.write_text(good + '\n' + bad + '\n')
            with self.assertRaises(FormatError) as raised:
                read_poses(path, HUMANOID_9)
        self.assertEqual(raised.exception.line, 2)
        self.assertIn(':2:', str(raised.exception))


class RendererTests(SimpleTestCase):
    config = RendererConfig(height=9, width=9, gamma=1.0)

    def test_pixel_on_segment(self):
        pose = torch.tensor([pixel_to_frame(2, 4, self.config), pixel_to_frame(6, 4, self.config)], dtype=torch.float64)
        field = segment_distance_field(pose, BONE, self.config)
        self.assertEqual(field[4, 4].item(), 0.0)
        self.assertEqual(render(pose, BONE, self.config)[4, 4].item(), 1.0)
        self.assertAlmostEqual(render(pose, BONE, self.config)[3, 4].item(), math.exp(-1.0), places=9)

    def test_degenerate_bone_is_point_distance(self):
        point = pixel_to_frame(4, 4, self.config)
        pose = torch.tensor([point, point], dtype=torch.float64)
        field = segment_distance_field(pose, BONE, self.config)
        self.assertAlmostEqual(field[4, 7].item(), 9.0, places=9)

    def test_values_in_unit_interval(self):
        pose = 0.3 * torch.randn(9, 2, generator=torch.Generator().manual_seed(1))
        image = render(pose, HUMANOID_9, RendererConfig())
        self.assertEqual(tuple(image.shape), (64, 64))
        self.assertTrue(bool((image <= 1.0).all()) and bool((image >= 0.0).all()))

    def test_dense_sampling_oracle(self):
        config = RendererConfig(height=32, width=32)
        generator = torch.Generator().manual_seed(7)
        pose = 0.6 * (2.0 * torch.rand(9, 2, generator=generator, dtype=torch.float64) - 1.0)
        field = segment_distance_field(pose, HUMANOID_9, config)

        points = to_pixels(pose, config)
        first, second = HUMANOID_9.edge_index()
        r = torch.linspace(0.0, 1.0, 100001, dtype=torch.float64)[:, None]
        for _ in range(20):
            column = int(torch.randint(0, 32, (1,), generator=generator))
            row = int(torch.randint(0, 32, (1,), generator=generator))
            pixel = torch.tensor([column, row], dtype=torch.float64)
            best = math.inf
            for i, j in zip(first.tolist(), second.tolist()):
                samples = points[j] + r * (points[i] - points[j])
                best = min(best, ((samples - pixel) ** 2).sum(-1).min().item())
            self.assertAlmostEqual(field[row, column].item(), best, delta=1e-6)

    def test_gradient_matches_finite_differences(self):
        config = RendererConfig(height=16, width=16)
        pose = 0.5 * torch.randn(9, 2, generator=torch.Generator().manual_seed(11), dtype=torch.float64)
        pose.requires_grad_(True)
        self.assertTrue(torch.autograd.gradcheck(lambda p: render(p, HUMANOID_9, config), (pose,), eps=1e-6, atol=1e-5))

    def test_pixel_gradients_match_central_differences(self):
        config = RendererConfig(height=16, width=16)
        generator = torch.Generator().manual_seed(12)
        step = 1e-6
        for _ in range(100):
            pose = 0.5 * torch.randn(9, 2, generator=generator, dtype=torch.float64)
            row, column = torch.randint(0, 16, (2,), generator=generator).tolist()
            pose.requires_grad_(True)
            (gradient,) = torch.autograd.grad(render(pose, HUMANOID_9, config)[row, column], pose)
            numeric = torch.zeros_like(gradient)
            with torch.no_grad():
                for index in range(pose.numel()):
                    offset = torch.zeros(pose.numel(), dtype=torch.float64)
                    offset[index] = step
                    offset = offset.reshape(pose.shape)
                    upper = render(pose + offset, HUMANOID_9, config)[row, column]
                    lower = render(pose - offset, HUMANOID_9, config)[row, column]
                    numeric.view(-1)[index] = (upper - lower) / (2 * step)
            torch.testing.assert_close(gradient, numeric, atol=1e-5, rtol=1e-4)

    def test_batch_matches_single_renders(self):
        config = RendererConfig(height=16, width=16)
        poses = 0.4 * torch.randn(4, 9, 2, generator=torch.Generator().manual_seed(5))
        batch = render_batch(list(poses), HUMANOID_9, config)
        torch.testing.assert_close(render_batch([poses[0]], HUMANOID_9, config)[0], render(poses[0], HUMANOID_9, config))
        order = torch.tensor([2, 0, 3, 1])
        torch.testing.assert_close(render_batch(poses[order], HUMANOID_9, config), batch[order])
        same = render_batch(poses[:1].expand(3, 9, 2), HUMANOID_9, config)
        self.assertTrue(torch.equal(same[0], same[2]))

    def test_monotone_in_gamma(self):
        config = RendererConfig(height=16, width=16, gamma=0.3)
        sharper = RendererConfig(height=16, width=16, gamma=0.6)
        pose = 0.4 * torch.randn(9, 2, generator=torch.Generator().manual_seed(2), dtype=torch.float64)
        field = segment_distance_field(pose, HUMANOID_9, config)
        off = (field > 1e-9) & (field < 100.0)
        self.assertTrue(bool((render(pose, HUMANOID_9, sharper)[off] < render(pose, HUMANOID_9, config)[off]).all()))

    def test_whole_pixel_translation(self):
        config = RendererConfig(height=32, width=32)
        pose = 0.3 * torch.randn(9, 2, generator=torch.Generator().manual_seed(4), dtype=torch.float64)
        shift = torch.tensor([2 * 2.0 / (config.width - 1), 0.0], dtype=torch.float64)
        image = render(pose, HUMANOID_9, config)
        moved = render(pose + shift, HUMANOID_9, config)
        torch.testing.assert_close(moved[:, 2:], image[:, :-2], atol=1e-9, rtol=0)

    def test_png_roundtrip(self):
        image = render(0.3 * torch.randn(9, 2, generator=torch.Generator().manual_seed(6)), HUMANOID_9, RendererConfig())
        with tempfile.TemporaryDirectory() as tmp:
            loaded = load_png(save_png(image, Path(tmp) / 'skeleton.png'))
        self.assertLessEqual((loaded - image).abs().max().item(), 0.5 / 255 + 1e-6)

    def test_invalid_config(self):
        with self.assertRaises(ConfigurationError):
            RendererConfig(gamma=0.0)
        with self.assertRaises(ConfigurationError):
            RendererConfig(height=4)


def zero_lifter(pose2d):
    shape = pose2d.shape[:-1]
    return LiftOutput(depth_offsets=torch.zeros(shape, dtype=pose2d.dtype), elevation=torch.zeros(shape[:-1], dtype=pose2d.dtype))


class OracleLifter:
    """Returns the depths of whichever known 3D pose projects onto the input."""

    def __init__(self, poses3d, delta=10.0):
        self.poses3d = poses3d
        self.delta = delta

    def __call__(self, pose2d):
        candidates = [(perspective_project(pose) - pose2d).abs().max().item() for pose in self.poses3d]
        pose3d = self.poses3d[int(np.argmin(candidates))]
        return LiftOutput(depth_offsets=pose3d[..., 2] - self.delta, elevation=torch.tensor(0.1, dtype=pose3d.dtype))


class GeometryTests(SimpleTestCase):
    def test_lift_examples(self):
        torch.testing.assert_close(
            lift_to_3d(torch.zeros(1, 2, dtype=torch.float64), torch.zeros(1, dtype=torch.float64), 10.0),
            torch.tensor([[0.0, 0.0, 10.0]], dtype=torch.float64),
        )
        torch.testing.assert_close(
            lift_to_3d(torch.tensor([[0.1, -0.2]], dtype=torch.float64), torch.tensor([2.0], dtype=torch.float64), 10.0),
            torch.tensor([[1.2, -2.4, 12.0]], dtype=torch.float64),
        )

    def test_depth_bound(self):
        lifted = lift_to_3d(torch.zeros(1, 2), torch.tensor([-10.0]), 10.0)
        self.assertGreater(lifted[0, 2].item(), 1.0)
        self.assertGreater(bound_depth(torch.tensor(-50.0)).item(), 1.0)
        self.assertAlmostEqual(bound_depth(torch.tensor(5.0, dtype=torch.float64)).item(), 5.0, places=12)

    def test_projection_inverts_lift(self):
        generator = torch.Generator().manual_seed(0)
        pose = 0.2 * torch.randn(17, 2, generator=generator, dtype=torch.float64)
        offsets = torch.randn(17, generator=generator, dtype=torch.float64)
        lifted = lift_to_3d(pose, offsets, 10.0, bounded=False)
        torch.testing.assert_close(perspective_project(lifted), pose, atol=1e-12, rtol=0)
        self.assertEqual(perspective_project(torch.tensor([0.0, 0.0, 10.0])).tolist(), [0.0, 0.0])

    def test_projection_rejects_zero_depth(self):
        with self.assertRaises(NonPositiveDepthError):
            perspective_project(torch.tensor([[0.0, 0.0, 10.0], [1.0, 1.0, 0.0]]))

    def test_rotation_examples(self):
        eye = torch.eye(3, dtype=torch.float64)
        torch.testing.assert_close(build_rotation(0.0, torch.tensor(0.0, dtype=torch.float64)).matrix, eye)
        azimuth = torch.tensor(0.7, dtype=torch.float64)
        torch.testing.assert_close(build_rotation(azimuth, torch.tensor(0.0, dtype=torch.float64)).matrix, rotation_y(azimuth))

    def test_rotation_matches_sequential_application(self):
        generator = torch.Generator().manual_seed(1)
        a, e = (torch.rand(2, generator=generator, dtype=torch.float64) * 2 - 1) * math.pi
        vector = torch.randn(3, generator=generator, dtype=torch.float64)
        sequential = rotation_x(e).T @ (rotation_y(a) @ (rotation_x(e) @ vector))
        torch.testing.assert_close(build_rotation(a, e).matrix @ vector, sequential, atol=1e-9, rtol=0)

    def test_rotations_are_proper(self):
        generator = torch.Generator().manual_seed(2)
        angles = (torch.rand(3, 1000, generator=generator, dtype=torch.float64) * 2 - 1) * math.pi
        matrix = build_rotation(angles[0], angles[1], angles[2]).matrix
        eye = torch.eye(3, dtype=torch.float64).expand(1000, 3, 3)
        torch.testing.assert_close(matrix.transpose(-1, -2) @ matrix, eye, atol=1e-6, rtol=0)
        torch.testing.assert_close(torch.linalg.det(matrix), torch.ones(1000, dtype=torch.float64), atol=1e-6, rtol=0)

    def test_azimuth_sampling(self):
        samples = sample_azimuth(torch.Generator().manual_seed(0), (100000,), dtype=torch.float64)
        self.assertLess(abs(samples.mean().item()), 0.02)
        self.assertTrue(bool((samples.abs() <= math.pi).all()))
        again = sample_azimuth(torch.Generator().manual_seed(0), (100000,), dtype=torch.float64)
        self.assertTrue(torch.equal(samples, again))

    def test_elevation_statistics(self):
        stats = elevation_stats(torch.full((16,), 0.3, dtype=torch.float64))
        self.assertAlmostEqual(stats.mean.item(), 0.3, places=12)
        self.assertAlmostEqual(stats.std.item(), 0.0, places=12)

        generator = torch.Generator().manual_seed(9)
        draws = 0.2 + 0.05 * torch.randn(4096, generator=generator, dtype=torch.float64)
        stats = elevation_stats(draws)
        self.assertAlmostEqual(stats.mean.item(), 0.2, delta=0.01)
        self.assertAlmostEqual(stats.std.item(), 0.05, delta=0.01)
        resampled = sample_elevation(stats, generator, (4096,))
        self.assertAlmostEqual(resampled.mean().item(), 0.2, delta=0.01)

        with self.assertRaises(EmptyBatchError):
            elevation_stats(torch.empty(0))

    def test_identity_rotation_collapses_cycle(self):
        pose = 0.2 * torch.randn(9, 2, generator=torch.Generator().manual_seed(3), dtype=torch.float64)
        rotation = build_rotation(torch.tensor(0.0, dtype=torch.float64), torch.tensor(0.0, dtype=torch.float64))
        cycle = consistency_cycle(pose, zero_lifter, rotation=rotation)
        torch.testing.assert_close(cycle.y_hat, pose, atol=1e-12, rtol=0)
        torch.testing.assert_close(cycle.v_hat_prime, cycle.v_hat, atol=1e-12, rtol=0)
        torch.testing.assert_close(cycle.y_prime, pose, atol=1e-12, rtol=0)

    def test_oracle_lifter_cycle_has_zero_losses(self):
        generator = torch.Generator().manual_seed(4)
        pose3d = 0.5 * torch.randn(9, 3, generator=generator, dtype=torch.float64)
        pose3d[:, 2] += 10.0
        a, e, e2 = torch.rand(3, generator=generator, dtype=torch.float64) - 0.5
        rotation = build_rotation(a * 2 * math.pi, e, e2)
        rotated = rotate_about_centroid(pose3d, rotation.matrix)

        pose2d = perspective_project(pose3d)
        cycle = consistency_cycle(pose2d, OracleLifter([pose3d, rotated]), rotation=rotation)
        self.assertLess((cycle.v_hat_prime - cycle.v_hat).abs().max().item(), 1e-10)
        self.assertLess((cycle.v_prime - cycle.v).abs().max().item(), 1e-10)
        self.assertLess((cycle.y_prime - pose2d).abs().max().item(), 1e-10)

    def test_wide_pose_stays_in_front_of_camera(self):
        pose = torch.zeros(9, 2, dtype=torch.float64)
        pose[:, 0] = torch.linspace(-1.5, 1.5, 9, dtype=torch.float64)
        pose[:, 1] = 0.3 * torch.cos(torch.arange(9, dtype=torch.float64))
        rotation = build_rotation(torch.tensor(math.pi / 2, dtype=torch.float64), torch.tensor(0.0, dtype=torch.float64))
        swung = rotate_about_centroid(lift_to_3d(pose, torch.zeros(9, dtype=torch.float64)), rotation.matrix)
        self.assertLess(swung[:, 2].min().item(), 0.0)

        cycle = consistency_cycle(pose, zero_lifter, rotation=rotation)
        for value in (cycle.v, cycle.v_hat, cycle.y_hat, cycle.v_hat_prime, cycle.v_prime, cycle.y_prime):
            self.assertTrue(bool(torch.isfinite(value).all()))
        for value in (cycle.v, cycle.v_hat, cycle.v_hat_prime, cycle.v_prime):
            self.assertTrue(bool((value[..., 2] > 1.0).all()))

    def test_rotation_round_trip(self):
        generator = torch.Generator().manual_seed(5)
        pose3d = torch.randn(9, 3, generator=generator, dtype=torch.float64) + torch.tensor([0.0, 0.0, 10.0], dtype=torch.float64)
        rotation = build_rotation(torch.tensor(1.1, dtype=torch.float64), torch.tensor(0.2, dtype=torch.float64), torch.tensor(-0.3, dtype=torch.float64))
        center = pose3d.mean(dim=0, keepdim=True)
        there = rotate_about_centroid(pose3d, rotation.matrix, center)
        back = rotate_about_centroid(there, rotation.inverse_matrix(), center)
        torch.testing.assert_close(back, pose3d, atol=1e-9, rtol=0)

    def test_cycle_outputs_are_finite(self):
        torch.manual_seed(0)
        net = torch.nn.Linear(18, 10)

        def lifter(pose2d):
            out = net(pose2d.flatten(-2))
            return LiftOutput(depth_offsets=out[..., :9], elevation=out[..., 9])

        poses = 0.2 * torch.randn(32, 9, 2)
        cycle = consistency_cycle(poses, lifter, generator=torch.Generator().manual_seed(1))
        for value in (cycle.v, cycle.v_hat, cycle.y_hat, cycle.v_hat_prime, cycle.v_prime, cycle.y_prime):
            self.assertTrue(bool(torch.isfinite(value).all()))
        self.assertTrue(bool((cycle.v[..., 2] > 1.0).all()))
        self.assertTrue(bool((cycle.v_hat_prime[..., 2] > 1.0).all()))


class StorageTests(SimpleTestCase):
    def test_checksummed_container(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = write_checksummed(Path(tmp) / 'blob.pt', {'format': 'demo', 'version': 1, 'x': torch.arange(4)})
            self.assertTrue(torch.equal(read_checksummed(path, 'demo', {1})['x'], torch.arange(4)))

            with self.assertRaises(VersionError):
                read_checksummed(path, 'other', {1})
            with self.assertRaises(VersionError):
                read_checksummed(path, 'demo', {2})

            blob = bytearray(path.read_bytes())
            blob[-1] ^= 0xFF
            path.write_bytes(bytes(blob))
            with self.assertRaises(CorruptCheckpointError):
                read_checksummed(path, 'demo', {1})

            path.write_bytes(b'POSE')
            with self.assertRaises(CorruptCheckpointError):
                read_checksummed(path, 'demo', {1})


class CommandTests(SimpleTestCase):
    def test_render_pose_file(self):
        records = [
            PoseRecord(id=f'p{k}', topology='humanoid-9', p2d=np.random.default_rng(k).normal(size=(9, 2)))
            for k in range(3)
        ]
        with tempfile.TemporaryDirectory() as tmp:
            poses = write_poses(Path(tmp) / 'poses.jsonl', records)
            out = Path(tmp) / 'images'
            call_command('render', poses=str(poses), out=str(out), height=32, width=32, stdout=io.StringIO())
            self.assertEqual(sorted(path.name for path in out.glob('*.png')), ['p0.png', 'p1.png', 'p2.png'])
            self.assertEqual(tuple(load_png(out / 'p0.png').shape), (32, 32))
            resolved = json.loads((out / 'resolved_config.json').read_text())
            self.assertEqual(resolved['height'], 32)

    def test_config_file_sits_between_defaults_and_flags(self):
        records = [PoseRecord(id='p0', topology='humanoid-9', p2d=np.random.default_rng(0).normal(size=(9, 2)))]
        with tempfile.TemporaryDirectory() as tmp:
            poses = write_poses(Path(tmp) / 'poses.jsonl', records)
            config = Path(tmp) / 'run.json'
            config.write_text(json.dumps({'height': 16, 'width': 48}))
            out = Path(tmp) / 'images'
            call_command('render', config=str(config), poses=str(poses), out=str(out), width=32,
                         stdout=io.StringIO())
            self.assertEqual(tuple(load_png(out / 'p0.png').shape), (16, 32))
            resolved = json.loads((out / 'resolved_config.json').read_text())
        self.assertEqual((resolved['height'], resolved['width']), (16, 32))

    def test_render_needs_a_source(self):
        with tempfile.TemporaryDirectory() as tmp:
            with self.assertRaises(CommandError) as raised:
                call_command('render', out=tmp)
        self.assertEqual(raised.exception.returncode, 2)

    def test_render_missing_file_is_io_error(self):
        with tempfile.TemporaryDirectory() as tmp:
            with self.assertRaises(CommandError) as raised:
                call_command('render', poses=str(Path(tmp) / 'absent.jsonl'), out=tmp)
        self.assertEqual(raised.exception.returncode, 3)

    def test_import_coco_style_keypoints(self):
        entries = [
            {'id': 'first', 'keypoints': [float(v) for k in range(9) for v in (10 * k, 5 * k * k, 2)]},
            {'keypoints': [[0.0, 0.0]] * 9},
            {'keypoints': [[k, -k] for k in range(9)]},
        ]
        with tempfile.TemporaryDirectory() as tmp:
            source = Path(tmp) / 'external.json'
            source.write_text(json.dumps(entries))
            out = Path(tmp) / 'poses.jsonl'
            call_command('import_poses', input=str(source), out=str(out), y_down=True, stdout=io.StringIO())
            records = read_poses(out, HUMANOID_9)
        self.assertEqual([record.id for record in records], ['first', 'import-000002'])
        pose = torch.from_numpy(records[0].p2d)
        self.assertAlmostEqual(pose.norm(dim=-1).mean().item(), 1.0, places=9)
        self.assertLessEqual(pose[1:, 1].max().item(), 0.0)
