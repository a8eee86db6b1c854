import math
import tempfile
from pathlib import Path

import matplotlib.pyplot as plt
import numpy as np
from django.test import SimpleTestCase

from skeletons.exceptions import DegenerateTargetError, DomainError, EmptyErrorsError, LengthMismatchError
from skeletons.topology import HUMANOID_9, HUMANOID_17

from .figures import PREDICTED_COLOR, TARGET_COLOR, emit_curve, emit_pose_figure, pose_figure
from .metrics import (
    evaluate_predictions,
    joint_errors,
    mean_pose_baseline,
    p_mpjpe,
    pck_auc,
    procrustes_align,
)


def random_rotation(rng):
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def umeyama(predicted, target):
    """Similarity transform mapping ``predicted`` onto ``target`` via the cross-covariance SVD."""
    mu_p, mu_t = predicted.mean(axis=0), target.mean(axis=0)
    p, t = predicted - mu_p, target - mu_t
    covariance = t.T @ p / len(p)
    u, d, vt = np.linalg.svd(covariance)
    s = np.eye(3)
    s[2, 2] = np.sign(np.linalg.det(u) * np.linalg.det(vt))
    rotation = u @ s @ vt
    scale = np.trace(np.diag(d) @ s) / (p ** 2).sum(axis=1).mean()
    aligned = scale * p @ rotation.T + mu_t
    return aligned, ((aligned - target) ** 2).sum()


class ProcrustesTests(SimpleTestCase):
    def setUp(self):
        self.rng = np.random.default_rng(3)
        self.target = self.rng.normal(size=(17, 3))

    def test_identity(self):
        alignment = procrustes_align(self.target, self.target)
        np.testing.assert_allclose(alignment.aligned, self.target, atol=1e-12)
        np.testing.assert_allclose(alignment.rotation, np.eye(3), atol=1e-12)
        self.assertAlmostEqual(float(alignment.scale), 1.0, places=12)
        np.testing.assert_allclose(alignment.translation, np.zeros(3), atol=1e-12)
        self.assertLess(float(alignment.residual), 1e-20)

    def test_similarity_is_removed(self):
        rotation = random_rotation(self.rng)
        predicted = 2.3 * self.target @ rotation.T + np.array([0.4, -1.0, 7.0])
        self.assertLess(float(procrustes_align(predicted, self.target).residual), 1e-9)

    def test_matches_independent_oracle(self):
        for _ in range(20):
            predicted = self.target @ random_rotation(self.rng).T * 0.7 + self.rng.normal(scale=0.2, size=(17, 3))
            alignment = procrustes_align(predicted, self.target)
            aligned, residual = umeyama(predicted, self.target)
            np.testing.assert_allclose(alignment.aligned, aligned, atol=1e-9)
            self.assertAlmostEqual(float(alignment.residual), residual, delta=1e-9)

    def test_no_reflection(self):
        mirrored = self.target * np.array([-1.0, 1.0, 1.0])
        alignment = procrustes_align(mirrored, self.target)
        self.assertAlmostEqual(float(np.linalg.det(alignment.rotation)), 1.0, places=9)
        self.assertGreater(float(alignment.residual), 1e-6)

    def test_never_worse_than_unaligned(self):
        for _ in range(20):
            predicted = self.target + self.rng.normal(scale=0.3, size=(17, 3))
            unaligned = ((predicted - self.target) ** 2).sum()
            self.assertLessEqual(float(procrustes_align(predicted, self.target).residual), unaligned + 1e-12)

    def test_batched_matches_single(self):
        predicted = self.rng.normal(size=(5, 17, 3))
        targets = self.rng.normal(size=(5, 17, 3))
        batched = procrustes_align(predicted, targets)
        for k in range(5):
            np.testing.assert_allclose(batched.aligned[k], procrustes_align(predicted[k], targets[k]).aligned, atol=1e-12)

    def test_degenerate_target(self):
        with self.assertRaises(DegenerateTargetError):
            procrustes_align(self.target, np.ones((17, 3)))


class PoseErrorTests(SimpleTestCase):
    def setUp(self):
        self.rng = np.random.default_rng(11)
        self.targets = self.rng.normal(size=(50, 17, 3))

    def test_identical_sets(self):
        self.assertLess(p_mpjpe(self.targets, self.targets), 1e-12)

    def test_rigid_copies(self):
        copies = np.stack([
            1.7 * pose @ random_rotation(self.rng).T + self.rng.normal(size=3) for pose in self.targets
        ])
        self.assertLess(p_mpjpe(copies, self.targets), 1e-9)

    def test_invariant_to_similarity_of_predictions(self):
        predicted = self.targets + self.rng.normal(scale=0.1, size=self.targets.shape)
        moved = 0.4 * predicted @ random_rotation(self.rng).T + np.array([3.0, 0.0, -2.0])
        self.assertAlmostEqual(p_mpjpe(moved, self.targets), p_mpjpe(predicted, self.targets), delta=1e-9)

    def test_noise_oracle(self):
        sigma, joints = 0.01, 17
        targets = self.rng.normal(size=(1000, joints, 3))
        predicted = targets + self.rng.normal(scale=sigma, size=targets.shape)
        expected = sigma * 2.0 * math.sqrt(2.0 / math.pi) * math.sqrt((3 * joints - 7) / (3 * joints))
        self.assertAlmostEqual(p_mpjpe(predicted, targets) / expected, 1.0, delta=0.05)

    def test_length_mismatch(self):
        with self.assertRaises(LengthMismatchError):
            joint_errors(self.targets[:3], self.targets[:4])

    def test_mean_pose_baseline(self):
        same = np.broadcast_to(self.targets[0], self.targets.shape)
        self.assertLess(mean_pose_baseline(same).p_mpjpe, 1e-9)
        self.assertGreater(mean_pose_baseline(self.targets).p_mpjpe, 0.0)


class PckTests(SimpleTestCase):
    def test_all_correct(self):
        self.assertEqual(pck_auc(np.zeros(40)), (100.0, 100.0))

    def test_all_wrong(self):
        self.assertEqual(pck_auc(np.full(40, 151.0)), (0.0, 0.0))

    def test_half_correct(self):
        pck, _ = pck_auc(np.concatenate([np.zeros(20), np.full(20, 200.0)]))
        self.assertEqual(pck, 50.0)

    def test_monotone_and_auc_bound(self):
        errors = np.random.default_rng(0).uniform(0.0, 250.0, size=500)
        values = [pck_auc(errors, threshold)[0] for threshold in np.linspace(1.0, 300.0, 40)]
        self.assertEqual(values, sorted(values))
        pck, auc = pck_auc(errors)
        self.assertLessEqual(auc, pck)

    def test_errors(self):
        with self.assertRaises(EmptyErrorsError):
            pck_auc([])
        with self.assertRaises(DomainError):
            pck_auc([1.0, -0.5])
        with self.assertRaises(EmptyErrorsError):
            evaluate_predictions(np.zeros((0, 17, 3)), np.zeros((0, 17, 3)))

    def test_report_ranges(self):
        rng = np.random.default_rng(5)
        targets = rng.normal(size=(30, 9, 3))
        report = evaluate_predictions(targets + rng.normal(scale=0.2, size=targets.shape), targets)
        self.assertEqual(report.count, 30)
        self.assertEqual(len(report.per_sample), 30)
        self.assertTrue(0.0 <= report.auc <= report.pck <= 100.0)
        self.assertGreater(report.p_mpjpe, 0.0)
        self.assertAlmostEqual(report.p_mpjpe, float(np.mean(report.per_sample)), places=9)


class FigureTests(SimpleTestCase):
    def setUp(self):
        rng = np.random.default_rng(2)
        self.image = rng.uniform(size=(64, 64))
        self.pose = rng.normal(size=(9, 3)) + np.array([0.0, 0.0, 10.0])

    def tearDown(self):
        plt.close('all')

    def test_one_panel_per_view(self):
        figure = pose_figure(self.image, self.pose, HUMANOID_9, views=(0.0, 45.0, 90.0))
        self.assertEqual(len(figure.axes), 4)
        self.assertEqual(len(pose_figure(self.image, self.pose, HUMANOID_9, views=()).axes), 1)

    def test_predicted_and_target_overlays_coincide(self):
        figure = pose_figure(self.image, self.pose, HUMANOID_9, target=self.pose, views=(30.0,))
        lines = figure.axes[1].lines
        red = [line for line in lines if line.get_color() == PREDICTED_COLOR]
        green = [line for line in lines if line.get_color() == TARGET_COLOR]
        self.assertEqual(len(red), HUMANOID_9.bone_count)
        self.assertEqual(len(green), HUMANOID_9.bone_count)
        for predicted, target in zip(red, green):
            np.testing.assert_array_equal(predicted.get_xydata(), target.get_xydata())

    def test_files_are_written(self):
        with tempfile.TemporaryDirectory() as tmp:
            pose = np.random.default_rng(4).normal(size=(17, 3))
            figure = emit_pose_figure(self.image, pose, HUMANOID_17, Path(tmp) / 'figs' / 'pose.png')
            curve = emit_curve([1, 2, 3], [3.0, 2.0, 1.5], 'total', Path(tmp) / 'curve.png')
            self.assertGreater(figure.stat().st_size, 0)
            self.assertGreater(curve.stat().st_size, 0)
