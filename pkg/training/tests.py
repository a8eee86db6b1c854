import dataclasses
import io
import json
import math
import tempfile
from pathlib import Path
from unittest import mock

import torch
from django.core.management import call_command
from django.test import SimpleTestCase

from priors.flow import FlowBundle, FlowConfig, FlowPrior, build_flow_prior, parameter_checksum
from priors.pca import flatten_poses, pca_fit
from skeletons.exceptions import (
    ConfigurationError,
    CorruptCheckpointError,
    DomainError,
    InvalidWeightsError,
    NonFiniteLossError,
    PairingError,
    ShapeMismatchError,
    VersionError,
    ZeroSkeletonError,
)
from skeletons.geometry import perspective_project
from skeletons.renderer import RendererConfig, place_in_frame, render
from skeletons.topology import HUMANOID_9, HUMANOID_17, SkeletonTopology, normalize_pose2d
from synth.dataset import LabelledSplit
from synth.kinematics import humanoid9_model, sample_poses

from . import ablation, trainer
from .ablation import ABLATIONS, trend_check
from .checkpoints import load_checkpoint, save_checkpoint
from .losses import (
    TERMS,
    LossWeights,
    loss_2d,
    loss_3d,
    loss_bl,
    loss_def,
    loss_discriminator,
    loss_discriminator_from_logits,
    loss_generator_adv,
    loss_generator_from_logits,
    loss_omega,
    loss_total,
    random_derangement,
    reference_bone_lengths,
    relative_bone_lengths,
)
from .networks import Discriminator, JointNet, Lifter, NetworkSpec, SkeletonNet
from .state import TrainConfig, build_state
from .trainer import TrainingData, evaluate_state, fit, predict, sample_batch, train_step

RENDERER = RendererConfig(height=16, width=16, gamma=0.308)
CONFIG = TrainConfig(
    steps=3, batch_size=4, eval_every=1, checkpoint_every=2, eval_batch_size=8,
    lifter_width=32, lifter_blocks=1, seed=0,
)


def figure_poses(count, seed):
    """Camera-frame humanoid-9 poses and their normalized 2D projections."""
    pose3d = sample_poses(humanoid9_model(), count, torch.Generator().manual_seed(seed)).pose3d
    return pose3d, normalize_pose2d(perspective_project(pose3d), HUMANOID_9)


def skeleton_images(pose2d):
    return render(place_in_frame(pose2d.to(torch.float32)), HUMANOID_9, RENDERER)


def training_data():
    _, prior = figure_poses(40, 1)
    _, train = figure_poses(8, 2)
    pose3d, pose2d = figure_poses(6, 3)
    validation = LabelledSplit([f'val-{k}' for k in range(6)], skeleton_images(pose2d), perspective_project(pose3d), pose3d)
    return TrainingData(images=skeleton_images(train), prior=prior.to(torch.float32), validation=validation,
                        validation_split='val')


def small_flow(prior):
    pca = pca_fit(flatten_poses(prior), 6)
    flow = build_flow_prior(FlowConfig(dimension=6, layers=2, hidden=16), seed=0).freeze()
    return FlowBundle(prior=flow, pca=pca, topology=HUMANOID_9)


def fresh_state(data, seed=0):
    weights = LossWeights().with_reference(reference_bone_lengths(data.prior, HUMANOID_9))
    return build_state(dataclasses.replace(CONFIG, seed=seed), HUMANOID_9, RENDERER, weights, small_flow(data.prior))


STAR = SkeletonTopology.from_parents('star', ['root', 'a', 'b', 'c', 'd'], [-1, 0, 0, 0, 0])


class ReconstructionLossTests(SimpleTestCase):
    def setUp(self):
        self.generator = torch.Generator().manual_seed(0)

    def test_identical_inputs(self):
        y = torch.randn(5, 17, 2, generator=self.generator)
        self.assertEqual(loss_2d(y, y).item(), 0.0)
        v = torch.randn(5, 17, 3, generator=self.generator)
        self.assertEqual(loss_3d(v, v).item(), 0.0)

    def test_mean_convention(self):
        y = torch.zeros(17, 2, dtype=torch.float64)
        moved = y.clone()
        moved[4, 1] = 1.0
        self.assertAlmostEqual(loss_2d(moved, y).item(), 1 / 34, places=15)

    def test_symmetry(self):
        a = torch.randn(8, 9, 3, generator=self.generator, dtype=torch.float64)
        b = torch.randn(8, 9, 3, generator=self.generator, dtype=torch.float64)
        self.assertEqual(loss_3d(a, b).item(), loss_3d(b, a).item())

    def test_shape_mismatch(self):
        with self.assertRaises(ShapeMismatchError):
            loss_2d(torch.zeros(2, 9, 2), torch.zeros(2, 17, 2))

    def test_batch_order_invariance(self):
        a = torch.randn(8, 9, 2, generator=self.generator, dtype=torch.float64)
        b = torch.randn(8, 9, 2, generator=self.generator, dtype=torch.float64)
        order = torch.randperm(8, generator=self.generator)
        self.assertAlmostEqual(loss_2d(a[order], b[order]).item(), loss_2d(a, b).item(), delta=1e-12)

    def test_gradients(self):
        a = torch.randn(3, 4, 2, generator=self.generator, dtype=torch.float64, requires_grad=True)
        b = torch.randn(3, 4, 2, generator=self.generator, dtype=torch.float64)
        self.assertTrue(torch.autograd.gradcheck(lambda x: loss_2d(x, b), (a,), eps=1e-4, atol=1e-6))
        self.assertTrue(torch.autograd.gradcheck(lambda x: loss_3d(x, b), (a,), eps=1e-4, atol=1e-6))


class DeformationLossTests(SimpleTestCase):
    def setUp(self):
        self.generator = torch.Generator().manual_seed(1)
        self.v = torch.randn(6, 9, 3, generator=self.generator, dtype=torch.float64)

    def test_derangement_has_no_fixed_points(self):
        for n in (2, 3, 10):
            permutation = random_derangement(n, self.generator)
            self.assertEqual(sorted(permutation.tolist()), list(range(n)))
            self.assertFalse((permutation == torch.arange(n)).any())
        with self.assertRaises(PairingError):
            random_derangement(1)

    def test_unchanged_poses(self):
        self.assertEqual(loss_def(self.v, self.v, generator=self.generator).item(), 0.0)

    def test_shared_offset(self):
        moved = self.v + 0.3 * torch.randn(6, 9, 3, generator=self.generator, dtype=torch.float64)
        pairing = random_derangement(6, self.generator)
        shifted = moved + torch.tensor([1.5, -2.0, 0.25], dtype=torch.float64)
        self.assertAlmostEqual(loss_def(self.v, shifted, pairing).item(), loss_def(self.v, moved, pairing).item(),
                               delta=1e-12)

    def test_direct_formula(self):
        moved = torch.randn(6, 9, 3, generator=self.generator, dtype=torch.float64)
        pairing = random_derangement(6, self.generator)
        total = 0.0
        for j, k in enumerate(pairing.tolist()):
            for joint in range(9):
                change = (moved[j, joint] - moved[k, joint]) - (self.v[j, joint] - self.v[k, joint])
                total += float((change ** 2).sum())
        self.assertAlmostEqual(loss_def(self.v, moved, pairing).item(), total / (6 * 9), delta=1e-12)

    def test_single_sample(self):
        with self.assertRaises(PairingError):
            loss_def(self.v[:1], self.v[:1])

    def test_gradient(self):
        moved = torch.randn(4, 5, 3, generator=self.generator, dtype=torch.float64, requires_grad=True)
        pairing = random_derangement(4, self.generator)
        self.assertTrue(torch.autograd.gradcheck(lambda x: loss_def(self.v[:4, :5], x, pairing), (moved,), eps=1e-4))


class BoneLengthTests(SimpleTestCase):
    def test_equal_bones(self):
        pose = torch.tensor([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1], [-1, 0, 0]], dtype=torch.float64)
        torch.testing.assert_close(relative_bone_lengths(pose, STAR), torch.ones(4, dtype=torch.float64))

    def test_arithmetic(self):
        pose = torch.tensor([[0, 0, 0], [2, 0, 0], [0, 1, 0], [0, 0, 1], [-1, 0, 0]], dtype=torch.float64)
        torch.testing.assert_close(
            relative_bone_lengths(pose, STAR), torch.tensor([1.6, 0.8, 0.8, 0.8], dtype=torch.float64),
        )

    def test_scale_invariance(self):
        pose, _ = figure_poses(3, 0)
        torch.testing.assert_close(
            relative_bone_lengths(3.7 * pose, HUMANOID_9), relative_bone_lengths(pose, HUMANOID_9), atol=1e-12, rtol=0,
        )

    def test_zero_skeleton(self):
        with self.assertRaises(ZeroSkeletonError):
            relative_bone_lengths(torch.ones(9, 3), HUMANOID_9)

    def test_reference_averages_one(self):
        _, prior = figure_poses(30, 4)
        reference = reference_bone_lengths(prior, HUMANOID_9)
        self.assertEqual(len(reference), HUMANOID_9.bone_count)
        self.assertAlmostEqual(sum(reference) / len(reference), 1.0, places=12)

    def test_minimum_at_reference(self):
        pose = torch.randn(17, 3, generator=torch.Generator().manual_seed(2), dtype=torch.float64)
        reference = relative_bone_lengths(pose, HUMANOID_17)
        minimum = 16 * math.log(0.1 * math.sqrt(2 * math.pi))
        self.assertAlmostEqual(loss_bl(pose, HUMANOID_17, reference, 0.1).item(), minimum, delta=1e-9)
        moved = pose.clone()
        moved[3] += 0.2
        self.assertGreater(loss_bl(moved, HUMANOID_17, reference, 0.1).item(), minimum)

    def test_gradient(self):
        generator = torch.Generator().manual_seed(3)
        reference = relative_bone_lengths(torch.randn(9, 3, generator=generator, dtype=torch.float64), HUMANOID_9)
        pose = torch.randn(2, 9, 3, generator=generator, dtype=torch.float64, requires_grad=True)
        self.assertTrue(torch.autograd.gradcheck(lambda x: loss_bl(x, HUMANOID_9, reference, 0.1), (pose,), eps=1e-6))

    def test_reference_size(self):
        with self.assertRaises(ShapeMismatchError):
            loss_bl(torch.randn(9, 3), HUMANOID_9, [1.0] * 4, 0.1)


class AdversarialLossTests(SimpleTestCase):
    def test_perfect_discriminator(self):
        self.assertEqual(loss_discriminator(torch.ones(4), torch.zeros(4)).item(), 0.0)

    def test_constant_discriminator(self):
        half = torch.full((8,), 0.5, dtype=torch.float64)
        self.assertAlmostEqual(loss_discriminator(half, half).item(), 2 * math.log(0.5), places=12)
        self.assertAlmostEqual(loss_generator_adv(half).item(), math.log(2.0), places=12)

    def test_objective_is_never_positive(self):
        generator = torch.Generator().manual_seed(0)
        for _ in range(1000):
            real, fake = torch.rand(2, 16, generator=generator, dtype=torch.float64).clamp(1e-9, 1 - 1e-9)
            self.assertLessEqual(loss_discriminator(real, fake).item(), 0.0)

    def test_domain(self):
        with self.assertRaises(DomainError):
            loss_discriminator(torch.tensor([1.2]), torch.tensor([0.5]))
        with self.assertRaises(DomainError):
            loss_generator_adv(torch.tensor([float('nan')]))

    def test_logit_forms_agree(self):
        generator = torch.Generator().manual_seed(4)
        real, fake = 3 * torch.randn(2, 32, generator=generator, dtype=torch.float64)
        self.assertAlmostEqual(
            loss_discriminator_from_logits(real, fake).item(),
            loss_discriminator(torch.sigmoid(real), torch.sigmoid(fake)).item(), places=10,
        )
        self.assertAlmostEqual(
            loss_generator_from_logits(fake).item(), loss_generator_adv(torch.sigmoid(fake)).item(), places=10,
        )


class OmegaLossTests(SimpleTestCase):
    def setUp(self):
        generator = torch.Generator().manual_seed(5)
        self.joints = torch.rand(2, 9, 2, generator=generator, dtype=torch.float64)
        self.skeleton = torch.rand(2, 16, 16, generator=generator, dtype=torch.float64) * 0.5

    def test_zero(self):
        self.assertEqual(loss_omega(self.joints, self.joints, self.skeleton, self.skeleton, 0.1).item(), 0.0)

    def test_pixel_term(self):
        rendered = self.skeleton + 0.2
        self.assertAlmostEqual(loss_omega(self.joints, self.joints, rendered, self.skeleton, 0.1).item(), 0.004,
                               places=12)

    def test_lambda_scales_pixel_term_only(self):
        predicted = self.joints + 0.1
        rendered = self.skeleton + 0.3
        first = loss_omega(predicted, self.joints, self.skeleton, self.skeleton, 0.1).item()
        single = loss_omega(predicted, self.joints, rendered, self.skeleton, 0.1).item()
        double = loss_omega(predicted, self.joints, rendered, self.skeleton, 0.2).item()
        self.assertAlmostEqual(double - first, 2 * (single - first), places=12)

    def test_resolution_mismatch(self):
        with self.assertRaises(ShapeMismatchError):
            loss_omega(self.joints, self.joints, torch.zeros(2, 32, 32), self.skeleton, 0.1)


class TotalLossTests(SimpleTestCase):
    def components(self, *values):
        adversarial, omega, base, flow_nll, bone_length = values
        return {
            'adversarial': torch.tensor(adversarial),
            'omega': torch.tensor(omega),
            'reprojection_2d': torch.tensor(base / 3),
            'consistency_3d': torch.tensor(base / 3),
            'deformation': torch.tensor(base / 3),
            'flow_nll': torch.tensor(flow_nll),
            'bone_length': torch.tensor(bone_length),
        }

    def test_zero(self):
        total, breakdown = loss_total(self.components(0.0, 0.0, 0.0, 0.0, 0.0), LossWeights())
        self.assertEqual(total.item(), 0.0)
        self.assertEqual(set(breakdown), set(TERMS))

    def test_arithmetic(self):
        total, _ = loss_total(self.components(0.1, 0.2, 0.3, 0.4, 0.5), LossWeights())
        self.assertAlmostEqual(total.item(), 1.5, places=6)

    def test_ablated_weights(self):
        weights = dataclasses.replace(LossWeights(), **ABLATIONS['adversarial+omega+base'])
        total, _ = loss_total(self.components(0.1, 0.2, 0.3, 0.4, 0.5), weights)
        self.assertAlmostEqual(total.item(), 0.6, places=6)

    def test_non_finite_term(self):
        components = self.components(0.1, 0.2, 0.3, 0.4, 0.5)
        components['flow_nll'] = torch.tensor(float('inf'))
        with self.assertRaises(NonFiniteLossError) as caught:
            loss_total(components, LossWeights())
        self.assertEqual(caught.exception.term, 'flow_nll')

    def test_weight_validation(self):
        with self.assertRaises(InvalidWeightsError):
            LossWeights(adversarial=-1.0)
        with self.assertRaises(InvalidWeightsError):
            LossWeights(omega_lambda=0.0)
        with self.assertRaises(InvalidWeightsError):
            LossWeights(reference_bones=(1.0, 2.0))
        with self.assertRaises(InvalidWeightsError):
            LossWeights.from_settings(smoothness=1.0)
        self.assertEqual(LossWeights.from_settings(bone_length=0.0).bone_length, 0.0)


class NetworkTests(SimpleTestCase):
    def setUp(self):
        torch.manual_seed(0)

    def test_skeleton_net_range(self):
        net = SkeletonNet(NetworkSpec(joint_count=17, height=64, width=64, lifter_width=32, lifter_blocks=1))
        out = net(torch.rand(2, 64, 64))
        self.assertEqual(out.shape, (2, 64, 64))
        self.assertTrue(((out >= 0) & (out <= 1)).all())

    def test_joint_net_range(self):
        out = JointNet(NetworkSpec(joint_count=9, height=16, width=16))(torch.rand(3, 16, 16))
        self.assertEqual(out.shape, (3, 9, 2))
        self.assertTrue((out.abs() <= 1).all())

    def test_lifter_outputs(self):
        lifter = Lifter(NetworkSpec(joint_count=17, height=16, width=16, lifter_width=64)).eval()
        out = lifter(torch.randn(17, 2))
        self.assertEqual(out.depth_offsets.shape, (17,))
        self.assertEqual(out.elevation.shape, ())

    def test_discriminator_range(self):
        probability = Discriminator(NetworkSpec(joint_count=9, height=16, width=16)).probability(torch.rand(1000, 16, 16))
        self.assertTrue(((probability > 0) & (probability < 1)).all())

    def test_shape_contracts(self):
        spec = NetworkSpec(joint_count=9, height=16, width=16)
        with self.assertRaises(ShapeMismatchError):
            SkeletonNet(spec)(torch.rand(2, 32, 32))
        with self.assertRaises(ShapeMismatchError):
            Lifter(spec)(torch.randn(4, 17, 2))
        with self.assertRaises(ConfigurationError):
            NetworkSpec(joint_count=9, height=24, width=24)


class TrainStepTests(SimpleTestCase):
    def setUp(self):
        self.data = training_data()

    def test_breakdown_schema(self):
        state = fresh_state(self.data)
        outcome = train_step(state, self.data.images[:4], self.data.prior[:4])
        self.assertEqual(set(outcome.losses), set(TERMS))
        self.assertEqual(state.step, 1)
        self.assertTrue(all(math.isfinite(value) for value in outcome.losses.values()))
        record = outcome.record(state.step)
        self.assertEqual(set(record), set(TERMS) | {'step', 'total', 'discriminator_objective', 'validation_p_mpjpe'})

    def test_gradients_reach_every_network(self):
        state = fresh_state(self.data)
        train_step(state, self.data.images[:4], self.data.prior[:4])
        for name in ('skeleton_net', 'joint_net', 'lifter'):
            module = getattr(state.pipeline, name)
            for parameter_name, parameter in module.named_parameters():
                self.assertIsNotNone(parameter.grad, f'{name}.{parameter_name}')
                self.assertTrue((parameter.grad != 0).any(), f'{name}.{parameter_name}')

    def test_identical_runs_from_checkpoint(self):
        state = fresh_state(self.data)
        train_step(state, self.data.images[:4], self.data.prior[:4])
        with tempfile.TemporaryDirectory() as tmp:
            path = save_checkpoint(Path(tmp) / 'state.pt', state)
            runs = []
            for _ in range(2):
                restored = load_checkpoint(path)
                runs.append(train_step(restored, self.data.images[4:8], self.data.prior[4:8],
                                       torch.Generator().manual_seed(9)))
        self.assertEqual(runs[0], runs[1])

    def test_small_batch(self):
        with self.assertRaises(PairingError):
            train_step(fresh_state(self.data), self.data.images[:1], self.data.prior[:1])


class CheckpointTests(SimpleTestCase):
    def setUp(self):
        self.data = training_data()
        self.state = fresh_state(self.data)
        train_step(self.state, self.data.images[:4], self.data.prior[:4])

    def test_roundtrip_is_bitwise(self):
        before = predict(self.state, self.data.validation.images)
        with tempfile.TemporaryDirectory() as tmp:
            restored = load_checkpoint(save_checkpoint(Path(tmp) / 'state.pt', self.state))
        after = predict(restored, self.data.validation.images)
        self.assertTrue(torch.equal(before.pose3d, after.pose3d))
        self.assertTrue(torch.equal(before.skeletons, after.skeletons))
        self.assertEqual(restored.step, 1)
        self.assertEqual(parameter_checksum(restored.flow.prior), parameter_checksum(self.state.flow.prior))

    def test_truncated(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = save_checkpoint(Path(tmp) / 'state.pt', self.state)
            path.write_bytes(path.read_bytes()[:-100])
            with self.assertRaises(CorruptCheckpointError):
                load_checkpoint(path)

    def test_other_topology(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = save_checkpoint(Path(tmp) / 'state.pt', self.state)
            with self.assertRaises(VersionError) as caught:
                load_checkpoint(path, HUMANOID_17)
        self.assertIn('humanoid-9', str(caught.exception))
        self.assertIn('humanoid-17', str(caught.exception))


class PredictTests(SimpleTestCase):
    def setUp(self):
        self.data = training_data()
        self.state = fresh_state(self.data)

    def test_test_time_pipeline(self):
        with mock.patch.object(Discriminator, 'forward', side_effect=AssertionError) as discriminator, \
                mock.patch.object(FlowPrior, 'forward', side_effect=AssertionError) as flow:
            prediction = predict(self.state, self.data.validation.images)
        self.assertEqual(discriminator.call_count, 0)
        self.assertEqual(flow.call_count, 0)
        self.assertEqual(prediction.pose3d.shape, (6, 9, 3))
        self.assertTrue((prediction.pose3d[..., 2] > 1).all())

    def test_deterministic(self):
        first = predict(self.state, self.data.validation.images[0])
        second = predict(self.state, self.data.validation.images[0])
        self.assertEqual(first.pose2d.shape, (9, 2))
        self.assertTrue(torch.equal(first.pose3d, second.pose3d))


class FitTests(SimpleTestCase):
    def setUp(self):
        self.data = training_data()

    def test_smoke_and_resume(self):
        state = fresh_state(self.data)
        checksum = parameter_checksum(state.flow.prior)
        with tempfile.TemporaryDirectory() as tmp:
            tmp = Path(tmp)
            metrics = tmp / 'metrics.jsonl'
            result = fit(state, self.data, metrics_path=metrics, checkpoint_dir=tmp / 'checkpoints')
            self.assertEqual(state.step, 3)
            self.assertIsNotNone(result.initial_p_mpjpe)
            for name in ('step-000002.pt', 'step-000003.pt', 'last.pt', 'best.pt'):
                self.assertTrue((tmp / 'checkpoints' / name).exists(), name)

            resumed = load_checkpoint(tmp / 'checkpoints' / 'last.pt')
            self.assertEqual(resumed.step, 3)
            fit(resumed, self.data, steps=2, metrics_path=metrics)

            records = [json.loads(line) for line in metrics.read_text().splitlines()]
        self.assertEqual([record['step'] for record in records], [1, 2, 3, 4, 5])
        keys = set(TERMS) | {'step', 'total', 'discriminator_objective', 'validation_p_mpjpe'}
        self.assertTrue(all(set(record) == keys for record in records))
        self.assertEqual(parameter_checksum(state.flow.prior), checksum)
        self.assertEqual(state.best['p_mpjpe'], min(record['validation_p_mpjpe'] for record in records[:3]))

    def test_every_seed_completes(self):
        for seed in range(6):
            state = fresh_state(self.data, seed)
            result = fit(state, self.data)
            self.assertEqual(state.step, 3, f'seed {seed}')
            self.assertTrue(all(math.isfinite(record['total']) for record in result.history), f'seed {seed}')
            self.assertTrue(bool((predict(state, self.data.validation.images).pose3d[..., 2] > 1).all()))

    def test_resume_returns_best_of_its_own_steps(self):
        state = fresh_state(self.data, seed=5)
        fit(state, self.data)
        state.best = {'step': 1, 'p_mpjpe': 0.0}

        result = fit(state, self.data, steps=3)
        validations = [record['validation_p_mpjpe'] for record in result.history]
        self.assertEqual(state.best['p_mpjpe'], min(validations))
        self.assertIn(state.best['step'], (4, 5, 6))
        self.assertEqual(evaluate_state(state, self.data.validation).p_mpjpe, state.best['p_mpjpe'])

    def test_trend_check(self):
        passing = {'full': 90.0, 'full-minus-bone': 95.0, 'adversarial+omega+base': 110.0, 'adversarial+omega': 130.0}
        self.assertTrue(trend_check(passing)['passed'])
        self.assertFalse(trend_check({**passing, 'full': 94.0})['passed'])
        self.assertFalse(trend_check({**passing, 'full-minus-bone': 120.0})['ordered'])


class GuardedSplit(LabelledSplit):
    """A labelled split whose 3D poses can only be read while ``readable`` is set."""

    def __init__(self, split):
        self.readable = False
        self.reads = 0
        super().__init__(split.ids, split.images, split.pose2d, split.pose3d)

    @property
    def pose3d(self):
        if not self.readable:
            raise AssertionError('3D poses read outside evaluation')
        self.reads += 1
        return self._pose3d

    @pose3d.setter
    def pose3d(self, value):
        self._pose3d = value


class SupervisionTests(SimpleTestCase):
    def setUp(self):
        self.data = training_data()
        self.data.validation = GuardedSplit(self.data.validation)

    def test_training_step_never_reads_3d_poses(self):
        state = fresh_state(self.data)
        images, prior = sample_batch(self.data, 4, torch.Generator().manual_seed(0))
        train_step(state, images, prior)
        self.assertEqual(self.data.validation.reads, 0)

    def test_fit_reads_3d_poses_only_to_evaluate(self):
        split = self.data.validation
        evaluate = trainer.evaluate_state

        def evaluate_openly(state, labelled, *args, **kwargs):
            labelled.readable = True
            try:
                return evaluate(state, labelled, *args, **kwargs)
            finally:
                labelled.readable = False

        with mock.patch.object(trainer, 'evaluate_state', side_effect=evaluate_openly) as evaluated:
            fit(fresh_state(self.data), self.data)
        self.assertEqual(evaluated.call_count, 4)
        self.assertEqual(split.reads, evaluated.call_count)


class PipelineCommandTests(SimpleTestCase):
    """synth_gen, pretrain_flow, train, eval, lift and plot chained on a tiny world."""

    def run_command(self, name, **options):
        out = io.StringIO()
        call_command(name, stdout=out, **options)
        return out.getvalue()

    def test_full_pipeline(self):
        with tempfile.TemporaryDirectory() as tmp:
            tmp = Path(tmp)
            data, flow, run = tmp / 'data', tmp / 'flow', tmp / 'run'
            self.run_command('synth_gen', out=str(data), seed=7, train=8, prior=40, val=0, test=4,
                             height=16, width=16)
            self.run_command('pretrain_flow', prior=str(data), out=str(flow), components=4, epochs=1,
                             layers=2, hidden=8)
            self.run_command('train', data=str(data), flow=str(flow / 'flow.pt'), out=str(run), steps=2,
                             batch_size=4, eval_every=1, checkpoint_every=1, eval_batch_size=4,
                             lifter_width=16, lifter_blocks=1)
            self.assertTrue((run / 'resolved_config.json').exists())

            evaluated = tmp / 'eval'
            output = self.run_command('eval', checkpoint=str(run / 'checkpoints' / 'step-000002.pt'),
                                      data=str(data), out=str(evaluated), figures=1)
            self.assertIn('P-MPJPE', output)
            report = json.loads((evaluated / 'eval_report.json').read_text())
            logged = [json.loads(line) for line in (run / 'metrics.jsonl').read_text().splitlines()]
            self.assertAlmostEqual(report['p_mpjpe'], logged[1]['validation_p_mpjpe'], delta=1e-9)
            self.assertTrue(0 <= report['pck'] <= 100)
            self.assertTrue((evaluated / 'figures' / 'test-000000.png').exists())

            lifted = tmp / 'lift'
            self.run_command('lift', checkpoint=str(run / 'checkpoints' / 'last.pt'),
                             image=str(data / 'test' / 'images' / 'test-000000.png'), out=str(lifted), figure=True)
            pose = json.loads((lifted / 'lift.json').read_text())
            self.assertEqual(len(pose['p2d']), 9)
            self.assertEqual(len(pose['p3d'][0]), 3)
            self.assertGreater((lifted / 'lift.png').stat().st_size, 0)

            plots = tmp / 'plots'
            self.run_command('plot', metrics=str(run / 'metrics.jsonl'), out=str(plots))
            self.assertEqual(len(list(plots.glob('*.png'))), len(TERMS) + 1)

    def test_ablation_run(self):
        with tempfile.TemporaryDirectory() as tmp:
            tmp = Path(tmp)
            data, flow, out = tmp / 'data', tmp / 'flow', tmp / 'ablation'
            self.run_command('synth_gen', out=str(data), seed=3, train=8, prior=40, val=0, test=4,
                             height=16, width=16)
            self.run_command('pretrain_flow', prior=str(data), out=str(flow), components=4, epochs=1,
                             layers=2, hidden=8)
            with mock.patch.object(ablation, 'build_state', wraps=ablation.build_state) as built:
                output = self.run_command('ablate', data=str(data), flow=str(flow / 'flow.pt'), out=str(out),
                                          steps=1, batch_size=4, eval_every=1, checkpoint_every=1,
                                          eval_batch_size=4, lifter_width=16, lifter_blocks=1, seeds=[4],
                                          configurations=['adversarial+omega', 'full'])
            summary = json.loads((out / 'ablation.json').read_text())
            self.assertTrue((out / 'metrics' / 'full-seed4.jsonl').exists())

        self.assertIn('Trend check', output)
        self.assertEqual(set(summary), {'configurations', 'trend'})
        self.assertEqual(set(summary['configurations']), {'adversarial+omega', 'full'})
        for entry in summary['configurations'].values():
            self.assertEqual(set(entry['seeds']), {'4'})
            self.assertEqual(entry['mean_p_mpjpe'], entry['seeds']['4'])
        self.assertEqual(set(summary['trend']), {'ordered', 'full_margin', 'passed'})

        reduced, full = (call.args[3] for call in built.call_args_list)
        self.assertEqual((reduced.base, reduced.flow_nll, reduced.bone_length), (0.0, 0.0, 0.0))
        self.assertGreater(reduced.adversarial, 0.0)
        self.assertGreater(reduced.omega, 0.0)
        self.assertEqual((full.base, full.flow_nll, full.bone_length), (1.0, 1.0, 1.0))
