import io
import json
import math
import tempfile
from pathlib import Path

import torch
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase

from skeletons.codec import PoseRecord, write_poses
from skeletons.exceptions import RankError, VersionError
from skeletons.storage import write_checksummed
from skeletons.topology import HUMANOID_9, normalize_pose2d

from .flow import (
    FlowBundle,
    FlowConfig,
    build_flow_prior,
    load_flow_checkpoint,
    log_density,
    nll_loss,
    parameter_checksum,
    pretrain_flow,
    sample_poses,
    save_flow_checkpoint,
)
from .pca import flatten_poses, pca_fit, pca_project, pca_reconstruct

TEMPLATE = torch.tensor(
    [[0.0, 0.0], [0.0, 1.0], [0.0, 1.5], [-0.6, 0.8], [-1.0, 0.4],
     [0.6, 0.8], [1.0, 0.4], [-0.3, -1.8], [0.3, -1.8]],
    dtype=torch.float64,
)


def toy_poses(count, seed):
    """Humanoid-9 poses with two bimodal and two uniform modes of variation."""
    directions = 0.3 * torch.randn(4, 9, 2, generator=torch.Generator().manual_seed(0), dtype=torch.float64)
    generator = torch.Generator().manual_seed(seed)
    modes = torch.randint(0, 2, (count, 2), generator=generator).to(torch.float64) * 2 - 1
    bimodal = modes + 0.15 * torch.randn(count, 2, generator=generator, dtype=torch.float64)
    uniform = 2 * torch.rand(count, 2, generator=generator, dtype=torch.float64) - 1
    coefficients = torch.cat([bimodal, uniform], dim=1)
    noise = 0.02 * torch.randn(count, 9, 2, generator=generator, dtype=torch.float64)
    return TEMPLATE + torch.einsum('nk,kjd->njd', coefficients, directions) + noise


def perturb(module, scale, seed):
    generator = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for parameter in module.parameters():
            parameter.add_(scale * torch.randn(parameter.shape, generator=generator, dtype=parameter.dtype))
    return module


class PcaTests(SimpleTestCase):
    def setUp(self):
        self.generator = torch.Generator().manual_seed(0)

    def test_lossless_in_subspace(self):
        basis = torch.linalg.qr(torch.randn(18, 5, generator=self.generator, dtype=torch.float64))[0].T
        data = torch.randn(200, 5, generator=self.generator, dtype=torch.float64) @ basis + 3.0
        pca = pca_fit(data, 5)
        error = (pca_reconstruct(pca, pca_project(pca, data)) - data).abs().max().item()
        self.assertLess(error, 1e-8)

    def test_full_basis_is_exact(self):
        data = torch.randn(100, 18, generator=self.generator, dtype=torch.float64)
        pca = pca_fit(data, 18)
        torch.testing.assert_close(pca_reconstruct(pca, pca_project(pca, data)), data, atol=1e-9, rtol=0)
        torch.testing.assert_close(pca.basis @ pca.basis.T, torch.eye(18, dtype=torch.float64), atol=1e-8, rtol=0)

    def test_truncation_error_equals_discarded_variance(self):
        scales = torch.linspace(2.0, 0.1, 12, dtype=torch.float64)
        data = torch.randn(4000, 12, generator=self.generator, dtype=torch.float64) * scales
        complete = pca_fit(data, 12)
        pca = pca_fit(data, 7)
        residual = ((pca_reconstruct(pca, pca_project(pca, data)) - data) ** 2).sum(-1).mean().item()
        self.assertAlmostEqual(residual, complete.eigenvalues[7:].sum().item(), delta=1e-6)

    def test_whitened_coordinates_have_unit_variance(self):
        data = torch.randn(5000, 6, generator=self.generator, dtype=torch.float64) * torch.tensor([3.0, 2.0, 1.0, 0.5, 0.2, 0.1])
        coordinates = pca_project(pca_fit(data, 4), data)
        torch.testing.assert_close(coordinates.var(dim=0, correction=0), torch.ones(4, dtype=torch.float64), atol=1e-9, rtol=0)

    def test_rank_errors(self):
        with self.assertRaises(RankError):
            pca_fit(torch.randn(3, 18, generator=self.generator), 5)
        flat = torch.randn(50, 2, generator=self.generator, dtype=torch.float64) @ torch.randn(2, 10, generator=self.generator, dtype=torch.float64)
        with self.assertRaises(RankError):
            pca_fit(flat, 4)
        with self.assertRaises(RankError):
            pca_fit(flat, 11)


class FlowTests(SimpleTestCase):
    def test_fresh_flow_is_identity(self):
        prior = build_flow_prior(FlowConfig(dimension=6), seed=0)
        x = torch.randn(32, 6)
        z, log_det = prior(x)
        torch.testing.assert_close(z, x)
        self.assertEqual(log_det.abs().max().item(), 0.0)

    def test_standard_normal_at_origin(self):
        prior = build_flow_prior(FlowConfig(dimension=16), seed=0).double()
        value = prior.log_prob(torch.zeros(1, 16, dtype=torch.float64)).item()
        self.assertAlmostEqual(value, -8.0 * math.log(2.0 * math.pi), places=9)
        self.assertAlmostEqual(value, -14.7030, places=3)

    def test_density_decreases_with_radius(self):
        prior = build_flow_prior(FlowConfig(dimension=16), seed=0)
        direction = torch.nn.functional.normalize(torch.randn(16), dim=0)
        values = prior.log_prob(torch.linspace(0.0, 5.0, 20)[:, None] * direction)
        self.assertTrue(bool((values[1:] < values[:-1]).all()))

    def test_inverse_undoes_forward(self):
        prior = perturb(build_flow_prior(FlowConfig(dimension=10), seed=1).double(), 0.2, seed=2)
        x = torch.randn(1024, 10, generator=torch.Generator().manual_seed(3), dtype=torch.float64)
        z, log_det = prior(x)
        back, inverse_log_det = prior.inverse(z)
        self.assertLess((back - x).abs().max().item(), 1e-5)
        torch.testing.assert_close(inverse_log_det, -log_det)

    def test_log_det_matches_numerical_jacobian(self):
        prior = perturb(build_flow_prior(FlowConfig(dimension=2), seed=4).double(), 0.3, seed=5)
        for point in torch.randn(5, 2, generator=torch.Generator().manual_seed(6), dtype=torch.float64):
            jacobian = torch.autograd.functional.jacobian(lambda v: prior(v[None])[0][0], point)
            expected = torch.linalg.slogdet(jacobian).logabsdet.item()
            analytic = prior(point[None])[1].item()
            self.assertLess(abs(analytic - expected), 1e-4 * max(1.0, abs(expected)))

    def test_trained_toy_density_integrates_to_one(self):
        prior = build_flow_prior(FlowConfig(dimension=2), seed=7).double()
        generator = torch.Generator().manual_seed(8)
        mix = torch.tensor([[1.0, 0.0], [0.6, 0.5]], dtype=torch.float64)
        optimizer = torch.optim.Adam(prior.parameters(), lr=5e-3)
        for _ in range(150):
            batch = torch.randn(256, 2, generator=generator, dtype=torch.float64) @ mix
            batch[:, 1] = batch[:, 1] + 0.3 * batch[:, 0] ** 2 - 0.3
            loss = -prior.log_prob(batch).mean()
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()

        step = 0.04
        axis = torch.arange(-6.0, 6.0 + step / 2, step, dtype=torch.float64)
        grid = torch.stack(torch.meshgrid(axis, axis, indexing='ij'), dim=-1).reshape(-1, 2)
        with torch.no_grad():
            mass = prior.log_prob(grid).exp().sum().item() * step * step
        self.assertAlmostEqual(mass, 1.0, delta=1e-2)

    def test_nll_of_repeated_pose(self):
        poses = toy_poses(300, seed=1)
        pca = pca_fit(flatten_poses(normalize_pose2d(poses, HUMANOID_9)), 10)
        prior = build_flow_prior(FlowConfig(dimension=10), seed=0)
        single = nll_loss(prior, pca, poses[:1], HUMANOID_9).item()
        repeated = nll_loss(prior, pca, poses[:1].expand(7, 9, 2), HUMANOID_9).item()
        self.assertAlmostEqual(single, repeated, places=5)
        self.assertAlmostEqual(single, -log_density(prior, pca, poses[0], HUMANOID_9).item(), places=5)


class PretrainTests(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        poses = toy_poses(1200, seed=10)
        cls.training, cls.holdout = poses[:1000], poses[1000:]
        cls.pca = pca_fit(flatten_poses(normalize_pose2d(cls.training, HUMANOID_9)), 10)

    def pretrain(self, seed=0, epochs=15):
        prior = build_flow_prior(FlowConfig(dimension=10), seed=seed)
        return pretrain_flow(
            prior, self.pca, self.training, HUMANOID_9, epochs=epochs,
            generator=torch.Generator().manual_seed(seed), batch_size=100, learning_rate=3e-3, holdout=self.holdout,
        )

    def test_pretraining_beats_identity_flow(self):
        untrained = nll_loss(build_flow_prior(FlowConfig(dimension=10), seed=0), self.pca, self.holdout, HUMANOID_9).item()
        prior, history = self.pretrain()
        self.assertLess(history[-1]['train_nll'], history[0]['train_nll'])
        self.assertLess(nll_loss(prior, self.pca, self.holdout, HUMANOID_9).item(), untrained)
        self.assertTrue(all(not parameter.requires_grad for parameter in prior.parameters()))

    def test_pretraining_is_reproducible(self):
        first, _ = self.pretrain(seed=3, epochs=2)
        second, _ = self.pretrain(seed=3, epochs=2)
        self.assertEqual(parameter_checksum(first), parameter_checksum(second))

    def test_scrambled_poses_are_less_likely(self):
        prior, _ = self.pretrain(epochs=10)
        generator = torch.Generator().manual_seed(12)
        genuine = self.holdout[:200]
        scrambled = torch.stack([pose[torch.randperm(9, generator=generator)] for pose in genuine])
        with torch.no_grad():
            self.assertGreater(
                nll_loss(prior, self.pca, scrambled, HUMANOID_9).item(),
                nll_loss(prior, self.pca, genuine, HUMANOID_9).item(),
            )

    def test_checkpoint_roundtrip(self):
        prior, history = self.pretrain(epochs=1)
        with tempfile.TemporaryDirectory() as tmp:
            path = save_flow_checkpoint(Path(tmp) / 'flow.pt', FlowBundle(prior, self.pca, HUMANOID_9, history))
            bundle = load_flow_checkpoint(path)

            write_checksummed(Path(tmp) / 'other.pt', {'format': 'poselift-train', 'version': 1})
            with self.assertRaises(VersionError):
                load_flow_checkpoint(Path(tmp) / 'other.pt')

        self.assertEqual(parameter_checksum(bundle.prior), parameter_checksum(prior))
        self.assertEqual(bundle.topology, HUMANOID_9)
        self.assertEqual(len(bundle.history), 1)
        torch.testing.assert_close(
            log_density(bundle.prior, bundle.pca, self.holdout, HUMANOID_9),
            log_density(prior, self.pca, self.holdout, HUMANOID_9),
        )
        samples = sample_poses(bundle.prior, bundle.pca, 5, HUMANOID_9, torch.Generator().manual_seed(0))
        self.assertEqual(tuple(samples.shape), (5, 9, 2))


class PretrainCommandTests(SimpleTestCase):
    def write_prior(self, directory, count):
        records = [
            PoseRecord(id=f'prior-{k:06d}', topology='humanoid-9', p2d=pose.numpy())
            for k, pose in enumerate(toy_poses(count, seed=20))
        ]
        return write_poses(Path(directory) / 'prior' / 'poses.jsonl', records)

    def test_writes_reloadable_checkpoint(self):
        with tempfile.TemporaryDirectory() as tmp:
            self.write_prior(tmp, 200)
            out = Path(tmp) / 'flow'
            stdout = io.StringIO()
            call_command('pretrain_flow', prior=tmp, out=str(out), epochs=2, batch_size=50, seed=5, stdout=stdout)
            bundle = load_flow_checkpoint(out / 'flow.pt')
            curve = [json.loads(line) for line in (out / 'nll_curve.jsonl').read_text().splitlines()]
            resolved = json.loads((out / 'resolved_config.json').read_text())

        self.assertEqual(bundle.pca.dimension, 10)
        self.assertEqual(len(curve), 2)
        self.assertTrue(math.isfinite(curve[-1]['holdout_nll']))
        self.assertEqual(resolved['components'], 10)
        self.assertIn('held-out NLL', stdout.getvalue())

    def test_rerun_is_identical(self):
        with tempfile.TemporaryDirectory() as tmp:
            self.write_prior(tmp, 120)
            checksums = []
            for run in ('a', 'b'):
                call_command('pretrain_flow', prior=tmp, out=str(Path(tmp) / run), epochs=1, seed=9, stdout=io.StringIO())
                checksums.append(parameter_checksum(load_flow_checkpoint(Path(tmp) / run / 'flow.pt').prior))
        self.assertEqual(checksums[0], checksums[1])

    def test_too_few_prior_poses(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = self.write_prior(tmp, 6)
            with self.assertRaises(CommandError) as raised:
                call_command('pretrain_flow', prior=str(path), out=str(Path(tmp) / 'flow'), stdout=io.StringIO())
        self.assertEqual(raised.exception.returncode, 4)

    def test_invalid_learning_rate(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = self.write_prior(tmp, 50)
            with self.assertRaises(CommandError) as raised:
                call_command('pretrain_flow', prior=str(path), out=tmp, learning_rate=-1.0, stdout=io.StringIO())
        self.assertEqual(raised.exception.returncode, 2)
