from dataclasses import dataclass

import torch

from skeletons.exceptions import RankError


@dataclass(frozen=True)
class PcaSubspace:
    """Mean (D,), orthonormal basis rows (K, D) and eigenvalues (K,) of a pose-vector PCA.

    With ``whiten`` the projected coordinates are divided by the square roots of the eigenvalues.
    """
    mean: torch.Tensor
    basis: torch.Tensor
    eigenvalues: torch.Tensor
    whiten: bool = True

    @property
    def dimension(self):
        return self.basis.shape[0]

    @property
    def input_dimension(self):
        return self.basis.shape[1]

    def scales(self, like):
        if not self.whiten:
            return torch.ones_like(self.eigenvalues).to(like)
        return self.eigenvalues.to(like).clamp_min(1e-12).sqrt()

    def to_dict(self):
        return {'mean': self.mean, 'basis': self.basis, 'eigenvalues': self.eigenvalues, 'whiten': self.whiten}

    @classmethod
    def from_dict(cls, data):
        return cls(mean=data['mean'], basis=data['basis'], eigenvalues=data['eigenvalues'], whiten=bool(data['whiten']))


def flatten_poses(poses):
    poses = torch.as_tensor(poses)
    return poses.reshape(*poses.shape[:-2], -1)


def pca_fit(vectors, n_components, whiten=True, rank_tolerance=1e-9):
    """Fit the top ``n_components`` principal directions of vectors (n, D) or poses (n, J, 2)."""
    data = torch.as_tensor(vectors, dtype=torch.float64)
    data = data.reshape(data.shape[0], -1)
    count, dimension = data.shape
    if not 1 <= n_components <= dimension:
        raise RankError(f'cannot keep {n_components} components of {dimension}-dimensional vectors')
    if count < n_components:
        raise RankError(f'{count} samples cannot span {n_components} principal directions')

    mean = data.mean(dim=0)
    centered = data - mean
    covariance = centered.T @ centered / count
    eigenvalues, eigenvectors = torch.linalg.eigh(covariance)
    eigenvalues, eigenvectors = eigenvalues.flip(0), eigenvectors.flip(1)

    largest = eigenvalues[0].clamp_min(1e-300)
    rank = int((eigenvalues > rank_tolerance * largest).sum())
    if rank < n_components:
        raise RankError(f'data has rank {rank}, fewer than the {n_components} requested components')

    return PcaSubspace(
        mean=mean,
        basis=eigenvectors[:, :n_components].T.contiguous(),
        eigenvalues=eigenvalues[:n_components].clamp_min(0.0),
        whiten=whiten,
    )


def pca_project(pca, vectors):
    vectors = torch.as_tensor(vectors)
    if not vectors.is_floating_point():
        vectors = vectors.to(torch.float64)
    coefficients = (vectors - pca.mean.to(vectors)) @ pca.basis.to(vectors).T
    return coefficients / pca.scales(vectors)


def pca_reconstruct(pca, coefficients):
    coefficients = torch.as_tensor(coefficients)
    return (coefficients * pca.scales(coefficients)) @ pca.basis.to(coefficients) + pca.mean.to(coefficients)
