"""Pose metrics after similarity Procrustes alignment: P-MPJPE, PCK and AUC.

Poses are arrays (n, J, 3); a prediction is aligned to its target by the rotation,
translation and uniform scale that minimise the summed squared joint distances.
Reflections are excluded.
"""
from dataclasses import asdict, dataclass, field

import numpy as np
from django.conf import settings

from skeletons.exceptions import DegenerateTargetError, DomainError, EmptyErrorsError, LengthMismatchError


@dataclass(frozen=True)
class Alignment:
    aligned: np.ndarray
    rotation: np.ndarray
    scale: np.ndarray
    translation: np.ndarray
    residual: np.ndarray


@dataclass
class EvalReport:
    p_mpjpe: float
    pck: float
    auc: float
    per_sample: list = field(default_factory=list)
    threshold: float = 150.0
    unit_scale: float = 1.0
    count: int = 0

    def to_dict(self):
        return asdict(self)


def _as_batch(poses):
    poses = np.asarray(poses, dtype=np.float64)
    return poses[None] if poses.ndim == 2 else poses


def procrustes_align(predicted, target):
    """Align ``predicted`` onto ``target`` as ``scale * predicted @ rotation + translation``."""
    single = np.ndim(predicted) == 2
    predicted, target = _as_batch(predicted), _as_batch(target)
    if predicted.shape != target.shape:
        raise LengthMismatchError(f'predicted poses {predicted.shape} do not match targets {target.shape}')

    mu_target = target.mean(axis=1, keepdims=True)
    mu_predicted = predicted.mean(axis=1, keepdims=True)
    target0 = target - mu_target
    predicted0 = predicted - mu_predicted

    norm_target = np.sqrt((target0 ** 2).sum(axis=(1, 2), keepdims=True))
    norm_predicted = np.sqrt((predicted0 ** 2).sum(axis=(1, 2), keepdims=True))
    if (norm_target <= 1e-12).any():
        raise DegenerateTargetError('target pose has zero spread; alignment is undefined')
    flat = norm_predicted <= 1e-12
    norm_predicted = np.where(flat, 1.0, norm_predicted)

    target0 = target0 / norm_target
    predicted0 = predicted0 / norm_predicted

    h = np.matmul(target0.transpose(0, 2, 1), predicted0)
    u, s, vt = np.linalg.svd(h)
    v = vt.transpose(0, 2, 1)
    rotation = np.matmul(v, u.transpose(0, 2, 1))

    # No reflections
    sign = np.sign(np.linalg.det(rotation))
    sign = np.where(sign == 0, 1.0, sign)
    v[:, :, -1] *= sign[:, None]
    s[:, -1] *= sign
    rotation = np.matmul(v, u.transpose(0, 2, 1))

    trace = s.sum(axis=1)[:, None, None]
    scale = np.where(flat, 0.0, trace * norm_target / norm_predicted)
    translation = mu_target - scale * np.matmul(mu_predicted, rotation)
    aligned = scale * np.matmul(predicted, rotation) + translation
    residual = ((aligned - target) ** 2).sum(axis=(1, 2))

    result = Alignment(aligned, rotation, scale[:, 0, 0], translation[:, 0], residual)
    if single:
        return Alignment(*(getattr(result, name)[0] for name in ('aligned', 'rotation', 'scale', 'translation', 'residual')))
    return result


def joint_errors(predicted, target, align=True):
    """Per-joint Euclidean distances (n, J), after alignment by default."""
    predicted, target = _as_batch(predicted), _as_batch(target)
    if len(predicted) != len(target):
        raise LengthMismatchError(f'{len(predicted)} predictions for {len(target)} targets')
    if align:
        predicted = procrustes_align(predicted, target).aligned
    return np.linalg.norm(predicted - target, axis=-1)


def p_mpjpe(predicted, target):
    return float(joint_errors(predicted, target).mean())


def pck_auc(errors, threshold=None, steps=None):
    """PCK at ``threshold`` and the area under the PCK curve on [0, threshold], both in percent.

    A joint counts as correct when its error is at most the threshold.
    """
    threshold = getattr(settings, 'EVAL_PCK_THRESHOLD', 150.0) if threshold is None else threshold
    steps = getattr(settings, 'EVAL_AUC_STEPS', 31) if steps is None else steps
    errors = np.asarray(errors, dtype=np.float64).reshape(-1)
    if errors.size == 0:
        raise EmptyErrorsError('PCK needs at least one joint error')
    if (errors < 0).any() or not np.isfinite(errors).all():
        raise DomainError('joint errors must be finite and non-negative')

    pck = 100.0 * float((errors <= threshold).mean())
    curve = [(errors <= limit).mean() for limit in np.linspace(0.0, threshold, steps)]
    return pck, 100.0 * float(np.mean(curve))


def evaluate_predictions(predicted, target, unit_scale=None, threshold=None, steps=None):
    """Aligned errors in reporting units (synthetic units times ``unit_scale``)."""
    unit_scale = getattr(settings, 'EVAL_UNIT_SCALE', 500.0) if unit_scale is None else unit_scale
    threshold = getattr(settings, 'EVAL_PCK_THRESHOLD', 150.0) if threshold is None else threshold
    if len(_as_batch(predicted)) == 0:
        raise EmptyErrorsError('no poses to evaluate')
    errors = joint_errors(predicted, target) * unit_scale
    pck, auc = pck_auc(errors, threshold, steps)
    return EvalReport(
        p_mpjpe=float(errors.mean()),
        pck=pck,
        auc=auc,
        per_sample=[float(value) for value in errors.mean(axis=1)],
        threshold=float(threshold),
        unit_scale=float(unit_scale),
        count=int(errors.shape[0]),
    )


def mean_pose_baseline(target, unit_scale=None, threshold=None, steps=None):
    """Report for a predictor that answers every sample with the same mean (centroid-centred) pose."""
    target = _as_batch(target)
    if len(target) == 0:
        raise EmptyErrorsError('no poses to evaluate')
    centered = target - target.mean(axis=1, keepdims=True)
    predicted = np.broadcast_to(centered.mean(axis=0), target.shape)
    return evaluate_predictions(predicted, target, unit_scale, threshold, steps)
