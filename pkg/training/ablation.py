"""Loss-term ablations: the same training run with groups of terms switched off."""
import logging
from dataclasses import replace

from .state import build_state
from .trainer import evaluate_state, fit

logger = logging.getLogger(__name__)

ABLATIONS = {
    'adversarial+omega': {'base': 0.0, 'flow_nll': 0.0, 'bone_length': 0.0},
    'adversarial+omega+base': {'flow_nll': 0.0, 'bone_length': 0.0},
    'full-minus-bone': {'bone_length': 0.0},
    'full': {},
}
TREND = ('full', 'full-minus-bone', 'adversarial+omega+base')
MIN_MARGIN = 0.03


def trend_check(means):
    """Whether the full objective is best and removing terms never helps, as far as ``means`` covers."""
    present = [name for name in TREND if name in means]
    ordered = all(means[a] <= means[b] for a, b in zip(present, present[1:]))
    others = [value for name, value in means.items() if name != 'full']
    margin = None
    if 'full' in means and others:
        runner_up = min(others)
        margin = (runner_up - means['full']) / runner_up if runner_up > 0 else 0.0
    return {
        'ordered': ordered,
        'full_margin': margin,
        'passed': ordered and margin is not None and margin >= MIN_MARGIN,
    }


def run_ablation(data, test, topology, renderer, flow, config, weights, names, seeds, metrics_dir=None):
    """Train every named configuration once per seed; return per-seed and mean test P-MPJPE."""
    results = {}
    for name in names:
        overrides = ABLATIONS[name]
        scores = {}
        for seed in seeds:
            state = build_state(replace(config, seed=seed), topology, renderer, replace(weights, **overrides), flow)
            metrics_path = None if metrics_dir is None else metrics_dir / f'{name}-seed{seed}.jsonl'
            fit(state, data, metrics_path=metrics_path)
            scores[str(seed)] = evaluate_state(state, test).p_mpjpe
            logger.info('%s seed %d: test P-MPJPE %.3f', name, seed, scores[str(seed)])
        results[name] = {'seeds': scores, 'mean_p_mpjpe': sum(scores.values()) / len(scores)}

    means = {name: entry['mean_p_mpjpe'] for name, entry in results.items()}
    return {'configurations': results, 'trend': trend_check(means)}
