"""Policy-gradient training of the search agent.

The gradient estimator is the plain likelihood-ratio form: each sampled
episode contributes the sum of its per-step score functions weighted by
the episode's full return, averaged over a batch of rollouts, minus the
L2 penalty gradient.  Forced terminations are probability-one branches
and contribute no score term.

For verification, tiny instances (at most 4 regions, at most 2 saccades)
admit an exact computation of the expected return and its gradient: a
saccade landing point only matters through the set of regions containing
it, so the plane decomposes into finitely many axis-aligned cells with
Gaussian-CDF probabilities, and the episode tree can be enumerated
exactly.  ``fd_check`` compares that analytic gradient against central
finite differences of the exact objective.

The trainer runs several random restarts of stochastic gradient ascent
with a decaying step size and picks the restart with the best validation
reward.  Validation rollouts reuse fixed per-image random streams so
scores are comparable across iterations and restarts.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.special import ndtr

from .agent import (
    AgentState,
    Episode,
    PolicyParams,
    Saccade,
    Terminate,
    evidence_distribution,
    gaussian_log_density,
    location_mean,
    location_sigma,
    reward,
    rollout,
    termination_features,
    termination_prob,
)
from .dataset import Region, SyntheticImage

__all__ = [
    "TrainConfig",
    "GradientEstimate",
    "IterationLog",
    "RestartResult",
    "TrainResult",
    "EnumerableInstance",
    "episode_log_prob",
    "episode_score_gradient",
    "estimate_gradient",
    "train_policy",
    "exact_objective_and_gradient",
    "fd_check",
]

ConfidenceFn = Callable[[Region], float]

# Seed namespaces so the trainer's independent random streams never collide.
_NS_INIT = 11
_NS_GRAD = 23
_NS_VAL = 47


@dataclass(frozen=True)
class TrainConfig:
    rollouts_per_estimate: int = 64
    l2_penalty: float = 0.0
    saccade_penalty: float = 0.05
    step_size: float = 0.5
    step_decay: float = 0.05
    max_iterations: int = 40
    patience: int = 10
    min_improvement: float = 1e-3
    restarts: int = 8
    t_max: int = 20
    val_repeats: int = 2
    init_scale: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.rollouts_per_estimate < 1:
            raise ValueError("need at least one rollout per gradient estimate")
        if self.l2_penalty < 0:
            raise ValueError("l2_penalty must be non-negative")
        if self.restarts < 1 or self.max_iterations < 1:
            raise ValueError("restarts and max_iterations must be positive")


@dataclass(frozen=True)
class GradientEstimate:
    vector: np.ndarray
    n_rollouts: int
    mean_reward: float
    reward_variance: float


@dataclass(frozen=True)
class IterationLog:
    restart: int
    iteration: int
    train_reward: float
    val_reward: float
    evaluated_fraction: float
    grad_norm: float
    accepted: bool  # validation reward improved over the restart's best


@dataclass(frozen=True)
class RestartResult:
    restart: int
    params: PolicyParams
    val_reward: float
    iterations: int
    diverged: bool


@dataclass(frozen=True)
class TrainResult:
    params: PolicyParams
    chosen_restart: int
    val_reward: float
    restarts: tuple[RestartResult, ...]
    log: tuple[IterationLog, ...]


def _slices(n: int):
    return (
        slice(0, 4),  # stop head
        slice(4, 4 + n),  # evidence head
        slice(4 + n, 4 + 2 * n),  # offset head, x axis
        slice(4 + 2 * n, 4 + 3 * n),  # offset head, y axis
        slice(4 + 3 * n, 4 + 3 * n + 2),  # log sigma
    )


def episode_log_prob(
    episode: Episode,
    params: PolicyParams,
    image: SyntheticImage,
    confidence_fn: ConfidenceFn,
) -> float:
    """Recompute the episode's log probability from its stored states.

    Only sampled factors count; forced steps have probability one.
    """
    regions = {r.id: r for r in image.regions}
    total = 0.0
    for step in episode.steps:
        if step.forced:
            continue
        p_stop = termination_prob(step.state, params, image, confidence_fn)
        if isinstance(step.action, Terminate):
            total += math.log(p_stop)
            continue
        total += math.log1p(-p_stop)
        cands, probs = evidence_distribution(step.state, params, image)
        idx = cands.index(step.action.evidence)
        total += math.log(probs[idx])
        ev = regions[step.action.evidence]
        mean = location_mean(ev, params)
        sigma = location_sigma(params)
        total += gaussian_log_density(np.asarray(step.action.location), mean, sigma)
    return total


def episode_score_gradient(
    episode: Episode,
    params: PolicyParams,
    image: SyntheticImage,
    confidence_fn: ConfidenceFn,
) -> np.ndarray:
    """Sum over steps of the gradient of the sampled factors' log probability."""
    n = params.feature_dim
    if image.regions and image.regions[0].features.shape[0] != n:
        raise ValueError("episode image and policy disagree on feature size")
    s_stop, s_ev, s_ox, s_oy, s_ls = _slices(n)
    grad = np.zeros(params.flat_dim)
    regions = {r.id: r for r in image.regions}
    sigma = location_sigma(params)

    for step in episode.steps:
        if step.forced:
            continue
        v = termination_features(step.state, image, confidence_fn)
        p_stop = termination_prob(step.state, params, image, confidence_fn)
        if isinstance(step.action, Terminate):
            grad[s_stop] += (1.0 - p_stop) * v
            continue
        grad[s_stop] += -p_stop * v

        cands, probs = evidence_distribution(step.state, params, image)
        feats = np.stack([regions[rid].features for rid in cands])
        idx = cands.index(step.action.evidence)
        grad[s_ev] += feats[idx] - probs @ feats

        ev = regions[step.action.evidence]
        mean = location_mean(ev, params)
        z = np.asarray(step.action.location)
        half = np.array([ev.rect.width / 2.0, ev.rect.height / 2.0])
        pull = (z - mean) / (sigma * sigma)
        grad[s_ox] += pull[0] * half[0] * ev.features
        grad[s_oy] += pull[1] * half[1] * ev.features
        grad[s_ls] += ((z - mean) / sigma) ** 2 - 1.0
    return grad


def estimate_gradient(
    images: Sequence[SyntheticImage],
    params: PolicyParams,
    confidence_fn: ConfidenceFn,
    n_rollouts: int,
    l2_penalty: float,
    rng,
    t_max: int = 20,
    saccade_penalty: float = 0.05,
) -> GradientEstimate:
    """Monte-Carlo gradient over rollouts on uniformly drawn images."""
    if not images:
        raise ValueError("empty training set")
    if n_rollouts < 1:
        raise ValueError("need at least one rollout")
    picks = [int(rng.integers(len(images))) for _ in range(n_rollouts)]
    streams = rng.spawn(n_rollouts)
    total = np.zeros(params.flat_dim)
    returns = np.zeros(n_rollouts)
    for k, (pick, stream) in enumerate(zip(picks, streams)):
        image = images[pick]
        episode = rollout(image, params, confidence_fn, stream,
                          t_max=t_max, saccade_penalty=saccade_penalty)
        score = episode_score_gradient(episode, params, image, confidence_fn)
        returns[k] = episode.total_reward
        total += score * returns[k]
    vector = total / n_rollouts - l2_penalty * params.flatten()
    return GradientEstimate(
        vector=vector,
        n_rollouts=n_rollouts,
        mean_reward=float(np.mean(returns)),
        reward_variance=float(np.var(returns)),
    )


def _mean_validation_reward(
    images, params, confidence_fn, config
) -> tuple[float, float]:
    """Mean reward and evaluated fraction under fixed per-image streams."""
    rewards = []
    fractions = []
    for repeat in range(config.val_repeats):
        for image in images:
            stream = np.random.default_rng((config.seed, _NS_VAL, repeat, image.id))
            episode = rollout(image, params, confidence_fn, stream,
                              t_max=config.t_max,
                              saccade_penalty=config.saccade_penalty)
            rewards.append(episode.total_reward)
            fractions.append(episode.evaluated_fraction)
    return float(np.mean(rewards)), float(np.mean(fractions))


def _run_restart(restart, train_images, val_images, confidence_fn, config, n):
    init_rng = np.random.default_rng((config.seed, _NS_INIT, restart))
    params = PolicyParams.initial(n, init_rng, scale=config.init_scale)
    best_params = params
    best_val, fraction = _mean_validation_reward(
        val_images, params, confidence_fn, config
    )
    log = [IterationLog(restart, 0, math.nan, best_val, fraction, math.nan, True)]
    stall = 0
    diverged = False
    iterations = 0
    for it in range(1, config.max_iterations + 1):
        grad_rng = np.random.default_rng((config.seed, _NS_GRAD, restart, it))
        estimate = estimate_gradient(
            train_images, params, confidence_fn,
            config.rollouts_per_estimate, config.l2_penalty, grad_rng,
            t_max=config.t_max, saccade_penalty=config.saccade_penalty,
        )
        step = config.step_size / (1.0 + config.step_decay * (it - 1))
        vec = params.flatten() + step * estimate.vector
        iterations = it
        if not np.all(np.isfinite(vec)):
            diverged = True
            break
        params = PolicyParams.from_flat(vec, n)
        val, fraction = _mean_validation_reward(
            val_images, params, confidence_fn, config
        )
        accepted = val > best_val + config.min_improvement
        log.append(IterationLog(
            restart, it, estimate.mean_reward, val, fraction,
            float(np.linalg.norm(estimate.vector)), accepted,
        ))
        if accepted:
            best_val = val
            best_params = params
            stall = 0
        else:
            stall += 1
            if stall >= config.patience:
                break
    result = RestartResult(
        restart=restart, params=best_params, val_reward=best_val,
        iterations=iterations, diverged=diverged,
    )
    return result, log


def train_policy(
    train_images: Sequence[SyntheticImage],
    val_images: Sequence[SyntheticImage],
    confidence_fn: ConfidenceFn,
    config: TrainConfig,
    jobs: int = 1,
) -> TrainResult:
    """Gradient-ascent training with restarts; best validation reward wins."""
    if not train_images or not val_images:
        raise ValueError("training and validation splits must be non-empty")
    n = train_images[0].regions[0].features.shape[0]
    indices = list(range(config.restarts))
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(
                lambda r: _run_restart(r, train_images, val_images,
                                       confidence_fn, config, n),
                indices,
            ))
    else:
        outcomes = [
            _run_restart(r, train_images, val_images, confidence_fn, config, n)
            for r in indices
        ]
    results = [o[0] for o in outcomes]
    logs = [entry for o in outcomes for entry in o[1]]
    best = max(range(len(results)),
               key=lambda i: (results[i].val_reward, -i))
    return TrainResult(
        params=results[best].params,
        chosen_restart=best,
        val_reward=results[best].val_reward,
        restarts=tuple(results),
        log=tuple(logs),
    )


# ---------------------------------------------------------------------------
# Exact evaluation on tiny instances
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EnumerableInstance:
    """A search problem small enough for exact expectation computations."""

    image: SyntheticImage
    confidence_fn: ConfidenceFn
    t_max: int = 2
    saccade_penalty: float = 0.05
    l2_penalty: float = 0.0

    def __post_init__(self):
        if len(self.image.regions) > 4:
            raise ValueError("exact enumeration supports at most 4 regions")
        if self.t_max > 2:
            raise ValueError("exact enumeration supports at most 2 saccades")


def _cell_grid(image: SyntheticImage):
    """Axis-aligned cells on which the landing-point outcome is constant."""
    xs = sorted({v for r in image.regions for v in (r.rect.x1, r.rect.x2)})
    ys = sorted({v for r in image.regions for v in (r.rect.y1, r.rect.y2)})
    xs = [-math.inf, *xs, math.inf]
    ys = [-math.inf, *ys, math.inf]

    def rep(lo, hi):
        if math.isinf(lo):
            return hi - 1.0
        if math.isinf(hi):
            return lo + 1.0
        return 0.5 * (lo + hi)

    cells = []
    for i in range(len(xs) - 1):
        for j in range(len(ys) - 1):
            px, py = rep(xs[i], xs[i + 1]), rep(ys[j], ys[j + 1])
            outcome = frozenset(
                r.id for r in image.regions if r.rect.contains_point(px, py)
            )
            cells.append(((xs[i], xs[i + 1], ys[j], ys[j + 1]), outcome))
    return cells


def _phi(x: float) -> float:
    if math.isinf(x):
        return 0.0
    return math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)


def _interval_prob_and_grads(lo, hi, mu, sigma):
    """P(lo < X < hi) for X ~ N(mu, sigma^2) with d/dmu and d/dlog(sigma)."""
    a = (lo - mu) / sigma  # ndtr maps -inf/+inf to 0/1 as needed
    b = (hi - mu) / sigma
    p = float(ndtr(b) - ndtr(a))
    phi_a, phi_b = _phi(a), _phi(b)
    d_mu = (phi_a - phi_b) / sigma
    a_term = 0.0 if math.isinf(a) else a * phi_a
    b_term = 0.0 if math.isinf(b) else b * phi_b
    d_log_sigma = a_term - b_term
    return p, d_mu, d_log_sigma


def exact_objective_and_gradient(
    instance: EnumerableInstance, params: PolicyParams
) -> tuple[float, np.ndarray]:
    """Exact expected return and its gradient, including the L2 penalty."""
    image = instance.image
    n = params.feature_dim
    s_stop, s_ev, s_ox, s_oy, s_ls = _slices(n)
    regions = {r.id: r for r in image.regions}
    confidences = {r.id: instance.confidence_fn(r) for r in image.regions}
    cells = _cell_grid(image)
    sigma = location_sigma(params)
    label = image.label
    memo: dict = {}

    def best_confidence(observed):
        return max(confidences[rid] for rid in sorted(observed))

    def value(observed: frozenset, used: frozenset, t: int):
        key = (observed, used, t)
        if key in memo:
            return memo[key]
        term_reward = reward(True, best_confidence(observed), label,
                             instance.saccade_penalty)
        cands = observed - used
        if t >= instance.t_max or not cands:
            res = (term_reward, np.zeros(params.flat_dim))
            memo[key] = res
            return res

        state = AgentState(observed=observed, used=used, t=t)
        conf = lambda region: confidences[region.id]
        v = termination_features(state, image, conf)
        p_stop = termination_prob(state, params, image, conf)

        total_value = p_stop * term_reward
        total_grad = np.zeros(params.flat_dim)
        total_grad[s_stop] += p_stop * (1.0 - p_stop) * v * term_reward

        cand_ids, probs = evidence_distribution(state, params, image)
        feats = np.stack([regions[rid].features for rid in cand_ids])
        mean_feat = probs @ feats

        for idx, evidence_id in enumerate(cand_ids):
            ev = regions[evidence_id]
            q = float(probs[idx])
            mean = location_mean(ev, params)
            half = np.array([ev.rect.width / 2.0, ev.rect.height / 2.0])

            groups: dict[frozenset, list[float]] = {}
            for (x_lo, x_hi, y_lo, y_hi), outcome in cells:
                px, dmu_x, dls_x = _interval_prob_and_grads(
                    x_lo, x_hi, mean[0], sigma[0]
                )
                py, dmu_y, dls_y = _interval_prob_and_grads(
                    y_lo, y_hi, mean[1], sigma[1]
                )
                acc = groups.setdefault(outcome, [0.0, 0.0, 0.0, 0.0, 0.0])
                acc[0] += px * py
                acc[1] += dmu_x * py  # dP/dmu_x
                acc[2] += px * dmu_y  # dP/dmu_y
                acc[3] += dls_x * py  # dP/dlog sigma_x
                acc[4] += px * dls_y  # dP/dlog sigma_y

            for outcome in sorted(groups, key=sorted):
                p_cell, dmu_x, dmu_y, dls_x, dls_y = groups[outcome]
                if p_cell <= 1e-300:
                    continue
                branch_prob = (1.0 - p_stop) * q * p_cell
                child_value, child_grad = value(
                    observed | outcome, used | {evidence_id}, t + 1
                )
                branch_return = -instance.saccade_penalty + child_value

                gamma = np.zeros(params.flat_dim)
                gamma[s_stop] = -p_stop * v
                gamma[s_ev] = feats[idx] - mean_feat
                gamma[s_ox] = (dmu_x / p_cell) * half[0] * ev.features
                gamma[s_oy] = (dmu_y / p_cell) * half[1] * ev.features
                gamma[s_ls] = np.array([dls_x, dls_y]) / p_cell

                total_value += branch_prob * branch_return
                total_grad += branch_prob * (gamma * branch_return + child_grad)

        memo[key] = (total_value, total_grad)
        return memo[key]

    x, y = 0.5, 0.5
    observed0 = frozenset(
        r.id for r in image.regions if r.rect.contains_point(x, y)
    )
    if not observed0:
        raise ValueError("instance image has no region containing the canvas center")
    value0, grad0 = value(observed0, frozenset(), 0)
    theta = params.flatten()
    objective = value0 - 0.5 * instance.l2_penalty * float(theta @ theta)
    gradient = grad0 - instance.l2_penalty * theta
    return float(objective), gradient


def fd_check(
    params: PolicyParams, instance: EnumerableInstance, step: float = 1e-4
) -> float:
    """Max relative error between the analytic gradient and central
    finite differences of the exact objective."""
    _, analytic = exact_objective_and_gradient(instance, params)
    n = params.feature_dim
    flat = params.flatten()
    worst = 0.0
    for k in range(flat.shape[0]):
        bump = np.zeros_like(flat)
        bump[k] = step
        hi, _ = exact_objective_and_gradient(
            instance, PolicyParams.from_flat(flat + bump, n)
        )
        lo, _ = exact_objective_and_gradient(
            instance, PolicyParams.from_flat(flat - bump, n)
        )
        fd = (hi - lo) / (2.0 * step)
        denom = max(abs(analytic[k]), abs(fd))
        if denom > 1e-8:
            worst = max(worst, abs(analytic[k] - fd) / denom)
    return worst
