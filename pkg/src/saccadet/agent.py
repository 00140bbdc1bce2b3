"""Saccade-and-fixate search agent.

The agent maintains the set of regions observed so far and the subset
already spent as saccade evidence.  Each step it decides whether to stop
(a sigmoid over four stop features: best confidence so far, step count,
observed fraction, bias), and otherwise picks an evidence region (a
softmax over region features) and a continuous saccade landing point (a
diagonal Gaussian whose mean is an offset from the evidence region's
center, scaled by its half-extent).  Landing at a point reveals every
region containing it.

Stopping returns the highest-confidence observed region as the
detection.  Confidence values are only ever computed for observed
regions; the number of observed regions is the cost currency reported
by the evaluation tooling.

Termination is forced (with no sampled decision, hence probability one)
when the step budget runs out or no unused evidence remains.
"""

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

from .dataset import Region, SyntheticImage

__all__ = [
    "PolicyParams",
    "AgentState",
    "Terminate",
    "Saccade",
    "Step",
    "Episode",
    "CANVAS_CENTER",
    "termination_features",
    "termination_prob",
    "evidence_distribution",
    "location_mean",
    "location_sigma",
    "gaussian_log_density",
    "sample_step",
    "observe",
    "reward",
    "rollout",
    "initial_state",
    "save_policy",
    "load_policy",
]

CANVAS_CENTER = (0.5, 0.5)

ConfidenceFn = Callable[[Region], float]


@dataclass(frozen=True, eq=False)
class PolicyParams:
    """Weights for the stop / evidence / location heads.

    ``offset_weights`` has one row per canvas axis; the location head's
    mean is the evidence region's center plus the per-axis offsets
    (weights dot features) scaled by the region's half-extent.
    ``log_sigma`` holds the log standard deviations of the diagonal
    Gaussian over landing points.
    """

    stop_weights: np.ndarray  # (4,)
    evidence_weights: np.ndarray  # (n,)
    offset_weights: np.ndarray  # (2, n)
    log_sigma: np.ndarray  # (2,)

    def __post_init__(self):
        sw = np.asarray(self.stop_weights, dtype=np.float64)
        ew = np.asarray(self.evidence_weights, dtype=np.float64)
        ow = np.asarray(self.offset_weights, dtype=np.float64)
        ls = np.asarray(self.log_sigma, dtype=np.float64)
        if sw.shape != (4,) or ls.shape != (2,) or ow.ndim != 2 or ow.shape[0] != 2:
            raise ValueError("policy parameter shapes are inconsistent")
        if ow.shape[1] != ew.shape[0]:
            raise ValueError("evidence and offset heads disagree on feature size")
        for arr in (sw, ew, ow, ls):
            if not np.all(np.isfinite(arr)):
                raise ValueError("policy parameters must be finite")
        object.__setattr__(self, "stop_weights", sw)
        object.__setattr__(self, "evidence_weights", ew)
        object.__setattr__(self, "offset_weights", ow)
        object.__setattr__(self, "log_sigma", ls)

    @property
    def feature_dim(self) -> int:
        return self.evidence_weights.shape[0]

    @property
    def flat_dim(self) -> int:
        return 4 + 3 * self.feature_dim + 2

    def flatten(self) -> np.ndarray:
        return np.concatenate(
            [self.stop_weights, self.evidence_weights,
             self.offset_weights[0], self.offset_weights[1], self.log_sigma]
        )

    @staticmethod
    def from_flat(vec: np.ndarray, feature_dim: int) -> "PolicyParams":
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (4 + 3 * feature_dim + 2,):
            raise ValueError("flat parameter vector has the wrong length")
        n = feature_dim
        return PolicyParams(
            stop_weights=vec[:4].copy(),
            evidence_weights=vec[4:4 + n].copy(),
            offset_weights=np.stack([vec[4 + n:4 + 2 * n], vec[4 + 2 * n:4 + 3 * n]]),
            log_sigma=vec[4 + 3 * n:].copy(),
        )

    @staticmethod
    def initial(feature_dim: int, rng, scale: float = 0.1,
                base_log_sigma: float = -1.4) -> "PolicyParams":
        return PolicyParams(
            stop_weights=rng.normal(0.0, scale, 4),
            evidence_weights=rng.normal(0.0, scale, feature_dim),
            offset_weights=rng.normal(0.0, scale, (2, feature_dim)),
            log_sigma=base_log_sigma + rng.normal(0.0, scale, 2),
        )

    def __eq__(self, other):
        return (
            isinstance(other, PolicyParams)
            and np.array_equal(self.stop_weights, other.stop_weights)
            and np.array_equal(self.evidence_weights, other.evidence_weights)
            and np.array_equal(self.offset_weights, other.offset_weights)
            and np.array_equal(self.log_sigma, other.log_sigma)
        )


@dataclass(frozen=True)
class AgentState:
    observed: frozenset[int]  # regions seen so far
    used: frozenset[int]  # regions already spent as evidence
    t: int

    def __post_init__(self):
        if not self.used <= self.observed:
            raise ValueError("used evidence must be a subset of observed regions")
        if self.t < 0:
            raise ValueError("step counter must be non-negative")

    @property
    def candidates(self) -> frozenset[int]:
        return self.observed - self.used


@dataclass(frozen=True)
class Terminate:
    region: int
    confidence: float


@dataclass(frozen=True)
class Saccade:
    evidence: int
    location: tuple[float, float]


@dataclass(frozen=True)
class Step:
    state: AgentState
    action: Terminate | Saccade
    log_prob: float
    reward: float
    forced: bool  # probability-one branch: contributes no score term


@dataclass(frozen=True)
class Episode:
    image_id: int
    steps: tuple[Step, ...]
    confidence: float
    predicted_region: int
    evaluated_regions: int
    total_regions: int

    @property
    def total_reward(self) -> float:
        return sum(s.reward for s in self.steps)

    @property
    def evaluated_fraction(self) -> float:
        return self.evaluated_regions / self.total_regions


def _sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


@lru_cache(maxsize=512)
def _regions_by_id(image: SyntheticImage) -> dict[int, Region]:
    # Images hash by identity (eq=False), so this is a per-object cache.
    return {r.id: r for r in image.regions}


def _best_region(state: AgentState, image: SyntheticImage,
                 confidence_fn: ConfidenceFn) -> tuple[int, float]:
    regions = _regions_by_id(image)
    best_id = -1
    best_val = -math.inf
    for rid in sorted(state.observed):
        val = confidence_fn(regions[rid])
        if val > best_val:
            best_id, best_val = rid, val
    return best_id, best_val


def termination_features(state: AgentState, image: SyntheticImage,
                         confidence_fn: ConfidenceFn) -> np.ndarray:
    """[best confidence over observed, step count, observed fraction, 1]."""
    if not state.observed:
        raise ValueError("termination features need a non-empty observed set")
    _, best = _best_region(state, image, confidence_fn)
    return np.array(
        [best, float(state.t), len(state.observed) / len(image.regions), 1.0]
    )


def termination_prob(state: AgentState, params: PolicyParams,
                     image: SyntheticImage, confidence_fn: ConfidenceFn) -> float:
    v = termination_features(state, image, confidence_fn)
    return _sigmoid(float(params.stop_weights @ v))


def evidence_distribution(
    state: AgentState, params: PolicyParams, image: SyntheticImage
) -> tuple[list[int], np.ndarray]:
    """Softmax over unused observed regions; ids returned in sorted order."""
    cands = sorted(state.candidates)
    if not cands:
        raise ValueError("no evidence candidates: observed set is exhausted")
    regions = _regions_by_id(image)
    logits = np.array(
        [float(params.evidence_weights @ regions[rid].features) for rid in cands]
    )
    logits -= logits.max()
    weights = np.exp(logits)
    return cands, weights / weights.sum()


def location_mean(evidence: Region, params: PolicyParams) -> np.ndarray:
    """Evidence center plus feature-driven offsets in half-extent units."""
    offsets = params.offset_weights @ evidence.features
    cx, cy = evidence.rect.center
    half = np.array([evidence.rect.width / 2.0, evidence.rect.height / 2.0])
    return np.array([cx, cy]) + offsets * half


def location_sigma(params: PolicyParams) -> np.ndarray:
    return np.exp(params.log_sigma)


def gaussian_log_density(z: np.ndarray, mean: np.ndarray, sigma: np.ndarray) -> float:
    zs = (np.asarray(z) - mean) / sigma
    return float(-np.sum(np.log(sigma)) - 0.5 * np.sum(zs * zs)
                 - math.log(2.0 * math.pi))


def sample_step(
    state: AgentState,
    image: SyntheticImage,
    params: PolicyParams,
    confidence_fn: ConfidenceFn,
    rng,
) -> tuple[Terminate | Saccade, float]:
    """Draw one action and its log probability.

    With no evidence candidates left the agent terminates outright; that
    branch has probability one and log probability zero, and consumes no
    randomness.
    """
    if not state.candidates:
        best_id, best_val = _best_region(state, image, confidence_fn)
        return Terminate(region=best_id, confidence=best_val), 0.0

    p_stop = termination_prob(state, params, image, confidence_fn)
    if rng.uniform() < p_stop:
        best_id, best_val = _best_region(state, image, confidence_fn)
        return Terminate(region=best_id, confidence=best_val), math.log(p_stop)

    cands, probs = evidence_distribution(state, params, image)
    idx = int(rng.choice(len(cands), p=probs))
    evidence_id = cands[idx]
    regions = _regions_by_id(image)
    mean = location_mean(regions[evidence_id], params)
    sigma = location_sigma(params)
    z = mean + sigma * rng.standard_normal(2)
    log_prob = (
        math.log1p(-p_stop)
        + math.log(probs[idx])
        + gaussian_log_density(z, mean, sigma)
    )
    return Saccade(evidence=evidence_id, location=(float(z[0]), float(z[1]))), log_prob


def observe(state: AgentState, action: Saccade, image: SyntheticImage) -> AgentState:
    """Reveal every region whose rectangle (closed) contains the landing point."""
    x, y = action.location
    seen = {r.id for r in image.regions if r.rect.contains_point(x, y)}
    return AgentState(
        observed=state.observed | seen,
        used=state.used | {action.evidence},
        t=state.t + 1,
    )


def reward(stopped: bool, confidence: float, label: int, saccade_penalty: float) -> float:
    """Per-step reward: a fixed penalty per saccade, else the clamped
    confidence signed against the image label."""
    if label not in (-1, 1):
        raise ValueError("image label must be -1 or +1")
    if saccade_penalty < 0:
        raise ValueError("saccade penalty must be non-negative")
    if not stopped:
        return -saccade_penalty
    if label == 1:
        return min(confidence, 1.0)
    return max(confidence, -1.0)


def initial_state(image: SyntheticImage) -> AgentState:
    """Regions revealed by fixating the canvas center; never empty because
    the generator always emits a full-canvas region."""
    x, y = CANVAS_CENTER
    seen = frozenset(r.id for r in image.regions if r.rect.contains_point(x, y))
    if not seen:
        raise ValueError(f"image {image.id} has no region containing the canvas center")
    return AgentState(observed=seen, used=frozenset(), t=0)


def rollout(
    image: SyntheticImage,
    params: PolicyParams,
    confidence_fn: ConfidenceFn,
    rng,
    t_max: int = 20,
    saccade_penalty: float = 0.05,
) -> Episode:
    """Run one episode to termination; at most ``t_max`` saccades."""
    cache: dict[int, float] = {}
    regions = _regions_by_id(image)

    def cached_confidence(region: Region) -> float:
        if region.id not in cache:
            cache[region.id] = confidence_fn(region)
        return cache[region.id]

    state = initial_state(image)
    steps: list[Step] = []
    while True:
        forced = state.t >= t_max or not state.candidates
        if forced:
            best_id, best_val = _best_region(state, image, cached_confidence)
            action: Terminate | Saccade = Terminate(region=best_id, confidence=best_val)
            log_prob = 0.0
        else:
            action, log_prob = sample_step(state, image, params, cached_confidence, rng)
        if isinstance(action, Terminate):
            r = reward(True, action.confidence, image.label, saccade_penalty)
            steps.append(Step(state, action, log_prob, r, forced))
            return Episode(
                image_id=image.id,
                steps=tuple(steps),
                confidence=action.confidence,
                predicted_region=action.region,
                evaluated_regions=len(state.observed),
                total_regions=len(image.regions),
            )
        r = reward(False, 0.0, image.label, saccade_penalty)
        steps.append(Step(state, action, log_prob, r, forced))
        state = observe(state, action, image)


POLICY_FORMAT_VERSION = 1


def save_policy(params: PolicyParams, path) -> None:
    def row(vec):
        return ",".join(repr(float(v)) for v in vec)

    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"saccadet-policy {POLICY_FORMAT_VERSION}\n")
        fh.write(f"n {params.feature_dim}\n")
        fh.write(f"stop {row(params.stop_weights)}\n")
        fh.write(f"evidence {row(params.evidence_weights)}\n")
        fh.write(f"offset_x {row(params.offset_weights[0])}\n")
        fh.write(f"offset_y {row(params.offset_weights[1])}\n")
        fh.write(f"log_sigma {row(params.log_sigma)}\n")


def load_policy(path) -> PolicyParams:
    with open(path, "r", encoding="ascii") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or not lines[0].startswith("saccadet-policy"):
        raise ValueError(f"{path}: not a policy file")
    if int(lines[0].split()[1]) != POLICY_FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported policy format version")
    fields = {}
    for ln in lines[1:]:
        key, _, value = ln.partition(" ")
        fields[key] = value
    n = int(fields["n"])
    parse = lambda key: np.array([float(v) for v in fields[key].split(",")])
    params = PolicyParams(
        stop_weights=parse("stop"),
        evidence_weights=parse("evidence"),
        offset_weights=np.stack([parse("offset_x"), parse("offset_y")]),
        log_sigma=parse("log_sigma"),
    )
    if params.feature_dim != n:
        raise ValueError(f"{path}: declared feature size disagrees with payload")
    return params
