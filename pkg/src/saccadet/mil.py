"""Multiple-instance training of the region confidence function.

``cmi_svm_train`` alternates between fitting the linear classifier on the
currently labeled instances and greedily relabeling each positive bag:
repeatedly take the highest-scoring unprocessed bag member; if its score
is positive, label it +1, force the regions mostly contained in it to -1
and its overlapping fringe to 0 (excluded from the next fit), and drop
all of them from the bag's worklist; otherwise label it 0 and drop it.
If a positive bag produces no positive response, its highest-scoring
member is promoted to +1 (with the same label propagation) so every
positive bag keeps at least one positive instance.  Negative-bag members
are always -1 and take precedence on conflicts.  The alternation stops
when a full sweep leaves the assignment unchanged.

Label propagation is restricted to regions of the owning image; regions
of different images never constrain each other.  A candidate whose
propagation would contradict labels already forced by previously
selected positives of the same image is skipped (labeled 0) instead,
which keeps the returned assignment exactly consistent with the label
rules under any geometry.  With multiple positive bags on one image the
at-least-one-positive fallback takes priority over propagation
consistency; the supported bag builders emit at most one positive bag
per image, where no such conflict can arise.

``mi_svm_train`` is the same engine with the propagation rules disabled
and the label range restricted to {-1, +1}: the classical instance-level
alternation that the constrained variant reduces to when both region
sets are empty.

Restarts: the assignment is initialized at random (positive-bag members
get +1 with probability ratio/(1+ratio) for a ratio drawn uniformly from
the configured range), the alternation runs to convergence, and the
restart with the lowest final objective wins.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .dataset import Bag, SyntheticImage
from .geometry import fringe_set, subregion_set
from .svm import LinearModel, SvmConfig, train_detailed

__all__ = [
    "CmiConfig",
    "RestartOutcome",
    "CmiResult",
    "cmi_svm_train",
    "mi_svm_train",
    "mil_objective",
    "constraint_violations",
    "save_assignment",
    "load_assignment",
]


@dataclass(frozen=True)
class CmiConfig:
    subregion_threshold: float = 0.2
    fringe_threshold: float = 0.2
    restarts: int = 30
    init_pos_ratio: tuple[float, float] = (0.1, 1.0)
    max_outer_iters: int = 50
    svm: SvmConfig = field(default_factory=SvmConfig)
    constraints: bool = True
    seed: int = 0

    def __post_init__(self):
        for t in (self.subregion_threshold, self.fringe_threshold):
            if not (0.0 < t <= 1.0):
                raise ValueError("thresholds must be in (0, 1]")
        if self.restarts < 1:
            raise ValueError("need at least one restart")
        lo, hi = self.init_pos_ratio
        if not (0.0 < lo <= hi):
            raise ValueError("invalid positive/negative init ratio range")
        if self.max_outer_iters < 1:
            raise ValueError("max_outer_iters must be at least 1")


@dataclass(frozen=True)
class RestartOutcome:
    restart: int
    iterations: int
    converged: bool
    objective: float
    # One snapshot per outer iteration: sorted (region id, label) pairs.
    label_trajectory: tuple[tuple[tuple[int, int], ...], ...]


@dataclass(frozen=True)
class CmiResult:
    model: LinearModel
    assignment: dict[int, int]
    iterations: int
    converged: bool
    objective: float
    chosen_restart: int
    restarts: tuple[RestartOutcome, ...]


def mil_objective(
    model: LinearModel,
    assignment: Mapping[int, int],
    features_by_id: Mapping[int, np.ndarray],
    c: float,
) -> float:
    """0.5 ||w||^2 + C * sum of hinge losses over instances labeled != 0."""
    total = 0.0
    for rid, label in assignment.items():
        if label == 0:
            continue
        margin = label * (float(model.w @ features_by_id[rid]) + model.b)
        total += max(0.0, 1.0 - margin)
    return float(0.5 * (model.w @ model.w) + c * total)


class _Problem:
    """Shared, read-only state for all restarts of one training run."""

    def __init__(self, bags: Sequence[Bag], images: Sequence[SyntheticImage],
                 config: CmiConfig):
        if not any(b.label == 1 for b in bags):
            raise ValueError("need at least one positive bag")
        if not any(b.label == -1 for b in bags):
            raise ValueError("need at least one negative bag")

        self.config = config
        self.bags_pos = [b for b in bags if b.label == 1]
        self.bags_neg = [b for b in bags if b.label == -1]

        images_by_id = {im.id: im for im in images}
        used_images = {b.image_id for b in bags}
        missing = used_images - set(images_by_id)
        if missing:
            raise ValueError(f"bags reference unknown images: {sorted(missing)}")

        self.features: dict[int, np.ndarray] = {}
        self.image_of: dict[int, int] = {}
        pools: dict[int, dict] = {}
        for image_id in sorted(used_images):
            image = images_by_id[image_id]
            pools[image_id] = image.region_rects()
            for r in image.regions:
                self.features[r.id] = r.features
                self.image_of[r.id] = image_id
        for b in bags:
            unknown = [rid for rid in b.region_ids if rid not in self.image_of
                       or self.image_of[rid] != b.image_id]
            if unknown:
                raise ValueError(
                    f"bag {b.id} references regions outside image {b.image_id}: {unknown}"
                )

        self.all_ids = sorted(self.features)
        self.row_of = {rid: i for i, rid in enumerate(self.all_ids)}
        self.matrix = np.ascontiguousarray(
            np.stack([self.features[rid] for rid in self.all_ids])
        )

        bagged = {rid for b in bags for rid in b.region_ids}
        self.pos_member_ids = sorted(
            {rid for b in self.bags_pos for rid in b.region_ids}
        )
        self.non_bag_ids = [rid for rid in self.all_ids if rid not in bagged]
        self.neg_locked: dict[int, frozenset[int]] = {}
        for b in self.bags_neg:
            prev = self.neg_locked.get(b.image_id, frozenset())
            self.neg_locked[b.image_id] = prev | frozenset(b.region_ids)

        self.sub: dict[int, frozenset[int]] = {}
        self.fri: dict[int, frozenset[int]] = {}
        if config.constraints:
            for rid in self.pos_member_ids:
                pool = pools[self.image_of[rid]]
                self.sub[rid] = frozenset(
                    subregion_set(rid, pool, config.subregion_threshold)
                )
                self.fri[rid] = frozenset(
                    fringe_set(rid, pool, config.fringe_threshold)
                )

    def initial_assignment(self, rng) -> dict[int, int]:
        y = {rid: 0 for rid in self.all_ids}
        lo, hi = self.config.init_pos_ratio
        ratio = rng.uniform(lo, hi)
        p_pos = ratio / (1.0 + ratio)
        for rid in self.pos_member_ids:
            y[rid] = 1 if rng.uniform() < p_pos else -1
        for b in self.bags_neg:
            for rid in b.region_ids:
                y[rid] = -1
        if not any(y[rid] == 1 for rid in self.pos_member_ids):
            y[self.pos_member_ids[rng.integers(len(self.pos_member_ids))]] = 1
        return y

    def fit(self, y: Mapping[int, int]):
        ids = [rid for rid in self.all_ids if y[rid] != 0]
        rows = [self.row_of[rid] for rid in ids]
        labels = np.array([float(y[rid]) for rid in ids])
        return train_detailed(self.matrix[rows], labels, self.config.svm)

    def sweep(self, y_prev: Mapping[int, int], model: LinearModel) -> dict[int, int]:
        constrained = self.config.constraints
        y = dict(y_prev)
        for rid in self.non_bag_ids:
            y[rid] = 0
        scores = self.matrix @ model.w + model.b
        score = {rid: float(scores[self.row_of[rid]]) for rid in self.all_ids}

        forced_zero: dict[int, set[int]] = {}
        forced_neg: dict[int, set[int]] = {}
        accepted: dict[int, set[int]] = {}

        def propagate(k: int, image_id: int) -> None:
            # A freshly accepted positive overwrites labels of its subregion
            # and fringe sets; an earlier positive caught in the subregion
            # set is demoted to -1, which keeps the final assignment
            # consistent (its own implications become vacuous).
            acc = accepted.setdefault(image_id, set())
            acc -= self.sub[k]
            for rid in self.sub[k]:
                y[rid] = -1
            for rid in self.fri[k]:
                y[rid] = 0
            forced_neg.setdefault(image_id, set()).update(self.sub[k] - self.fri[k])
            forced_zero.setdefault(image_id, set()).update(self.fri[k])
            acc.add(k)

        for bag in self.bags_pos:
            image_id = bag.image_id
            worklist = set(bag.region_ids)
            n_pos = 0
            locked = self.neg_locked.get(image_id, frozenset())
            while worklist:
                k = max(worklist, key=lambda rid: (score[rid], -rid))
                if score[k] > 0.0:
                    if constrained:
                        s_k, f_k = self.sub[k], self.fri[k]
                        # Skip a candidate whose propagation would clash with
                        # labels already forced by other positives of the
                        # image (or by negative-bag membership).
                        conflict = (
                            ((s_k - f_k) & forced_zero.get(image_id, set()))
                            or (f_k & forced_neg.get(image_id, set()))
                            or (f_k & locked)
                        )
                        if conflict:
                            y[k] = 0
                            worklist.discard(k)
                            continue
                        y[k] = 1
                        n_pos += 1
                        propagate(k, image_id)
                        worklist -= {k} | s_k | f_k
                    else:
                        y[k] = 1
                        n_pos += 1
                        worklist.discard(k)
                else:
                    y[k] = 0 if constrained else -1
                    worklist.discard(k)
            if n_pos == 0:
                k = max(bag.region_ids, key=lambda rid: (score[rid], -rid))
                y[k] = 1
                if constrained:
                    propagate(k, image_id)

        for bag in self.bags_neg:
            for rid in bag.region_ids:
                y[rid] = -1
        return y


def _run_restart(problem: _Problem, restart: int):
    config = problem.config
    rng = np.random.default_rng((config.seed, restart))
    y = problem.initial_assignment(rng)
    trajectory = []
    model = None
    converged = False
    iterations = 0
    for _ in range(config.max_outer_iters):
        fit = problem.fit(y)
        model = fit.model
        y_new = problem.sweep(y, model)
        iterations += 1
        trajectory.append(tuple(sorted(y_new.items())))
        if y_new == y:
            converged = True
            break
        y = y_new
    objective = mil_objective(model, y, problem.features, config.svm.c)
    outcome = RestartOutcome(
        restart=restart,
        iterations=iterations,
        converged=converged,
        objective=objective,
        label_trajectory=tuple(trajectory),
    )
    return outcome, model, y


def _train(bags, images, config: CmiConfig, jobs: int) -> CmiResult:
    problem = _Problem(bags, images, config)
    indices = list(range(config.restarts))
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(lambda r: _run_restart(problem, r), indices))
    else:
        results = [_run_restart(problem, r) for r in indices]

    best = min(range(len(results)), key=lambda i: (results[i][0].objective, i))
    outcome, model, assignment = results[best]
    return CmiResult(
        model=model,
        assignment=assignment,
        iterations=outcome.iterations,
        converged=outcome.converged,
        objective=outcome.objective,
        chosen_restart=best,
        restarts=tuple(r[0] for r in results),
    )


def cmi_svm_train(
    bags: Sequence[Bag],
    images: Sequence[SyntheticImage],
    config: CmiConfig,
    jobs: int = 1,
) -> CmiResult:
    """Constrained multiple-instance training (see module docstring)."""
    return _train(bags, images, config, jobs)


def mi_svm_train(
    bags: Sequence[Bag],
    images: Sequence[SyntheticImage],
    config: CmiConfig,
    jobs: int = 1,
) -> CmiResult:
    """Unconstrained ablation: same alternation, labels in {-1, +1} only."""
    if config.constraints:
        config = replace(config, constraints=False)
    return _train(bags, images, config, jobs)


def constraint_violations(
    assignment: Mapping[int, int],
    bags: Sequence[Bag],
    images: Sequence[SyntheticImage],
    subregion_threshold: float,
    fringe_threshold: float,
) -> list[str]:
    """Exhaustively check the label rules; returns human-readable violations.

    Checked rules: labels lie in {-1, 0, +1}; every region labeled +1 has
    its same-image fringe labeled 0 and its same-image subregions outside
    the fringe labeled -1; every positive bag holds at least one +1; every
    negative-bag member is -1.
    """
    violations = []
    for rid, label in assignment.items():
        if label not in (-1, 0, 1):
            violations.append(f"region {rid}: label {label} outside {{-1,0,1}}")

    pools = {im.id: im.region_rects() for im in images}
    image_of = {r.id: im.id for im in images for r in im.regions}

    for rid, label in assignment.items():
        if label != 1:
            continue
        pool = pools[image_of[rid]]
        fringe = fringe_set(rid, pool, fringe_threshold)
        subs = subregion_set(rid, pool, subregion_threshold)
        for k in fringe:
            if assignment.get(k, 0) != 0:
                violations.append(
                    f"region {rid} is positive but fringe member {k} "
                    f"has label {assignment.get(k, 0)} (expected 0)"
                )
        for k in subs - fringe:
            if assignment.get(k, 0) != -1:
                violations.append(
                    f"region {rid} is positive but subregion {k} "
                    f"has label {assignment.get(k, 0)} (expected -1)"
                )

    for bag in bags:
        if bag.label == 1:
            if not any(assignment.get(rid, 0) == 1 for rid in bag.region_ids):
                violations.append(f"positive bag {bag.id} has no positive instance")
        else:
            for rid in bag.region_ids:
                if assignment.get(rid, 0) != -1:
                    violations.append(
                        f"negative bag {bag.id} member {rid} has label "
                        f"{assignment.get(rid, 0)} (expected -1)"
                    )
    return violations


def save_assignment(assignment: Mapping[int, int], path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write("saccadet-assignment 1\n")
        for rid in sorted(assignment):
            fh.write(f"{rid} {assignment[rid]}\n")


def load_assignment(path) -> dict[int, int]:
    with open(path, "r", encoding="ascii") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or not lines[0].startswith("saccadet-assignment"):
        raise ValueError(f"{path}: not an assignment file")
    out = {}
    for ln in lines[1:]:
        rid, label = ln.split()
        out[int(rid)] = int(label)
    return out
