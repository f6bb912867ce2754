"""Evaluation: trajectory metric error, cardinality and classification
statistics.

The trajectory metric here is a deliberately simple per-scan assignment
variant: at scan t the cost of pairing two trajectories is their
time-averaged cutoff position distance over the union of their alive spans
(scans where only one of the pair exists cost the full cutoff), an optimal
assignment is solved per scan, and unmatched trajectories enter through the
cardinality term.  Track switches against the previous scan's assignment
add ``switch_cost^p`` each.  This is an upper-bound approximation of exact
linear-programming trajectory metrics; it preserves the relative
comparisons (e.g. across scan-window lengths) the package's evaluation
relies on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .models import InvalidParameterError

POS = (0, 2, 4)


@dataclass(frozen=True, slots=True)
class MetricConfig:
    """Order p, cutoff c (meters) and per-switch cost gamma."""

    order: float = 2.0
    cutoff: float = 100.0
    switch_cost: float = 1.0
    use_velocity: bool = False

    def __post_init__(self):
        if self.order < 1:
            raise InvalidParameterError("order must be >= 1")
        if self.cutoff <= 0:
            raise InvalidParameterError("cutoff must be > 0")
        if self.switch_cost < 0:
            raise InvalidParameterError("switch_cost must be >= 0")


@dataclass(frozen=True, slots=True)
class MetricSeries:
    """Per-scan evaluation curves of one tracking pass or an aggregate."""

    tm: np.ndarray
    card_est: dict[str, np.ndarray]
    card_true: dict[str, np.ndarray]
    class_acc: dict[str, np.ndarray]


@dataclass(frozen=True, slots=True)
class TMResult:
    """Per-scan metric errors plus the matchings that produced them.

    ``matchings[t-1]`` maps target_id -> (estimate index, estimate class,
    effective) where ``effective`` is False for pairs matched at the full
    cutoff (no real overlap).
    """

    errors: np.ndarray
    matchings: list[dict]


def _track_view(obj, t: int):
    """(birth, states-up-to-t) of a truth trajectory or an estimate."""
    birth = obj.birth
    states = obj.states
    n = min(t - birth + 1, states.shape[0] if hasattr(states, "shape")
            else len(states))
    return birth, np.asarray(states)[:n]


def _pair_cost(a, b, t: int, cfg: MetricConfig, idx) -> float:
    """Time-averaged cutoff distance between two tracks alive at t."""
    ba, sa = _track_view(a, t)
    bb, sb = _track_view(b, t)
    cp = cfg.cutoff ** cfg.order
    lo = max(ba, bb)
    span = t - min(ba, bb) + 1
    xa = sa[lo - ba: t - ba + 1, idx]
    xb = sb[lo - bb: t - bb + 1, idx]
    d = np.linalg.norm(xa - xb, axis=1)
    total = float(np.sum(np.minimum(d, cfg.cutoff) ** cfg.order))
    total += cp * (span - d.size)
    return total / span


def trajectory_metric(estimates, truth, cfg: MetricConfig) -> TMResult:
    """Per-scan trajectory metric between estimate sets and ground truth.

    ``estimates`` is the per-scan list of extracted trajectory estimates;
    ``truth`` is a :class:`~jtcphd.simulator.GroundTruth` (or any object
    with a ``targets`` sequence of trajectory-shaped records).
    """
    duration = len(estimates)
    idx = list(POS) + [1, 3, 5] if cfg.use_velocity else list(POS)
    cp = cfg.cutoff ** cfg.order
    errors = np.zeros(duration)
    matchings: list[dict] = []
    prev_truth_match: dict = {}
    prev_est_match: dict = {}
    for t in range(1, duration + 1):
        alive = [tr for tr in truth.targets if tr.birth <= t <= tr.death]
        ests = estimates[t - 1]
        n, m = len(alive), len(ests)
        matching: dict = {}
        truth_match: dict = {}
        est_match: dict = {}
        total = 0.0
        if n and m:
            cost = np.empty((n, m))
            for i, tr in enumerate(alive):
                for j, e in enumerate(ests):
                    cost[i, j] = _pair_cost(tr, e, t, cfg, idx)
            rows, cols = linear_sum_assignment(cost)
            total += float(cost[rows, cols].sum())
            est_keys = _estimate_keys(ests, t)
            for i, j in zip(rows, cols):
                effective = cost[i, j] < cp - 1e-9
                matching[alive[i].target_id] = (int(j), ests[j].class_id,
                                                bool(effective))
                if effective:
                    truth_match[alive[i].target_id] = est_keys[j]
                    est_match[est_keys[j]] = alive[i].target_id
        total += cp * abs(n - m)

        switches = 0.0
        for tid, key in truth_match.items():
            if tid in prev_truth_match and prev_truth_match[tid] != key:
                switches += 1.0
        for key, tid in est_match.items():
            if key in prev_est_match and prev_est_match[key] != tid:
                switches += 1.0
        total += (cfg.switch_cost ** cfg.order) * 0.5 * switches

        errors[t - 1] = total ** (1.0 / cfg.order)
        matchings.append(matching)
        prev_truth_match, prev_est_match = truth_match, est_match
    return TMResult(errors=errors, matchings=matchings)


def _estimate_keys(ests, t: int):
    """Stable-ish identity keys for switch counting: birth time and class,
    disambiguated by current x-position rank among colliding estimates."""
    groups: dict = {}
    for j, e in enumerate(ests):
        groups.setdefault((e.birth, e.class_id), []).append(j)
    keys = [None] * len(ests)
    for (birth, cid), js in groups.items():
        js_sorted = sorted(js, key=lambda j: float(np.asarray(ests[j].states)[-1, 0]))
        for rank, j in enumerate(js_sorted):
            keys[j] = (birth, cid, rank)
    return keys


def cardinality_stats(estimates, truth, class_ids, duration: int
                      ) -> tuple[dict[str, np.ndarray], dict[str, np.ndarray]]:
    """Per-scan estimated and true target counts by class."""
    est = {cid: np.zeros(duration) for cid in class_ids}
    for t in range(1, duration + 1):
        for e in estimates[t - 1]:
            if e.class_id in est:
                est[e.class_id][t - 1] += 1
    true = {cid: np.zeros(duration) for cid in class_ids}
    for tr in truth.targets:
        if tr.class_id in true:
            true[tr.class_id][tr.birth - 1: tr.death] += 1
    return est, true


def classification_accuracy(estimates, truth, matchings, class_ids
                            ) -> dict[str, np.ndarray]:
    """Per-scan fraction of effectively matched truths whose estimate class
    agrees, grouped by true class.  Scans with no matched truth of a class
    are NaN."""
    duration = len(matchings)
    by_id = {tr.target_id: tr.class_id for tr in truth.targets}
    out = {cid: np.full(duration, np.nan) for cid in class_ids}
    for t in range(duration):
        agree = {cid: 0 for cid in class_ids}
        count = {cid: 0 for cid in class_ids}
        for tid, (_, est_class, effective) in matchings[t].items():
            if not effective:
                continue
            true_class = by_id[tid]
            if true_class not in count:
                continue
            count[true_class] += 1
            agree[true_class] += int(est_class == true_class)
        for cid in class_ids:
            if count[cid]:
                out[cid][t] = agree[cid] / count[cid]
    return out


def matched_class_by_target(estimates, truth, matchings) -> dict[str, list]:
    """Per target: the class of its effectively matched estimate per scan
    (None when unmatched or not alive)."""
    duration = len(matchings)
    out = {tr.target_id: [None] * duration for tr in truth.targets}
    for t in range(duration):
        for tid, (_, est_class, effective) in matchings[t].items():
            if effective:
                out[tid][t] = est_class
    return out
