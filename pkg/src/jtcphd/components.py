"""Trajectory-Gaussian mixture building blocks.

A trajectory Gaussian stores the stacked mean of a whole trajectory (oldest
state first, 6 entries per step) together with a joint covariance over its
*active window*: the trailing block of states still being smoothed.  With an
unbounded window the covariance covers the full trajectory; the scan-window
approximation in the filter module crops it to the last L states and the
mean entries in front of the window become frozen point estimates.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .models import STATE_DIM, InvalidParameterError


class InvalidMergeError(ValueError):
    """Attempt to merge mixture terms with incompatible trajectory shape."""


@dataclass(frozen=True, slots=True)
class GaussianTrajectory:
    """Gaussian over a trajectory born at ``birth`` with stacked mean/cov.

    mean has length*6 entries; cov is (active*6, active*6) over the trailing
    ``active`` states, active <= length.
    """

    birth: int
    mean: np.ndarray
    cov: np.ndarray

    @property
    def length(self) -> int:
        return self.mean.size // STATE_DIM

    @property
    def active_len(self) -> int:
        return self.cov.shape[0] // STATE_DIM

    @property
    def last_time(self) -> int:
        return self.birth + self.length - 1

    def states(self) -> np.ndarray:
        """Trajectory means as an (length, 6) array."""
        return self.mean.reshape(self.length, STATE_DIM)

    def last_state(self) -> np.ndarray:
        return self.mean[-STATE_DIM:]

    def validate(self) -> None:
        if self.birth < 1:
            raise InvalidParameterError(f"birth must be >= 1, got {self.birth}")
        if self.mean.ndim != 1 or self.mean.size % STATE_DIM:
            raise InvalidParameterError("mean must be flat with 6 entries per step")
        n = self.cov.shape[0]
        if self.cov.shape != (n, n) or n % STATE_DIM or n > self.mean.size or n == 0:
            raise InvalidParameterError("cov must be a square trailing block")
        if np.max(np.abs(self.cov - self.cov.T)) > 1e-10:
            raise InvalidParameterError("cov not symmetric")


def gaussian_trajectory(birth: int, mean, cov) -> GaussianTrajectory:
    """Checked constructor used at API boundaries (the filter's internal
    paths build instances directly from arrays it already owns)."""
    g = GaussianTrajectory(int(birth), np.asarray(mean, dtype=float).ravel(),
                           np.asarray(cov, dtype=float))
    g.validate()
    return g


@dataclass(frozen=True, slots=True)
class ModelHypothesis:
    """One motion-model hypothesis of a component's bank.

    ``prev_model`` records the model of the originating hypothesis when the
    bank was expanded over (previous, current) model pairs; merges discard
    that provenance.
    """

    model: str
    weight: float
    gauss: GaussianTrajectory
    prev_model: str | None = None


@dataclass(frozen=True, slots=True)
class TrajectoryComponent:
    """One mixture term: a class hypothesis with a bank of model hypotheses.

    All bank entries share birth time and length; bank weights sum to one.
    """

    class_id: str
    weight: float
    bank: tuple[ModelHypothesis, ...]

    @property
    def birth(self) -> int:
        return self.bank[0].gauss.birth

    @property
    def length(self) -> int:
        return self.bank[0].gauss.length

    def bank_weights(self) -> np.ndarray:
        return np.array([h.weight for h in self.bank])

    def mean_trajectory(self) -> np.ndarray:
        """Bank-weighted stacked mean."""
        out = np.zeros(self.bank[0].gauss.mean.size)
        for h in self.bank:
            out += h.weight * h.gauss.mean
        return out

    def last_state_moments(self) -> tuple[np.ndarray, np.ndarray]:
        """Moment-matched (mean, cov) of the current state over the bank."""
        means = np.stack([h.gauss.last_state() for h in self.bank])
        covs = np.stack([h.gauss.cov[-STATE_DIM:, -STATE_DIM:] for h in self.bank])
        w = self.bank_weights()
        return _moment_match(w / w.sum(), means, covs)

    def validate(self) -> None:
        if self.weight < 0:
            raise InvalidParameterError("component weight must be >= 0")
        if not self.bank:
            raise InvalidParameterError("component bank is empty")
        if abs(sum(h.weight for h in self.bank) - 1.0) > 1e-9:
            raise InvalidParameterError("bank weights must sum to 1")
        b0, l0 = self.bank[0].gauss.birth, self.bank[0].gauss.length
        for h in self.bank:
            h.gauss.validate()
            if h.weight < 0:
                raise InvalidParameterError("bank weight must be >= 0")
            if h.gauss.birth != b0 or h.gauss.length != l0:
                raise InvalidParameterError("bank entries disagree on (birth, length)")


@dataclass(frozen=True, slots=True)
class PhdState:
    """Mixture state at time ``time``: components partitioned by class."""

    time: int
    components: dict[str, tuple[TrajectoryComponent, ...]]

    def all_components(self):
        for cid in self.components:
            yield from self.components[cid]

    def class_mass(self, class_id: str) -> float:
        return float(sum(c.weight for c in self.components.get(class_id, ())))

    def total_mass(self) -> float:
        return float(sum(c.weight for c in self.all_components()))

    def n_components(self) -> int:
        return sum(len(v) for v in self.components.values())

    def validate(self) -> None:
        for cid, comps in self.components.items():
            for c in comps:
                c.validate()
                if c.class_id != cid:
                    raise InvalidParameterError("component filed under wrong class")
                if c.birth + c.length - 1 != self.time:
                    raise InvalidParameterError(
                        f"component (birth={c.birth}, length={c.length}) is not "
                        f"alive at t={self.time}")


def empty_state(time: int = 0) -> PhdState:
    return PhdState(time=time, components={})


# ---------------------------------------------------------------------------
# Birth model
# ---------------------------------------------------------------------------

@dataclass(frozen=True, slots=True)
class BirthEntry:
    """One Gaussian birth location for one class.

    ``model_ids`` orders the bank like the owning class's model bank.
    """

    weight: float
    model_ids: tuple[str, ...]
    model_weights: np.ndarray
    mean: np.ndarray
    cov: np.ndarray

    def validate(self) -> None:
        mw = np.asarray(self.model_weights, dtype=float)
        if self.weight < 0:
            raise InvalidParameterError("birth weight must be >= 0")
        if mw.size != len(self.model_ids) or not self.model_ids:
            raise InvalidParameterError("birth model weights do not match the bank")
        if abs(mw.sum() - 1.0) > 1e-9 or np.any(mw < 0):
            raise InvalidParameterError("birth model weights must form a simplex")


@dataclass(frozen=True, slots=True)
class BirthModel:
    """Per-class lists of birth entries; may be empty."""

    entries: dict[str, tuple[BirthEntry, ...]]

    def class_mass(self, class_id: str) -> float:
        return float(sum(e.weight for e in self.entries.get(class_id, ())))


def make_birth_components(birth: BirthModel, k: int) -> list[TrajectoryComponent]:
    """Length-one components for every (class, birth entry) pair at time k.

    The same Gaussian is shared across the models of an entry; only the
    bank weights differ.
    """
    if k < 1:
        raise InvalidParameterError(f"birth time must be >= 1, got {k}")
    out: list[TrajectoryComponent] = []
    for cid, entries in birth.entries.items():
        for entry in entries:
            entry.validate()
            mean = np.asarray(entry.mean, dtype=float).ravel().copy()
            cov = np.asarray(entry.cov, dtype=float).copy()
            mw = np.asarray(entry.model_weights, dtype=float)
            g = GaussianTrajectory(k, mean, cov)
            bank = tuple(
                ModelHypothesis(model=mid, weight=float(mw[i]), gauss=g)
                for i, mid in enumerate(entry.model_ids))
            out.append(TrajectoryComponent(class_id=cid, weight=float(entry.weight),
                                           bank=bank))
    return out


# ---------------------------------------------------------------------------
# Trajectory-block operations
# ---------------------------------------------------------------------------

def append_predicted_state(g: GaussianTrajectory, f: np.ndarray,
                           q: np.ndarray) -> GaussianTrajectory:
    """Extend a trajectory Gaussian by one predicted state.

    The new mean appends F m_last; the covariance gains the cross block
    P1 = P[:, last] F' and the corner P2 = F P[last, last] F' + Q:

        [[P,    P1],
         [P1',  P2]]

    The active window grows by one; callers crop afterwards if a scan
    window is in force.
    """
    f = np.asarray(f, dtype=float)
    q = np.asarray(q, dtype=float)
    if f.shape != (STATE_DIM, STATE_DIM) or q.shape != (STATE_DIM, STATE_DIM):
        raise InvalidParameterError("F and Q must be 6x6")
    d = g.cov.shape[0]
    mean = np.empty(g.mean.size + STATE_DIM)
    mean[:-STATE_DIM] = g.mean
    mean[-STATE_DIM:] = f @ g.mean[-STATE_DIM:]
    p1 = g.cov[:, -STATE_DIM:] @ f.T
    p2 = f @ g.cov[-STATE_DIM:, -STATE_DIM:] @ f.T + q
    cov = np.empty((d + STATE_DIM, d + STATE_DIM))
    cov[:d, :d] = g.cov
    cov[:d, d:] = p1
    cov[d:, :d] = p1.T
    cov[d:, d:] = p2
    cov = 0.5 * (cov + cov.T)
    return GaussianTrajectory(g.birth, mean, cov)


def last_state_marginal(g: GaussianTrajectory) -> tuple[np.ndarray, np.ndarray]:
    """Marginal (mean, cov) of the current state of a trajectory Gaussian."""
    return g.mean[-STATE_DIM:].copy(), g.cov[-STATE_DIM:, -STATE_DIM:].copy()


def _moment_match(weights: np.ndarray, means: np.ndarray,
                  covs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mean/cov of a normalized Gaussian mixture (weights sum to 1).

    Means may be longer than the covariance dimension (frozen prefix in
    front of the active window); the spread term then covers only the
    trailing covariered entries while the prefix is plainly averaged.
    """
    mean = weights @ means
    d = covs.shape[1]
    cov = np.einsum("b,bij->ij", weights, covs)
    diff = means[:, -d:] - mean[-d:]
    cov = cov + np.einsum("b,bi,bj->ij", weights, diff, diff)
    return mean, 0.5 * (cov + cov.T)


def merge_pair(a: ModelHypothesis, b: ModelHypothesis, wa: float,
               wb: float) -> ModelHypothesis:
    """Moment-matched merge of two same-shape hypotheses.

    The result carries weight wa + wb; the Gaussian is the mixture's match.
    Degenerate weights short-circuit so a zero-weight side is returned
    exactly.
    """
    if wa < 0 or wb < 0 or wa + wb <= 0:
        raise InvalidMergeError(f"weights must be >= 0 with positive sum, "
                                f"got {wa}, {wb}")
    ga, gb = a.gauss, b.gauss
    if a.model != b.model:
        raise InvalidMergeError(f"model mismatch: {a.model!r} vs {b.model!r}")
    if (ga.birth, ga.length, ga.active_len) != (gb.birth, gb.length, gb.active_len):
        raise InvalidMergeError("hypotheses disagree on (birth, length, window)")
    if wa == 0.0:
        return replace(b, weight=wa + wb, prev_model=None)
    if wb == 0.0:
        return replace(a, weight=wa + wb, prev_model=None)
    w = np.array([wa, wb]) / (wa + wb)
    mean, cov = _moment_match(w, np.stack([ga.mean, gb.mean]),
                              np.stack([ga.cov, gb.cov]))
    return ModelHypothesis(model=a.model, weight=wa + wb,
                           gauss=GaussianTrajectory(ga.birth, mean, cov))


def merge_hypothesis_group(entries: list[tuple[float, ModelHypothesis]]
                           ) -> ModelHypothesis:
    """Moment-matched merge of >= 1 hypotheses sharing a model id.

    ``entries`` pairs each hypothesis with its (unnormalized) mixture
    weight; the result's weight is the group total.
    """
    if len(entries) == 1:
        w, h = entries[0]
        return replace(h, weight=w, prev_model=None)
    total = sum(w for w, _ in entries)
    if total <= 0:
        raise InvalidMergeError("group weight must be positive")
    h0 = entries[0][1]
    for _, h in entries[1:]:
        if h.model != h0.model:
            raise InvalidMergeError("group mixes model ids")
        if (h.gauss.birth, h.gauss.length, h.gauss.active_len) != (
                h0.gauss.birth, h0.gauss.length, h0.gauss.active_len):
            raise InvalidMergeError("group mixes trajectory shapes")
    w = np.array([e[0] for e in entries]) / total
    mean, cov = _moment_match(w, np.stack([e[1].gauss.mean for e in entries]),
                              np.stack([e[1].gauss.cov for e in entries]))
    return ModelHypothesis(model=h0.model, weight=total,
                           gauss=GaussianTrajectory(h0.gauss.birth, mean, cov))
