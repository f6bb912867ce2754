"""The Gaussian-mixture recursion for joint trajectory tracking and
classification: predict, update, mixture reduction, scan windowing and
estimate extraction.

Class hypotheses never change once a component is born; motion-model
hypotheses live in a per-component bank and are expanded over
(previous model, current model) pairs at prediction.  The measurement
update smooths the whole active window of each trajectory, not just the
current state, which is what distinguishes this filter from a plain
jump-Markov PHD recursion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import logsumexp

from . import kernels
from .components import (BirthModel, GaussianTrajectory, ModelHypothesis,
                         PhdState, TrajectoryComponent,
                         make_birth_components, merge_hypothesis_group)
from .models import (MEAS_DIM, POSITION_IDX, STATE_DIM, ClassRegistry,
                     ClutterModel, ConfigurationError, InvalidParameterError,
                     SensorModel, clutter_intensity_batch,
                     jacobian_at_positions, observe_positions)

PAIR_EXACT = "pair-exact"
IMM_MERGE = "imm-merge"


@dataclass(frozen=True, slots=True)
class FilterConfig:
    """Recursion parameters.

    ``l_scan=None`` keeps the joint Gaussian over the whole trajectory
    (no windowing).  ``model_merge`` selects whether the model bank keeps
    one hypothesis per (previous, current) model pair or moment-matches
    per current model after prediction.
    """

    l_scan: int | None = 5
    prune_threshold: float = 1e-5
    absorb_threshold: float = 4.0
    max_components: int = 50
    model_merge: str = PAIR_EXACT
    extract_mode: str = "top-n"

    def __post_init__(self):
        if self.l_scan is not None and self.l_scan < 1:
            raise InvalidParameterError("l_scan must be >= 1 (or None)")
        if self.prune_threshold < 0:
            raise InvalidParameterError("prune_threshold must be >= 0")
        if self.absorb_threshold <= 0:
            raise InvalidParameterError("absorb_threshold must be > 0")
        if self.max_components < 1:
            raise InvalidParameterError("max_components must be >= 1")
        if self.model_merge not in (PAIR_EXACT, IMM_MERGE):
            raise InvalidParameterError(f"unknown model_merge {self.model_merge!r}")
        if self.extract_mode not in ("top-n", "threshold"):
            raise InvalidParameterError(f"unknown extract_mode {self.extract_mode!r}")


@dataclass(frozen=True, slots=True)
class TrajectoryEstimate:
    """One reported trajectory: smoothed states plus the class verdict."""

    birth: int
    length: int
    states: np.ndarray          # (length, 6)
    class_id: str
    class_prob: float
    weight: float


@dataclass(slots=True)
class UpdateDiagnostics:
    """Counters the update increments instead of aborting a scan."""

    singular_hypotheses: int = 0


@dataclass(frozen=True, slots=True)
class MeasurementFrame:
    """One scan: unordered measurements, optionally with truth provenance.

    ``provenance[i]`` is the originating target id or None for clutter; it
    exists for tests and diagnostics only and is never read by the filter.
    """

    time: int
    measurements: np.ndarray
    provenance: tuple | None = None

    def __post_init__(self):
        z = np.asarray(self.measurements, dtype=float).reshape(-1, MEAS_DIM)
        object.__setattr__(self, "measurements", z)
        if self.provenance is not None and len(self.provenance) != z.shape[0]:
            raise InvalidParameterError("provenance length != measurement count")


# ---------------------------------------------------------------------------
# Scan window
# ---------------------------------------------------------------------------

def lscan_window(g: GaussianTrajectory, window: int | None
                 ) -> tuple[np.ndarray, GaussianTrajectory]:
    """Split a trajectory Gaussian into frozen prefix and active suffix.

    With ``window`` of L, the first length-L states become fixed point
    estimates (an (n, 6) array, possibly empty) and the joint Gaussian is
    kept only over the trailing ``min(length, L)`` states.
    """
    if window is not None and window < 1:
        raise InvalidParameterError("window must be >= 1 (or None)")
    active = g.active_len if window is None else min(g.active_len, window)
    n_frozen = g.length - active
    frozen = g.mean[: n_frozen * STATE_DIM].reshape(n_frozen, STATE_DIM)
    suffix = GaussianTrajectory(
        birth=g.birth + n_frozen,
        mean=g.mean[n_frozen * STATE_DIM:],
        cov=np.ascontiguousarray(g.cov[-active * STATE_DIM:, -active * STATE_DIM:]),
    )
    return frozen, suffix


# ---------------------------------------------------------------------------
# Prediction
# ---------------------------------------------------------------------------

def predict(state: PhdState, birth: BirthModel | None, classes: ClassRegistry,
            cfg: FilterConfig) -> PhdState:
    """Advance the mixture one step: survival scaling, pair-expanded model
    switching, trajectory-block prediction and birth injection.

    Per surviving component the class weight is scaled by p_S(c); every
    bank hypothesis with previous model r is expanded over current models
    r' with weight w_r(r) f(r' | r), appending the state F(r') m_last and
    the covariance blocks P1 = P[:, last] F', P2 = F P[last,last] F' + Q.
    Class labels never change.
    """
    k = state.time + 1
    out: dict[str, list[TrajectoryComponent]] = {}
    for cid, comps in state.components.items():
        spec = classes.get(cid)
        if spec is None:
            raise ConfigurationError(f"class {cid!r} missing from the registry")
        if comps:
            out[cid] = _predict_class(list(comps), spec, cfg)
    if birth is not None:
        for comp in make_birth_components(birth, k):
            out.setdefault(comp.class_id, []).append(comp)
    return PhdState(time=k, components={c: tuple(v) for c, v in out.items()})


def _predict_class(comps, spec, cfg: FilterConfig):
    """Batched prediction of one class's components."""
    n_models = len(spec.models)
    fs = [m.transition for m in spec.models]
    qs = [m.noise for m in spec.models]
    switch = spec.switch
    model_idx = {m.id: i for i, m in enumerate(spec.models)}
    l6 = None if cfg.l_scan is None else cfg.l_scan * STATE_DIM

    rows = []                      # (comp_idx, hypothesis)
    for j, comp in enumerate(comps):
        for hyp in comp.bank:
            rows.append((j, hyp))

    # batch covariance/last-state math per active-window size
    by_dim: dict[int, list[int]] = {}
    for ridx, (_, hyp) in enumerate(rows):
        by_dim.setdefault(hyp.gauss.cov.shape[0], []).append(ridx)

    # per row and new-model index: appended full mean and cropped new cov
    new_mean = [None] * len(rows)  # (n_models, old_len + 6) per row
    new_cov = [[None] * n_models for _ in rows]
    for d, ridxs in by_dim.items():
        covs = np.stack([rows[r][1].gauss.cov for r in ridxs])
        lasts = np.stack([rows[r][1].gauss.mean[-STATE_DIM:] for r in ridxs])
        pls = []
        for mi in range(n_models):
            f, q = fs[mi], qs[mi]
            p1 = covs[:, :, -STATE_DIM:] @ f.T
            corner = covs[:, -STATE_DIM:, -STATE_DIM:]
            p2 = np.einsum("ij,bjk,lk->bil", f, corner, f) + q
            big = np.empty((len(ridxs), d + STATE_DIM, d + STATE_DIM))
            big[:, :d, :d] = covs
            big[:, :d, d:] = p1
            big[:, d:, :d] = p1.transpose(0, 2, 1)
            big[:, d:, d:] = p2
            big = 0.5 * (big + big.transpose(0, 2, 1))
            if l6 is not None and big.shape[1] > l6:
                big = np.ascontiguousarray(big[:, -l6:, -l6:])
            pls.append(lasts @ f.T)
            for local, r in enumerate(ridxs):
                new_cov[r][mi] = big[local]
        for local, r in enumerate(ridxs):
            old = rows[r][1].gauss.mean
            means = np.empty((n_models, old.size + STATE_DIM))
            means[:, : old.size] = old
            for mi in range(n_models):
                means[mi, old.size:] = pls[mi][local]
            new_mean[r] = means

    out = []
    for j, comp in enumerate(comps):
        ridxs = [r for r, (cj, _) in enumerate(rows) if cj == j]
        pairs = []                 # (weight, new-model index, hypothesis row)
        for r in ridxs:
            hyp = rows[r][1]
            pi = model_idx[hyp.model]
            for mi in range(n_models):
                w = hyp.weight * switch[pi, mi]
                g = GaussianTrajectory(hyp.gauss.birth, new_mean[r][mi],
                                       new_cov[r][mi])
                pairs.append((w, mi, ModelHypothesis(
                    model=spec.models[mi].id, weight=w, gauss=g,
                    prev_model=hyp.model)))
        if cfg.model_merge == IMM_MERGE:
            bank = []
            for mi in range(n_models):
                group = [(w, h) for w, gmi, h in pairs if gmi == mi]
                if group and sum(w for w, _ in group) > 0:
                    bank.append(merge_hypothesis_group(group))
                elif group:
                    bank.append(replace(group[0][1], weight=0.0, prev_model=None))
        else:
            bank = [h for _, _, h in pairs]
        out.append(TrajectoryComponent(class_id=comp.class_id,
                                       weight=spec.p_survive * comp.weight,
                                       bank=tuple(bank)))
    return out


# ---------------------------------------------------------------------------
# Update
# ---------------------------------------------------------------------------

def update(state: PhdState, frame: MeasurementFrame, sensor: SensorModel,
           clutter: ClutterModel, classes: ClassRegistry,
           diag: UpdateDiagnostics | None = None,
           component_floor: float = 0.0) -> PhdState:
    """Measurement update of the whole mixture.

    Output components are the misdetection copies (class weight scaled by
    1 - p_D, Gaussians untouched) followed, measurement-major, by one
    component per (measurement, prior component) pair whose posterior
    weight exceeds ``component_floor``.  The floor defaults to zero so the
    full posterior is returned; :func:`step` passes the pruning threshold
    since sub-threshold terms are dropped by the subsequent reduction
    anyway.

    Model hypotheses with a singular innovation covariance (or an
    undefined linearization) are skipped for every measurement and counted
    in ``diag`` instead of aborting the scan.
    """
    if frame.time != state.time:
        raise InvalidParameterError(
            f"frame time {frame.time} != state time {state.time}")
    z = frame.measurements
    m = z.shape[0]
    periods = sensor.wrap_periods
    r = sensor.noise

    class_ids = [cid for cid, comps in state.components.items() if comps]
    per_class = {}
    log_terms = []                 # stacked log(p_D w_c phi) rows, fixed order
    for cid in class_ids:
        comps = list(state.components[cid])
        spec = classes.get(cid)
        if spec is None:
            raise ConfigurationError(f"class {cid!r} missing from the registry")
        data = _class_update_stats(comps, spec, sensor, z, periods, r, diag)
        per_class[cid] = data
        log_terms.append(data["log_pwphi"])

    if m and log_terms:
        log_delta = logsumexp(np.concatenate(log_terms, axis=0), axis=0)
    else:
        log_delta = np.full(m, -np.inf)
    kappa = clutter_intensity_batch(z, clutter) if m else np.zeros(0)
    with np.errstate(divide="ignore"):
        log_denom = np.logaddexp(np.log(kappa), log_delta)

    out: dict[str, tuple[TrajectoryComponent, ...]] = {}
    for cid in class_ids:
        comps = list(state.components[cid])
        spec = classes[cid]
        data = per_class[cid]
        new_comps: list[TrajectoryComponent] = []
        one_minus_pd = 1.0 - spec.p_detect
        for comp in comps:
            w = one_minus_pd * comp.weight
            if component_floor == 0.0 or w >= component_floor:
                new_comps.append(replace(comp, weight=w))
        for zi in range(m):
            if not np.isfinite(log_denom[zi]):
                continue
            for j, comp in enumerate(comps):
                lw = data["log_pwphi"][j, zi] - log_denom[zi]
                if lw == -np.inf:
                    continue
                w_post = math.exp(lw)
                if w_post <= 0.0 or w_post < component_floor:
                    continue
                new_comps.append(_posterior_component(comp, data, j, zi, w_post))
        out[cid] = tuple(new_comps)
    return PhdState(time=state.time, components=out)


def _wrap_innovation(nu: np.ndarray, periods: np.ndarray) -> np.ndarray:
    for dim in range(periods.size):
        p = periods[dim]
        if p > 0.0:
            nu[..., dim] -= p * np.round(nu[..., dim] / p)
    return nu


def _segment_logsumexp(a: np.ndarray, starts: np.ndarray) -> np.ndarray:
    """Row-segment logsumexp of a (rows, m) matrix; segments are contiguous
    row ranges beginning at ``starts``."""
    mx = np.maximum.reduceat(a, starts, axis=0)
    finite = np.isfinite(mx)
    safe = np.where(finite, mx, 0.0)
    reps = np.diff(np.append(starts, a.shape[0]))
    with np.errstate(invalid="ignore", divide="ignore"):
        s = np.add.reduceat(np.exp(a - np.repeat(safe, reps, axis=0)),
                            starts, axis=0)
        out = safe + np.log(s)
    out[~finite] = -np.inf
    return out


def _class_update_stats(comps, spec, sensor, z, periods, r, diag):
    """Innovation statistics, log-likelihoods and posterior pieces for one
    class; everything indexed by flattened (component-major) bank rows."""
    rows = []
    starts = []
    for comp in comps:
        starts.append(len(rows))
        rows.extend(comp.bank)
    n_rows = len(rows)
    n_comps = len(comps)
    m = z.shape[0]
    starts = np.asarray(starts, dtype=np.intp)

    logq = np.full((n_rows, m), -np.inf)
    ks_store: list = [None] * n_rows
    pus_store: list = [None] * n_rows
    wins_store: list = [None] * n_rows
    zbars_all = np.zeros((n_rows, MEAS_DIM))

    by_dim: dict[int, list[int]] = {}
    for ridx, hyp in enumerate(rows):
        by_dim.setdefault(hyp.gauss.cov.shape[0], []).append(ridx)
    for d, ridxs in by_dim.items():
        covs = np.stack([rows[ri].gauss.cov for ri in ridxs])
        wins = np.stack([rows[ri].gauss.mean[-d:] for ri in ridxs])
        lasts = wins[:, -STATE_DIM:]
        if sensor.mode == "ekf":
            pos = lasts[:, list(POSITION_IDX)]
            zbars = observe_positions(pos)
            hs = jacobian_at_positions(pos)
        else:
            zbars = lasts @ sensor.matrix.T
            hs = np.ascontiguousarray(
                np.broadcast_to(sensor.matrix, (len(ridxs), MEAS_DIM, STATE_DIM)))
        _, s_invs, ks, pus, logdets, oks = kernels.innovation_batch(covs, hs, r)
        if diag is not None:
            diag.singular_hypotheses += int(np.count_nonzero(~oks))
        if m:
            logq[ridxs] = kernels.loglik_batch(z, zbars, s_invs, logdets, oks,
                                               periods)
        zbars_all[ridxs] = zbars
        for local, ri in enumerate(ridxs):
            ks_store[ri] = ks[local]
            pus_store[ri] = pus[local]
            wins_store[ri] = wins[local]

    with np.errstate(divide="ignore"):
        log_wr = np.log(np.array([h.weight for h in rows]))
        log_wc = np.log(np.array([c.weight for c in comps]))
        log_pd = math.log(spec.p_detect) if spec.p_detect > 0 else -np.inf
    if m:
        log_phi = _segment_logsumexp(logq + log_wr[:, None], starts)
        # wrapped innovations for every (hypothesis, measurement) pair
        nus = _wrap_innovation(z[None, :, :] - zbars_all[:, None, :], periods)
    else:
        log_phi = np.full((n_comps, m), -np.inf)
        nus = np.zeros((n_rows, 0, MEAS_DIM))
    log_pwphi = log_pd + log_wc[:, None] + log_phi

    ends = np.append(starts[1:], n_rows)
    return {
        "rows": rows, "starts": starts, "ends": ends, "logq": logq,
        "log_wr": log_wr, "log_phi": log_phi, "log_pwphi": log_pwphi,
        "ks": ks_store, "pus": pus_store, "wins": wins_store, "nus": nus,
    }


def _posterior_component(comp, data, j, zi, w_post):
    """Assemble the updated component for (prior component j, measurement zi);
    posterior window means are materialized here, only for survivors."""
    lphi = data["log_phi"][j, zi]
    bank = []
    for ri in range(data["starts"][j], data["ends"][j]):
        hyp = data["rows"][ri]
        lbw = data["log_wr"][ri] + data["logq"][ri, zi] - lphi
        bw = math.exp(lbw) if lbw > -np.inf else 0.0
        if bw > 0.0:
            win = data["wins"][ri] + data["ks"][ri] @ data["nus"][ri, zi]
            full = hyp.gauss.mean.copy()
            full[-win.size:] = win
            g = GaussianTrajectory(hyp.gauss.birth, full, data["pus"][ri])
        else:
            g = hyp.gauss
        bank.append(ModelHypothesis(model=hyp.model, weight=bw, gauss=g,
                                    prev_model=hyp.prev_model))
    return TrajectoryComponent(class_id=comp.class_id, weight=w_post,
                               bank=tuple(bank))


# ---------------------------------------------------------------------------
# Reduction: prune, absorb, cap
# ---------------------------------------------------------------------------

def reduce_mixture(state: PhdState, cfg: FilterConfig) -> PhdState:
    """Prune low-weight terms, absorb near-duplicate components and cap the
    per-class component count.

    Pruning gates both the component weights and, with renormalization,
    the bank weights.  Absorption merges components that share (class,
    birth, length) and whose current-state means fall within the
    Mahalanobis-squared gate of a higher-weight pivot, measured in the
    candidate's own bank-merged current-state covariance; banks are merged
    model-id-wise, discarding pair provenance.
    """
    out: dict[str, tuple[TrajectoryComponent, ...]] = {}
    for cid, comps in state.components.items():
        kept = []
        for comp in comps:
            if comp.weight < cfg.prune_threshold:
                continue
            kept.append(_prune_bank(comp, cfg.prune_threshold))
        merged = _absorb(kept, cfg.absorb_threshold)
        if len(merged) > cfg.max_components:
            ranked = sorted(range(len(merged)),
                            key=lambda i: (-merged[i].weight, merged[i].birth, i))
            keep = set(ranked[: cfg.max_components])
            merged = [c for i, c in enumerate(merged) if i in keep]
        out[cid] = tuple(merged)
    return PhdState(time=state.time, components=out)


def _prune_bank(comp: TrajectoryComponent, threshold: float) -> TrajectoryComponent:
    bank = [h for h in comp.bank if h.weight >= threshold]
    if not bank:
        # all entries sub-threshold (possible only for extreme thresholds):
        # keep the single best hypothesis
        bank = [max(comp.bank, key=lambda h: h.weight)]
    if len(bank) == len(comp.bank):
        total = sum(h.weight for h in comp.bank)
        if abs(total - 1.0) < 1e-12:
            return comp
    else:
        total = sum(h.weight for h in bank)
    bank = [replace(h, weight=h.weight / total) for h in bank]
    return replace(comp, bank=tuple(bank))


def _absorb(comps: list[TrajectoryComponent], gate: float
            ) -> list[TrajectoryComponent]:
    """Greedy absorption within groups sharing (birth, length)."""
    by_birth: dict[tuple[int, int], list[int]] = {}
    for i, c in enumerate(comps):
        by_birth.setdefault((c.birth, c.length), []).append(i)
    merged: list[tuple[int, TrajectoryComponent]] = []
    for key in by_birth:
        pool = by_birth[key]
        moments = {i: comps[i].last_state_moments() for i in pool}
        while pool:
            pivot = min(pool, key=lambda i: (-comps[i].weight, i))
            pm = moments[pivot][0]
            group = []
            rest = []
            for i in pool:
                if i == pivot:
                    group.append(i)
                    continue
                mean_i, cov_i = moments[i]
                diff = mean_i - pm
                try:
                    d2 = float(diff @ np.linalg.solve(cov_i, diff))
                except np.linalg.LinAlgError:
                    d2 = np.inf
                (group if d2 <= gate else rest).append(i)
            merged.append((pivot, _merge_components([comps[i] for i in group])))
            pool = rest
    merged.sort(key=lambda t: t[0])
    return [c for _, c in merged]


def _merge_components(group: list[TrajectoryComponent]) -> TrajectoryComponent:
    if len(group) == 1:
        return group[0]
    total = sum(c.weight for c in group)
    by_model: dict[str, list[tuple[float, ModelHypothesis]]] = {}
    order: list[str] = []
    for c in group:
        for h in c.bank:
            if h.model not in by_model:
                by_model[h.model] = []
                order.append(h.model)
            by_model[h.model].append((c.weight * h.weight, h))
    bank = []
    for mid in order:
        entries = by_model[mid]
        gw = sum(w for w, _ in entries)
        if gw <= 0.0:
            continue
        h = merge_hypothesis_group(entries)
        bank.append(replace(h, weight=h.weight / total))
    return TrajectoryComponent(class_id=group[0].class_id, weight=total,
                               bank=tuple(bank))


# ---------------------------------------------------------------------------
# Extraction
# ---------------------------------------------------------------------------

def extract(state: PhdState, cfg: FilterConfig | None = None
            ) -> list[TrajectoryEstimate]:
    """Report trajectories: round the total mass to get the target count and
    emit that many components in descending weight order.

    Each estimate's states are the bank-weighted trajectory mean; its class
    is the class of the winning component and ``class_prob`` is that
    component's weight share against its best-matching counterparts (same
    birth time, nearest current position) in the other classes.
    """
    cands = []
    for cid, comps in state.components.items():
        for comp in comps:
            cands.append(comp)
    if not cands:
        return []
    ranked = sorted(range(len(cands)),
                    key=lambda i: (-cands[i].weight, cands[i].birth, i))
    if cfg is not None and cfg.extract_mode == "threshold":
        selected = [i for i in ranked if cands[i].weight > 0.5]
    else:
        n_hat = int(math.floor(sum(c.weight for c in cands) + 0.5))
        selected = ranked[: n_hat]

    by_class_birth: dict[tuple[str, int], list[TrajectoryComponent]] = {}
    for comp in cands:
        by_class_birth.setdefault((comp.class_id, comp.birth), []).append(comp)

    out = []
    pos_idx = list(POSITION_IDX)
    for i in selected:
        comp = cands[i]
        mean = comp.mean_trajectory()
        pos = mean[-STATE_DIM:][pos_idx]
        denom = comp.weight
        for cid in state.components:
            if cid == comp.class_id:
                continue
            twins = by_class_birth.get((cid, comp.birth), ())
            if not twins:
                continue
            best = min(twins, key=lambda c: float(np.linalg.norm(
                c.mean_trajectory()[-STATE_DIM:][pos_idx] - pos)))
            denom += best.weight
        out.append(TrajectoryEstimate(
            birth=comp.birth, length=comp.length,
            states=mean.reshape(comp.length, STATE_DIM),
            class_id=comp.class_id,
            class_prob=comp.weight / denom if denom > 0 else 1.0,
            weight=comp.weight))
    return out


# ---------------------------------------------------------------------------
# One full recursion step
# ---------------------------------------------------------------------------

def step(state: PhdState, frame: MeasurementFrame, birth: BirthModel | None,
         sensor: SensorModel, clutter: ClutterModel, classes: ClassRegistry,
         cfg: FilterConfig, diag: UpdateDiagnostics | None = None
         ) -> tuple[PhdState, list[TrajectoryEstimate]]:
    """predict -> update -> reduce -> extract for one scan."""
    if frame.time != state.time + 1:
        raise InvalidParameterError(
            f"frame time {frame.time} != state time {state.time} + 1")
    predicted = predict(state, birth, classes, cfg)
    updated = update(predicted, frame, sensor, clutter, classes, diag=diag,
                     component_floor=cfg.prune_threshold)
    reduced = reduce_mixture(updated, cfg)
    return reduced, extract(reduced, cfg)
