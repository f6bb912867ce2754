"""Scenario simulation and the Monte Carlo driver.

Ground truth is propagated noiselessly (x' = F(r) x with the model sequence
either sampled from the class's switch chain or given explicitly); process
noise only models filter uncertainty.  Every random concern (maneuver
sampling, detection gating, measurement noise, clutter, frame ordering)
draws from its own seed-derived stream so toggling one concern never shifts
the draws of another.
"""

from __future__ import annotations

import math
import time as _time
from dataclasses import dataclass

import numpy as np

from . import metrics as _metrics
from .components import BirthModel, empty_state
from .filter import (FilterConfig, MeasurementFrame, TrajectoryEstimate,
                     UpdateDiagnostics, step)
from .models import (MEAS_DIM, STATE_DIM, ClassRegistry, ClutterModel,
                     ConfigurationError, SensorModel, SingularGeometryError,
                     observe)

_U64 = (1 << 64) - 1

# fixed labels of the per-concern random streams
_MANEUVER, _DETECT, _NOISE, _CLUTTER, _ORDER = 11, 12, 13, 14, 15


def _stream(seed: int, concern: int, *extra: int) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence((int(seed) & _U64, concern) + tuple(extra)))


def run_seed(master_seed: int, run_index: int) -> int:
    """Per-run seed fan-out: master XOR run index."""
    return (int(master_seed) ^ int(run_index)) & _U64


@dataclass(frozen=True, slots=True)
class TargetSpec:
    """One scripted target of a scenario."""

    target_id: str
    class_id: str
    birth_time: int
    death_time: int
    initial_state: np.ndarray
    maneuver: str | tuple[str, ...] = "markov"


@dataclass(frozen=True, slots=True)
class ScenarioConfig:
    """A complete, self-contained experiment description."""

    duration: int
    dt: float
    targets: tuple[TargetSpec, ...]
    classes: ClassRegistry
    sensor: SensorModel
    clutter: ClutterModel
    birth: BirthModel
    seed: int
    truth_per_run: str = "regenerate"

    def validate(self) -> None:
        if self.duration < 1:
            raise ConfigurationError("duration must be >= 1")
        if self.truth_per_run not in ("regenerate", "fixed"):
            raise ConfigurationError(
                f"unknown truth_per_run {self.truth_per_run!r}")
        for t in self.targets:
            if t.class_id not in self.classes:
                raise ConfigurationError(
                    f"target {t.target_id!r} has unknown class {t.class_id!r}")
            if not (1 <= t.birth_time <= t.death_time <= self.duration):
                raise ConfigurationError(
                    f"target {t.target_id!r} has bad lifetime "
                    f"[{t.birth_time}, {t.death_time}] for K={self.duration}")
            state = np.asarray(t.initial_state, dtype=float)
            if state.shape != (STATE_DIM,):
                raise ConfigurationError(
                    f"target {t.target_id!r} initial state must be 6-dim")
            if isinstance(t.maneuver, tuple):
                spec = self.classes[t.class_id]
                ids = set(spec.model_ids)
                if len(t.maneuver) != t.death_time - t.birth_time:
                    raise ConfigurationError(
                        f"target {t.target_id!r} schedule must have "
                        f"{t.death_time - t.birth_time} entries")
                for mid in t.maneuver:
                    if mid not in ids:
                        raise ConfigurationError(
                            f"target {t.target_id!r} schedule uses unknown "
                            f"model {mid!r}")
            elif t.maneuver != "markov":
                raise ConfigurationError(
                    f"target {t.target_id!r} maneuver must be 'markov' or a "
                    "model-id schedule")


@dataclass(frozen=True, slots=True)
class TruthTrajectory:
    """True track: class, lifetime, state sequence and model sequence.

    ``models[i]`` is the model applied on the transition into step
    birth_time + i + 1 (length death - birth entries).
    """

    target_id: str
    class_id: str
    birth: int
    death: int
    states: np.ndarray             # (death - birth + 1, 6)
    models: tuple[str, ...]

    def alive(self, t: int) -> bool:
        return self.birth <= t <= self.death

    def state_at(self, t: int) -> np.ndarray:
        return self.states[t - self.birth]


@dataclass(frozen=True, slots=True)
class GroundTruth:
    targets: tuple[TruthTrajectory, ...]

    def alive_at(self, t: int) -> list[TruthTrajectory]:
        return [tr for tr in self.targets if tr.alive(t)]

    def count_by_class(self, class_ids, duration: int) -> dict[str, np.ndarray]:
        out = {cid: np.zeros(duration, dtype=int) for cid in class_ids}
        for tr in self.targets:
            out[tr.class_id][tr.birth - 1: tr.death] += 1
        return out


def generate_truth(cfg: ScenarioConfig, seed: int | None = None) -> GroundTruth:
    """Deterministic ground truth for a scenario (and optional seed override)."""
    cfg.validate()
    base = cfg.seed if seed is None else seed
    trajectories = []
    for i, t in enumerate(cfg.targets):
        spec = cfg.classes[t.class_id]
        n_steps = t.death_time - t.birth_time
        if isinstance(t.maneuver, tuple):
            models = list(t.maneuver)
        else:
            rng = _stream(base, _MANEUVER, i)
            n = len(spec.models)
            cur = int(rng.integers(n))
            models = []
            for _ in range(n_steps):
                cur = int(rng.choice(n, p=spec.switch[cur]))
                models.append(spec.model_ids[cur])
        states = np.empty((n_steps + 1, STATE_DIM))
        states[0] = np.asarray(t.initial_state, dtype=float)
        for s, mid in enumerate(models):
            f = spec.models[spec.model_index(mid)].transition
            states[s + 1] = f @ states[s]
        trajectories.append(TruthTrajectory(
            target_id=t.target_id, class_id=t.class_id, birth=t.birth_time,
            death=t.death_time, states=states, models=tuple(models)))
    return GroundTruth(targets=tuple(trajectories))


def generate_frame(truth: GroundTruth, t: int, sensor: SensorModel,
                   clutter: ClutterModel, classes: ClassRegistry,
                   seed: int) -> MeasurementFrame:
    """One scan of measurements: detections plus clutter, order shuffled.

    A target sitting exactly at the sensor origin has no defined
    observation and is treated as undetectable for that scan.
    """
    det_rng = _stream(seed, _DETECT, t)
    noise_rng = _stream(seed, _NOISE, t)
    clut_rng = _stream(seed, _CLUTTER, t)
    order_rng = _stream(seed, _ORDER, t)

    chol = np.linalg.cholesky(sensor.noise) if np.any(sensor.noise) else None
    rows = []
    prov = []
    for tr in truth.targets:
        if not tr.alive(t):
            continue
        detected = det_rng.random() < classes[tr.class_id].p_detect
        if not detected:
            continue
        state = tr.state_at(t)
        try:
            if sensor.mode == "ekf":
                z = observe(state)
            else:
                z = sensor.matrix @ state
        except SingularGeometryError:
            continue
        if chol is not None:
            z = z + chol @ noise_rng.standard_normal(MEAS_DIM)
        if sensor.mode == "ekf":
            z = z.copy()
            z[0] = math.remainder(z[0], 2.0 * math.pi)
        rows.append(z)
        prov.append(tr.target_id)

    n_clutter = int(clut_rng.poisson(clutter.rate))
    if n_clutter:
        b = clutter.bounds
        c = clut_rng.random((n_clutter, MEAS_DIM)) * (b[:, 1] - b[:, 0]) + b[:, 0]
        rows.extend(c)
        prov.extend([None] * n_clutter)

    z = np.asarray(rows, dtype=float).reshape(-1, MEAS_DIM)
    perm = order_rng.permutation(z.shape[0])
    return MeasurementFrame(time=t, measurements=z[perm],
                            provenance=tuple(prov[i] for i in perm))


# ---------------------------------------------------------------------------
# Monte Carlo driver
# ---------------------------------------------------------------------------

@dataclass(frozen=True, slots=True)
class RunRecord:
    """Everything retained from one Monte Carlo pass."""

    run: int
    seed: int
    tm: np.ndarray                         # (K,) trajectory metric error
    card_est: dict[str, np.ndarray]        # per class, (K,) estimated count
    card_true: dict[str, np.ndarray]       # per class, (K,) true count
    class_acc: dict[str, np.ndarray]       # per class, (K,) matched accuracy
    matched_class: dict[str, list]         # target id -> per-scan class or None
    est_rows: list                         # per-scan estimate summary tuples
    final_estimates: list[TrajectoryEstimate]
    wall_seconds: float
    singular_hypotheses: int


@dataclass(frozen=True, slots=True)
class RunResults:
    records: tuple[RunRecord, ...]

    @property
    def duration(self) -> int:
        return self.records[0].tm.size

    def mean_tm(self) -> np.ndarray:
        return np.mean(np.stack([r.tm for r in self.records]), axis=0)

    def rms_tm(self) -> np.ndarray:
        return np.sqrt(np.mean(np.stack([r.tm for r in self.records]) ** 2,
                               axis=0))

    def mean_card(self) -> dict[str, np.ndarray]:
        cids = self.records[0].card_est.keys()
        return {c: np.mean(np.stack([r.card_est[c] for r in self.records]),
                           axis=0) for c in cids}

    def true_card(self) -> dict[str, np.ndarray]:
        cids = self.records[0].card_true.keys()
        return {c: np.mean(np.stack([r.card_true[c] for r in self.records]),
                           axis=0) for c in cids}

    def mean_acc(self) -> dict[str, np.ndarray]:
        cids = self.records[0].class_acc.keys()
        out = {}
        with np.errstate(invalid="ignore"):
            for c in cids:
                out[c] = np.nanmean(
                    np.stack([r.class_acc[c] for r in self.records]), axis=0)
        return out

    def mean_wall_seconds(self) -> float:
        return float(np.mean([r.wall_seconds for r in self.records]))


def run_single(scenario: ScenarioConfig, fcfg: FilterConfig, run_index: int,
               metric_cfg: "_metrics.MetricConfig | None" = None,
               frames: list[MeasurementFrame] | None = None,
               truth: GroundTruth | None = None) -> RunRecord:
    """One full tracking pass; the unit the Monte Carlo driver repeats."""
    seed = run_seed(scenario.seed, run_index)
    if truth is None:
        t_seed = scenario.seed if scenario.truth_per_run == "fixed" else seed
        truth = generate_truth(scenario, seed=t_seed)
    if metric_cfg is None:
        metric_cfg = _metrics.MetricConfig()

    class_ids = list(scenario.classes.keys())
    diag = UpdateDiagnostics()
    state = empty_state(0)
    per_scan: list[list[TrajectoryEstimate]] = []
    est_rows = []
    wall = 0.0
    for t in range(1, scenario.duration + 1):
        if frames is not None:
            frame = frames[t - 1]
        else:
            frame = generate_frame(truth, t, scenario.sensor, scenario.clutter,
                                   scenario.classes, seed)
        t0 = _time.perf_counter()
        state, ests = step(state, frame, scenario.birth, scenario.sensor,
                           scenario.clutter, scenario.classes, fcfg, diag=diag)
        wall += _time.perf_counter() - t0
        per_scan.append(ests)
        for idx, e in enumerate(ests):
            est_rows.append((t, idx, e.birth, e.length, e.class_id,
                             e.class_prob, e.weight, tuple(e.states[-1])))

    tm = _metrics.trajectory_metric(per_scan, truth, metric_cfg)
    card_est, card_true = _metrics.cardinality_stats(per_scan, truth, class_ids,
                                                     scenario.duration)
    acc = _metrics.classification_accuracy(per_scan, truth, tm.matchings,
                                           class_ids)
    matched = _metrics.matched_class_by_target(per_scan, truth, tm.matchings)
    return RunRecord(run=run_index, seed=seed, tm=tm.errors, card_est=card_est,
                     card_true=card_true, class_acc=acc, matched_class=matched,
                     est_rows=est_rows, final_estimates=per_scan[-1],
                     wall_seconds=wall,
                     singular_hypotheses=diag.singular_hypotheses)


def _run_single_payload(payload) -> RunRecord:
    scenario, fcfg, metric_cfg, run_index = payload
    return run_single(scenario, fcfg, run_index, metric_cfg=metric_cfg)


def run_monte_carlo(scenario: ScenarioConfig, fcfg: FilterConfig, runs: int,
                    metric_cfg: "_metrics.MetricConfig | None" = None,
                    workers: int = 1) -> RunResults:
    """Repeat :func:`run_single` over seed-fanned runs, optionally in a
    process pool; aggregation is indexed by run so worker count never
    changes the result."""
    if runs < 1:
        raise ConfigurationError("runs must be >= 1")
    scenario.validate()
    payloads = [(scenario, fcfg, metric_cfg, r) for r in range(runs)]
    if workers > 1 and runs > 1:
        import concurrent.futures as cf

        with cf.ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_run_single_payload, payloads))
    else:
        records = [_run_single_payload(p) for p in payloads]
    return RunResults(records=tuple(records))
