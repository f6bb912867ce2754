"""Scenario/filter/metric configuration: one JSON document per experiment.

The loader resolves defaults, validates every section with a path-qualified
diagnostic, builds the typed objects, and hashes a canonicalized resolved
form so semantically identical files (reordered keys, alternative noise
spellings) share a digest.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .components import BirthEntry, BirthModel
from .filter import FilterConfig
from .metrics import MetricConfig
from .models import (STATE_DIM, ClutterModel, ConfigurationError,
                     InvalidParameterError, MotionModel, SensorModel,
                     TargetClassSpec, cv_transition, ct_transition,
                     process_noise)
from .simulator import ScenarioConfig, TargetSpec


@dataclass(frozen=True, slots=True)
class LoadedConfig:
    scenario: ScenarioConfig
    filter_cfg: FilterConfig
    metric_cfg: MetricConfig
    digest: str
    resolved: dict


def load_config(path: str | Path) -> LoadedConfig:
    """Parse and validate a configuration file."""
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {p}: {exc}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(
            f"{p}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return parse_config(raw)


def _require(section: dict, key: str, where: str):
    if key not in section:
        raise ConfigurationError(f"{where}: missing required key {key!r}")
    return section[key]


def parse_config(raw: dict) -> LoadedConfig:
    """Build the typed configuration from a parsed JSON document."""
    if not isinstance(raw, dict):
        raise ConfigurationError("config root must be an object")
    try:
        return _parse(raw)
    except (InvalidParameterError, ConfigurationError):
        raise
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigurationError(f"malformed config: {exc}") from exc


def _parse(raw: dict) -> LoadedConfig:
    scn = _require(raw, "scenario", "config")
    duration = int(_require(scn, "duration", "scenario"))
    if duration < 1:
        raise ConfigurationError("scenario.duration must be >= 1")
    dt = float(scn.get("dt", 1.0))
    if not (math.isfinite(dt) and dt > 0):
        raise ConfigurationError("scenario.dt must be finite and > 0")
    seed = int(scn.get("seed", 0))
    truth_per_run = str(scn.get("truth_per_run", "regenerate"))

    classes = {}
    for cid, spec in _require(raw, "classes", "config").items():
        classes[str(cid)] = _parse_class(str(cid), spec, dt)

    sensor = _parse_sensor(raw.get("sensor", {}))
    clutter = _parse_clutter(raw.get("clutter", {}))
    birth = _parse_birth(raw.get("birth", []), classes)
    targets = tuple(_parse_target(i, t, classes)
                    for i, t in enumerate(scn.get("targets", [])))

    scenario = ScenarioConfig(duration=duration, dt=dt, targets=targets,
                              classes=classes, sensor=sensor, clutter=clutter,
                              birth=birth, seed=seed,
                              truth_per_run=truth_per_run)
    scenario.validate()

    f = raw.get("filter", {})
    l_scan = f.get("l_scan", 5)
    filter_cfg = FilterConfig(
        l_scan=None if l_scan is None else int(l_scan),
        prune_threshold=float(f.get("prune_threshold", 1e-5)),
        absorb_threshold=float(f.get("absorb_threshold", 4.0)),
        max_components=int(f.get("max_components", 50)),
        model_merge=str(f.get("model_merge", "pair-exact")),
        extract_mode=str(f.get("extract_mode", "top-n")))

    m = raw.get("metric", {})
    metric_cfg = MetricConfig(order=float(m.get("order", 2.0)),
                              cutoff=float(m.get("cutoff", 100.0)),
                              switch_cost=float(m.get("switch_cost", 1.0)),
                              use_velocity=bool(m.get("use_velocity", False)))

    resolved = _canonical(scenario, filter_cfg, metric_cfg)
    digest = hashlib.sha256(
        json.dumps(resolved, sort_keys=True, separators=(",", ":"))
        .encode()).hexdigest()
    return LoadedConfig(scenario=scenario, filter_cfg=filter_cfg,
                        metric_cfg=metric_cfg, digest=digest, resolved=resolved)


def _parse_class(cid: str, spec: dict, dt: float) -> TargetClassSpec:
    where = f"classes.{cid}"
    sigma_sq = float(spec.get("sigma_sq", 5.0))
    models = []
    for j, m in enumerate(_require(spec, "models", where)):
        mwhere = f"{where}.models[{j}]"
        mid = str(_require(m, "id", mwhere))
        mtype = str(_require(m, "type", mwhere))
        if mtype == "cv":
            f = cv_transition(dt)
            q = process_noise(dt, float(m.get("sigma_sq", sigma_sq)))
        elif mtype == "ct":
            f = ct_transition(float(_require(m, "turn_rate", mwhere)), dt)
            q = process_noise(dt, float(m.get("sigma_sq", sigma_sq)))
        elif mtype == "matrix":
            f = np.asarray(_require(m, "transition", mwhere), dtype=float)
            q = np.asarray(_require(m, "noise", mwhere), dtype=float)
        else:
            raise ConfigurationError(f"{mwhere}: unknown model type {mtype!r}")
        models.append(MotionModel(id=mid, transition=f, noise=q))
    return TargetClassSpec(
        id=cid, models=tuple(models),
        switch=np.asarray(_require(spec, "switch", where), dtype=float),
        p_survive=float(_require(spec, "p_survive", where)),
        p_detect=float(_require(spec, "p_detect", where)))


def _parse_sensor(spec: dict) -> SensorModel:
    mode = str(spec.get("mode", "ekf"))
    if "noise" in spec:
        noise = np.asarray(spec["noise"], dtype=float)
    else:
        std = np.asarray(spec.get("noise_std",
                                  [math.pi / 180.0, math.pi / 180.0, 10.0]),
                         dtype=float)
        noise = np.diag(std ** 2)
    matrix = spec.get("matrix")
    if matrix is not None:
        matrix = np.asarray(matrix, dtype=float)
    return SensorModel(noise=noise, mode=mode, matrix=matrix)


def _parse_clutter(spec: dict) -> ClutterModel:
    return ClutterModel(
        rate=float(spec.get("rate", 0.0)),
        azimuth=tuple(spec.get("azimuth", (-math.pi, math.pi))),
        elevation=tuple(spec.get("elevation", (0.0, math.pi / 2.0))),
        range_=tuple(spec.get("range", (0.0, 10000.0))))


def _parse_birth(entries, classes) -> BirthModel:
    by_class: dict[str, list[BirthEntry]] = {cid: [] for cid in classes}
    for j, e in enumerate(entries):
        where = f"birth[{j}]"
        mean = np.asarray(_require(e, "mean", where), dtype=float)
        if mean.shape != (STATE_DIM,):
            raise ConfigurationError(f"{where}.mean must be 6-dim")
        if "cov" in e:
            cov = np.asarray(e["cov"], dtype=float)
        else:
            std = np.asarray(e.get("std", 50.0), dtype=float)
            if std.ndim == 0:
                std = np.full(STATE_DIM, float(std))
            cov = np.diag(std ** 2)
        for cid, w in _require(e, "class_weights", where).items():
            if cid not in classes:
                raise ConfigurationError(f"{where}: unknown class {cid!r}")
            spec = classes[cid]
            mw = np.asarray(
                e.get("model_weights",
                      np.full(len(spec.models), 1.0 / len(spec.models))),
                dtype=float)
            by_class[cid].append(BirthEntry(
                weight=float(w), model_ids=spec.model_ids, model_weights=mw,
                mean=mean, cov=cov))
    return BirthModel(entries={c: tuple(v) for c, v in by_class.items() if v})


def _parse_target(i: int, t: dict, classes) -> TargetSpec:
    where = f"scenario.targets[{i}]"
    maneuver = t.get("maneuver", "markov")
    if isinstance(maneuver, (list, tuple)):
        maneuver = tuple(str(m) for m in maneuver)
    return TargetSpec(
        target_id=str(t.get("id", f"t{i}")),
        class_id=str(_require(t, "class", where)),
        birth_time=int(_require(t, "birth", where)),
        death_time=int(_require(t, "death", where)),
        initial_state=np.asarray(_require(t, "state", where), dtype=float),
        maneuver=maneuver)


# ---------------------------------------------------------------------------
# Canonical form (digest input)
# ---------------------------------------------------------------------------

def _canonical(scenario: ScenarioConfig, fcfg: FilterConfig,
               mcfg: MetricConfig) -> dict:
    classes = {}
    for cid, spec in scenario.classes.items():
        classes[cid] = {
            "models": [{"id": m.id, "transition": m.transition.tolist(),
                        "noise": m.noise.tolist()} for m in spec.models],
            "switch": spec.switch.tolist(),
            "p_survive": spec.p_survive,
            "p_detect": spec.p_detect,
        }
    birth = {}
    for cid, entries in scenario.birth.entries.items():
        birth[cid] = [{
            "weight": e.weight,
            "model_weights": np.asarray(e.model_weights, dtype=float).tolist(),
            "mean": np.asarray(e.mean, dtype=float).tolist(),
            "cov": np.asarray(e.cov, dtype=float).tolist(),
        } for e in entries]
    return {
        "scenario": {
            "duration": scenario.duration,
            "dt": scenario.dt,
            "seed": scenario.seed,
            "truth_per_run": scenario.truth_per_run,
            "targets": [{
                "id": t.target_id, "class": t.class_id,
                "birth": t.birth_time, "death": t.death_time,
                "state": np.asarray(t.initial_state, dtype=float).tolist(),
                "maneuver": (list(t.maneuver)
                             if isinstance(t.maneuver, tuple) else t.maneuver),
            } for t in scenario.targets],
        },
        "classes": classes,
        "sensor": {
            "mode": scenario.sensor.mode,
            "noise": scenario.sensor.noise.tolist(),
            "matrix": (scenario.sensor.matrix.tolist()
                       if scenario.sensor.matrix is not None else None),
        },
        "clutter": {
            "rate": scenario.clutter.rate,
            "azimuth": list(scenario.clutter.azimuth),
            "elevation": list(scenario.clutter.elevation),
            "range": list(scenario.clutter.range_),
        },
        "birth": birth,
        "filter": {
            "l_scan": fcfg.l_scan,
            "prune_threshold": fcfg.prune_threshold,
            "absorb_threshold": fcfg.absorb_threshold,
            "max_components": fcfg.max_components,
            "model_merge": fcfg.model_merge,
            "extract_mode": fcfg.extract_mode,
        },
        "metric": {
            "order": mcfg.order,
            "cutoff": mcfg.cutoff,
            "switch_cost": mcfg.switch_cost,
            "use_velocity": mcfg.use_velocity,
        },
    }


def bundled_scenario_path() -> Path:
    """Path of the packaged six-target two-class benchmark scenario."""
    return Path(__file__).parent / "data" / "six_target_two_class.json"
