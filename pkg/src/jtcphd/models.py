"""Motion models, sensor model, clutter model and the target-class registry.

State convention (fixed throughout the package):

    x = [px, vx, py, vy, pz, vz]        (6-dim, SI units)

Measurements are spherical sensor coordinates:

    z = [azimuth, elevation, range]     (rad, rad, m)

where azimuth is the quadrant-correct angle of (px, py) measured from the
+y axis, elevation is the angle of (sqrt(px^2+py^2), pz) measured from the
+z axis (so elevation = pi/2 for a target in the horizontal plane), and
range is the Euclidean distance to the origin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

STATE_DIM = 6
MEAS_DIM = 3

POSITION_IDX = (0, 2, 4)
VELOCITY_IDX = (1, 3, 5)

# Below this rate the coordinated-turn matrix is numerically 0/0 and the
# analytic limit (constant velocity) is used instead.
CT_RATE_FLOOR = 1e-9


class InvalidParameterError(ValueError):
    """A model parameter is outside its admissible domain."""


class SingularGeometryError(ValueError):
    """The sensor geometry is degenerate (target on the sensor axis/origin)."""


class ConfigurationError(ValueError):
    """A scenario/filter configuration is inconsistent or incomplete."""


def state_vector(px, vx, py, vy, pz, vz) -> np.ndarray:
    """Build a state vector in the package's fixed component order."""
    return np.array([px, vx, py, vy, pz, vz], dtype=float)


def _check_finite(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise InvalidParameterError(f"{name} must be finite, got {value!r}")
    return value


# ---------------------------------------------------------------------------
# Motion models
# ---------------------------------------------------------------------------

def cv_transition(dt: float) -> np.ndarray:
    """Constant-velocity transition matrix, block [[1, dt], [0, 1]] per axis."""
    dt = _check_finite("dt", dt)
    if dt < 0:
        raise InvalidParameterError(f"dt must be >= 0, got {dt}")
    return np.kron(np.eye(3), np.array([[1.0, dt], [0.0, 1.0]]))


def ct_transition(turn_rate: float, dt: float) -> np.ndarray:
    """Coordinated-turn transition matrix.

    The x axis is propagated with constant velocity while the turn couples
    the (py, vy) and (pz, vz) pairs:

        [1  dt  0      0          0  0         ]
        [0  1   0      0          0  0         ]
        [0  0   1      sin(wt)/w  0  -(1-cos(wt))/w]
        [0  0   0      cos(wt)    0  -sin(wt)  ]
        [0  0   0      (1-cos(wt))/w  1  sin(wt)/w ]
        [0  0   0      sin(wt)    0  cos(wt)   ]

    with w the turn rate in rad/s.  Rates below ``CT_RATE_FLOOR`` fall back
    to the constant-velocity matrix, which is the analytic w -> 0 limit.
    """
    turn_rate = _check_finite("turn_rate", turn_rate)
    dt = _check_finite("dt", dt)
    if dt < 0:
        raise InvalidParameterError(f"dt must be >= 0, got {dt}")
    if abs(turn_rate) < CT_RATE_FLOOR:
        return cv_transition(dt)
    w = turn_rate
    wt = w * dt
    s, c = math.sin(wt), math.cos(wt)
    f = np.eye(STATE_DIM)
    f[0, 1] = dt
    f[2, 3] = s / w
    f[2, 5] = -(1.0 - c) / w
    f[3, 3] = c
    f[3, 5] = -s
    f[4, 3] = (1.0 - c) / w
    f[4, 5] = s / w
    f[5, 3] = s
    f[5, 5] = c
    return f


def process_noise(dt: float, sigma_sq: float) -> np.ndarray:
    """Discretized white-acceleration noise covariance.

    Returns sigma_sq * blockdiag over the 3 axes of
    [[dt^4/4, dt^3/2], [dt^3/2, dt^2]].
    """
    dt = _check_finite("dt", dt)
    sigma_sq = _check_finite("sigma_sq", sigma_sq)
    if dt < 0:
        raise InvalidParameterError(f"dt must be >= 0, got {dt}")
    if sigma_sq < 0:
        raise InvalidParameterError(f"sigma_sq must be >= 0, got {sigma_sq}")
    block = np.array([[dt**4 / 4.0, dt**3 / 2.0], [dt**3 / 2.0, dt**2]])
    return sigma_sq * np.kron(np.eye(3), block)


def markov_predict(model_weights: np.ndarray, switch: np.ndarray) -> np.ndarray:
    """Propagate model probabilities one step through the switch chain.

    out[j] = sum_i in[i] * switch[i, j], with switch row-stochastic
    (switch[i, j] is the probability of moving from model i to model j).
    """
    w = np.asarray(model_weights, dtype=float)
    m = np.asarray(switch, dtype=float)
    if w.ndim != 1 or m.shape != (w.size, w.size):
        raise InvalidParameterError(
            f"weights of size {w.size} incompatible with switch shape {m.shape}")
    return w @ m


# ---------------------------------------------------------------------------
# Sensor
# ---------------------------------------------------------------------------

def observe(state: np.ndarray) -> np.ndarray:
    """Noiseless spherical observation [azimuth, elevation, range] of a state.

    Azimuth at px = py = 0 (target on the vertical axis) is defined as 0.
    """
    x = np.asarray(state, dtype=float)
    px, py, pz = x[0], x[2], x[4]
    r1 = px * px + py * py
    r2 = r1 + pz * pz
    if r2 == 0.0:
        raise SingularGeometryError("observation undefined at the origin")
    az = math.atan2(px, py) if r1 > 0.0 else 0.0
    el = math.atan2(math.sqrt(r1), pz)
    return np.array([az, el, math.sqrt(r2)])


def observe_positions(positions: np.ndarray) -> np.ndarray:
    """Vectorized :func:`observe` over an (n, 3) array of (px, py, pz) rows."""
    p = np.asarray(positions, dtype=float)
    r1 = p[:, 0] ** 2 + p[:, 1] ** 2
    out = np.empty((p.shape[0], MEAS_DIM))
    out[:, 0] = np.arctan2(p[:, 0], p[:, 1])
    out[:, 0][r1 == 0.0] = 0.0
    out[:, 1] = np.arctan2(np.sqrt(r1), p[:, 2])
    out[:, 2] = np.sqrt(r1 + p[:, 2] ** 2)
    return out


def observation_jacobian(state: np.ndarray) -> np.ndarray:
    """Jacobian of :func:`observe` with respect to the full 6-dim state.

    Velocity columns are identically zero.  Requires px^2 + py^2 > 0.
    """
    x = np.asarray(state, dtype=float)
    h = jacobian_at_positions(x[list(POSITION_IDX)][None, :])
    if not np.all(np.isfinite(h)):
        raise SingularGeometryError("jacobian undefined for px = py = 0")
    return h[0]


def jacobian_at_positions(positions: np.ndarray) -> np.ndarray:
    """Vectorized observation Jacobians, (n, 3, 6) for (n, 3) positions.

    Rows with px^2 + py^2 = 0 come back as NaN instead of raising so batch
    callers can skip them individually.
    """
    p = np.asarray(positions, dtype=float)
    px, py, pz = p[:, 0], p[:, 1], p[:, 2]
    r1 = px * px + py * py
    r2 = r1 + pz * pz
    with np.errstate(divide="ignore", invalid="ignore"):
        sr1 = np.sqrt(r1)
        sr2 = np.sqrt(r2)
        h = np.zeros((p.shape[0], MEAS_DIM, STATE_DIM))
        h[:, 0, 0] = py / r1
        h[:, 0, 2] = -px / r1
        h[:, 1, 0] = px * pz / (r2 * sr1)
        h[:, 1, 2] = py * pz / (r2 * sr1)
        h[:, 1, 4] = -sr1 / r2
        h[:, 2, 0] = px / sr2
        h[:, 2, 2] = py / sr2
        h[:, 2, 4] = pz / sr2
    return h


@dataclass(frozen=True, slots=True)
class MotionModel:
    """One linear-Gaussian motion mode: x' ~ N(F x, Q)."""

    id: str
    transition: np.ndarray
    noise: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.transition, dtype=float)
        q = np.asarray(self.noise, dtype=float)
        if f.shape != (STATE_DIM, STATE_DIM) or q.shape != (STATE_DIM, STATE_DIM):
            raise InvalidParameterError("transition/noise must be 6x6")
        if not np.allclose(q, q.T, atol=1e-10):
            raise InvalidParameterError(f"noise of model {self.id!r} not symmetric")
        if np.min(np.linalg.eigvalsh(0.5 * (q + q.T))) < -1e-8:
            raise InvalidParameterError(f"noise of model {self.id!r} not PSD")
        object.__setattr__(self, "transition", f)
        object.__setattr__(self, "noise", q)


@dataclass(frozen=True, slots=True)
class TargetClassSpec:
    """A target class: its motion-model bank, switch chain and probabilities."""

    id: str
    models: tuple[MotionModel, ...]
    switch: np.ndarray
    p_survive: float
    p_detect: float

    def __post_init__(self):
        if not self.models:
            raise InvalidParameterError(f"class {self.id!r} has an empty model bank")
        object.__setattr__(self, "models", tuple(self.models))
        m = np.asarray(self.switch, dtype=float)
        n = len(self.models)
        if m.shape != (n, n):
            raise InvalidParameterError(
                f"switch matrix of class {self.id!r} must be {n}x{n}, got {m.shape}")
        if np.any(m < 0) or np.max(np.abs(m.sum(axis=1) - 1.0)) > 1e-12:
            raise InvalidParameterError(
                f"switch matrix of class {self.id!r} is not row-stochastic")
        object.__setattr__(self, "switch", m)
        for name in ("p_survive", "p_detect"):
            v = float(getattr(self, name))
            if not 0.0 <= v <= 1.0:
                raise InvalidParameterError(f"{name} of class {self.id!r} not in [0,1]")
            object.__setattr__(self, name, v)

    @property
    def model_ids(self) -> tuple[str, ...]:
        return tuple(m.id for m in self.models)

    def model_index(self, model_id: str) -> int:
        for i, m in enumerate(self.models):
            if m.id == model_id:
                return i
        raise InvalidParameterError(f"unknown model {model_id!r} in class {self.id!r}")


@dataclass(frozen=True, slots=True)
class SensorModel:
    """Measurement model: linear with a fixed H, or the spherical EKF sensor."""

    noise: np.ndarray
    mode: str = "ekf"
    matrix: np.ndarray | None = None

    def __post_init__(self):
        r = np.asarray(self.noise, dtype=float)
        if r.shape != (MEAS_DIM, MEAS_DIM):
            raise InvalidParameterError("sensor noise must be 3x3")
        if not np.allclose(r, r.T, atol=1e-12) or np.min(np.linalg.eigvalsh(r)) < 0:
            raise InvalidParameterError("sensor noise must be symmetric PSD")
        object.__setattr__(self, "noise", r)
        if self.mode not in ("linear", "ekf"):
            raise InvalidParameterError(f"unknown sensor mode {self.mode!r}")
        if self.mode == "linear":
            if self.matrix is None:
                raise InvalidParameterError("linear sensor requires a fixed H matrix")
            h = np.asarray(self.matrix, dtype=float)
            if h.shape != (MEAS_DIM, STATE_DIM):
                raise InvalidParameterError("H must be 3x6")
            object.__setattr__(self, "matrix", h)

    @property
    def wrap_periods(self) -> np.ndarray:
        """Innovation wrap period per measurement dimension (0 = no wrap)."""
        if self.mode == "ekf":
            return np.array([2.0 * math.pi, 0.0, 0.0])
        return np.zeros(MEAS_DIM)


@dataclass(frozen=True, slots=True)
class ClutterModel:
    """Poisson clutter, uniform over a box in measurement space."""

    rate: float
    azimuth: tuple[float, float] = (-math.pi, math.pi)
    elevation: tuple[float, float] = (0.0, math.pi / 2.0)
    range_: tuple[float, float] = (0.0, 10000.0)

    def __post_init__(self):
        if self.rate < 0:
            raise InvalidParameterError(f"clutter rate must be >= 0, got {self.rate}")
        for name in ("azimuth", "elevation", "range_"):
            lo, hi = getattr(self, name)
            if not (math.isfinite(lo) and math.isfinite(hi) and hi > lo):
                raise InvalidParameterError(f"degenerate clutter bound {name}={lo, hi}")
        object.__setattr__(self, "rate", float(self.rate))

    @property
    def bounds(self) -> np.ndarray:
        return np.array([self.azimuth, self.elevation, self.range_], dtype=float)

    @property
    def volume(self) -> float:
        b = self.bounds
        return float(np.prod(b[:, 1] - b[:, 0]))

    def contains(self, z: np.ndarray) -> np.ndarray:
        """Boolean inside-the-volume mask for an (n, 3) measurement array."""
        z = np.atleast_2d(np.asarray(z, dtype=float))
        b = self.bounds
        return np.all((z >= b[:, 0]) & (z <= b[:, 1]), axis=1)


def clutter_intensity(z: np.ndarray, model: ClutterModel) -> float:
    """Clutter PHD at z: rate / volume inside the clutter box, 0 outside."""
    if bool(model.contains(np.asarray(z, dtype=float))[0]):
        return model.rate / model.volume
    return 0.0


def clutter_intensity_batch(z: np.ndarray, model: ClutterModel) -> np.ndarray:
    """Vectorized :func:`clutter_intensity` over an (n, 3) array."""
    z = np.atleast_2d(np.asarray(z, dtype=float))
    out = np.zeros(z.shape[0])
    out[model.contains(z)] = model.rate / model.volume
    return out


ClassRegistry = dict[str, TargetClassSpec]


def validate_registry(classes: ClassRegistry) -> None:
    for cid, spec in classes.items():
        if cid != spec.id:
            raise InvalidParameterError(
                f"registry key {cid!r} does not match class id {spec.id!r}")
