"""Stochastic AI workload: compound Poisson arrivals through a first-order
(Hurwitz) filter, plus the deterministic amplitude and ramp certificate.

Each arrival of batch size ``b`` (W) is realized as a rectangular workload
pulse of width ``pulse_width`` carrying the area ``b * tau_filter``. For a
short pulse this lifts ``P_AI`` by about ``b``, i.e. the same response as an
ideal impulse, while keeping the workload bounded: the summed pulse signal is
clipped to ``M_w``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.signal import lfilter


@dataclass(frozen=True)
class LoadModel:
    P_base: float = 10e3
    rho_b: float = 0.0
    lam: float = 50.0
    b_max: float = 10e3
    tau_filter: float = 20e-3
    tau_rise: float = 5e-3
    pulse_width: float | None = None  # None: tau_rise
    M_w: float | None = None  # None: b_max * tau_filter / pulse_width
    seed: int = 0
    base_swing: float = 0.0  # triangle-wave base excursion for the ramped-base mode
    z0: float = 0.0

    def __post_init__(self):
        for name in ("tau_filter", "tau_rise"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.pulse_width is not None and not self.pulse_width > 0:
            raise ValueError("pulse_width must be positive")
        if self.lam < 0 or self.b_max < 0 or self.rho_b < 0 or self.base_swing < 0:
            raise ValueError("lam, b_max, rho_b and base_swing must be non-negative")
        if self.M_w is not None and self.M_w < 0:
            raise ValueError("M_w must be non-negative")
        if self.z0 < 0:
            raise ValueError("z0 must be non-negative")

    @property
    def width(self) -> float:
        return self.tau_rise if self.pulse_width is None else self.pulse_width

    @property
    def workload_bound(self) -> float:
        if self.M_w is not None:
            return self.M_w
        return self.b_max * self.tau_filter / self.width

    @property
    def base_bound(self) -> float:
        return abs(self.P_base) + self.base_swing

    def with_seed(self, seed: int) -> "LoadModel":
        return replace(self, seed=seed)


@dataclass(frozen=True)
class LoadTrace:
    times: np.ndarray
    P_L: np.ndarray
    P_AI: np.ndarray
    arrival_times: np.ndarray
    batch_sizes: np.ndarray
    workload: np.ndarray | None = None

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0]) if len(self.times) > 1 else 0.0

    def scaled(self, factor: float) -> "LoadTrace":
        """Whole-load scaling, used to build negative controls for audits."""
        w = None if self.workload is None else self.workload * factor
        return replace(self, P_L=self.P_L * factor, P_AI=self.P_AI * factor,
                       batch_sizes=self.batch_sizes * factor, workload=w)

    @classmethod
    def constant(cls, P_L: float, horizon: float, dt: float) -> "LoadTrace":
        n = int(round(horizon / dt)) + 1
        t = np.arange(n) * dt
        return cls(t, np.full(n, float(P_L)), np.zeros(n), np.empty(0), np.empty(0))


@dataclass(frozen=True)
class BoundCertificate:
    Delta_P: float
    rho_P: float
    M_z: float
    peak_event_ramp: float = 0.0


def filter_bounds(A_z, B_z, C_z, M_b: float, rho_b: float, M_z: float, M_w: float):
    """Amplitude and ramp bounds for ``P_L = P_base + C_z z`` with ``z' = A_z z + B_z w``.

    Matrix norms are spectral norms; for a scalar filter they reduce to
    absolute values.
    """
    A, B, C = (np.atleast_2d(np.asarray(m, dtype=float)) for m in (A_z, B_z, C_z))
    if np.any(np.linalg.eigvals(A).real >= 0):
        raise ValueError("A_z must be Hurwitz")
    norm = lambda m: float(np.linalg.norm(m, 2))  # noqa: E731
    Delta_P = M_b + norm(C) * M_z
    rho_P = rho_b + norm(C @ A) * M_z + norm(C @ B) * M_w
    return Delta_P, rho_P


def certify_bounds(model: LoadModel) -> BoundCertificate:
    """Deterministic bounds every realization of ``model`` obeys.

    The scalar filter ``z' = (w - z) / tau_filter`` with ``0 <= w <= M_w``
    keeps ``z`` between 0 and ``max(z0, M_w)``.
    """
    tau = model.tau_filter
    M_w = model.workload_bound
    M_z = max(model.z0, M_w)
    Delta_P, rho_P = filter_bounds(-1.0 / tau, 1.0 / tau, 1.0, model.base_bound,
                                   model.rho_b, M_z, M_w)
    return BoundCertificate(Delta_P=Delta_P, rho_P=rho_P, M_z=M_z,
                            peak_event_ramp=model.b_max / model.tau_rise)


def _base_profile(model: LoadModel, t: np.ndarray) -> np.ndarray:
    if model.rho_b > 0 and model.base_swing > 0:
        half = model.base_swing / model.rho_b
        phase = np.mod(t, 2 * half)
        tri = np.where(phase <= half, phase, 2 * half - phase) / half
        return model.P_base + model.base_swing * tri
    return np.full(t.shape, float(model.P_base))


def generate_load_trace(model: LoadModel, horizon: float, dt: float) -> LoadTrace:
    """Sample one realization of ``P_L`` on a uniform grid.

    Pulse edges are snapped to the grid and the workload is held constant
    within each step, so the filter is discretized exactly.
    """
    if not dt > 0 or not math.isfinite(dt):
        raise ValueError("dt must be positive")
    if not dt < model.tau_filter / 5:
        raise ValueError("dt must be below tau_filter / 5 to resolve the filter")
    if not horizon >= 0:
        raise ValueError("horizon must be non-negative")

    n = int(round(horizon / dt)) + 1
    t = np.arange(n) * dt
    rng = np.random.default_rng(model.seed)
    count = rng.poisson(model.lam * horizon) if model.lam > 0 else 0
    arrivals = np.sort(rng.uniform(0.0, horizon, count))
    sizes = rng.uniform(0.0, model.b_max, count)

    steps = max(1, int(round(model.width / dt)))
    amp = sizes * model.tau_filter / (steps * dt)
    start = np.round(arrivals / dt).astype(np.int64)
    edges = np.zeros(n + steps + 1)
    np.add.at(edges, start, amp)
    np.add.at(edges, start + steps, -amp)
    w = np.clip(np.cumsum(edges)[:n], 0.0, model.workload_bound)
    w[np.abs(w) < 1e-9 * max(model.workload_bound, 1.0)] = 0.0  # cumsum round-off

    a = math.exp(-dt / model.tau_filter)
    z = np.empty(n)
    z[0] = model.z0
    if n > 1:
        z[1:], _ = lfilter([1 - a], [1, -a], w[:-1], zi=[a * model.z0])
    P_L = _base_profile(model, t) + z
    return LoadTrace(t, P_L, z, arrivals, sizes, w)
