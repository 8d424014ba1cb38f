"""Closed-loop simulation of the full four-state model and of the reduced
power dynamics, plus the boundary-layer and manifold checks."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from numba import njit

from .controller import (MODULATION_MODES, NO_CLAMP, ClampConfig, controller_step,
                         droop_reference, feedback_linearize, inner_loop)
from .load import LoadModel, LoadTrace, generate_load_trace
from .params import (ControlGains, DesignConstraints, SystemParams, derive_timescales,
                     loop_gain, validate_params)
from .plant import PlantInputs, PlantState, SingularStateError, plant_derivative

DC_MODES = ("balanced", "constant")
TRANSIENT_MULTIPLIER = 5.0

# packed-constant layout for the compiled kernels
_L, _R, _VG, _WG, _CDC, _TAUP, _KAPPA, _MMAX, _KD, _KQ, _KPP, _CLAMP_ON, _CLAMP, _DC_CONST, \
    _PDC, _CLIP = range(16)


@njit(cache=True, nogil=True)
def _rhs(x, P_L, P_star, c, out):
    i_d, i_q, V_dc, P_m = x[0], x[1], x[2], x[3]
    i_star = c[_KPP] * (P_star - P_m)
    if c[_CLAMP_ON] > 0.5:
        i_star = min(max(i_star, -c[_CLAMP]), c[_CLAMP])
    wL = c[_L] * c[_WG]
    v_d = c[_VG] - wL * i_q - c[_KD] * (i_d - i_star)
    v_q = wL * i_d - c[_KQ] * i_q
    if c[_CLIP] > 0.5:
        m = math.hypot(v_d, v_q) / (c[_KAPPA] * V_dc)
        if m > c[_MMAX]:
            v_d *= c[_MMAX] / m
            v_q *= c[_MMAX] / m
    P_inv = 1.5 * c[_VG] * i_d
    P_dc = c[_PDC] if c[_DC_CONST] > 0.5 else P_inv
    out[0] = (-c[_R] * i_d + wL * i_q + v_d - c[_VG]) / c[_L]
    out[1] = (-c[_R] * i_q - wL * i_d + v_q) / c[_L]
    out[2] = (P_dc - P_inv) / (c[_CDC] * V_dc)
    out[3] = (-P_m + P_inv - P_L) / c[_TAUP]


@njit(cache=True, nogil=True)
def _rk4_full(x0, P_L, P_star, dt, c):
    """Returns (states, index of last valid sample)."""
    n = P_L.shape[0]
    X = np.empty((n, 4))
    X[0] = x0
    k1, k2, k3, k4 = np.empty(4), np.empty(4), np.empty(4), np.empty(4)
    xs = np.empty(4)
    for k in range(n - 1):
        x = X[k]
        _rhs(x, P_L[k], P_star[k], c, k1)
        for j in range(4):
            xs[j] = x[j] + 0.5 * dt * k1[j]
        if xs[2] <= 0.0:
            return X, k
        _rhs(xs, P_L[k], P_star[k], c, k2)
        for j in range(4):
            xs[j] = x[j] + 0.5 * dt * k2[j]
        if xs[2] <= 0.0:
            return X, k
        _rhs(xs, P_L[k], P_star[k], c, k3)
        for j in range(4):
            xs[j] = x[j] + dt * k3[j]
        if xs[2] <= 0.0:
            return X, k
        _rhs(xs, P_L[k], P_star[k], c, k4)
        for j in range(4):
            X[k + 1, j] = x[j] + dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])
        if X[k + 1, 2] <= 0.0:
            return X, k
    return X, n - 1


@njit(cache=True, nogil=True)
def _rk4_reduced(P0, P_L, P_star, dt, Vg, Kpp, tau_p, clamp_on, clamp):
    n = P_L.shape[0]
    P = np.empty(n)
    P[0] = P0
    ks = np.empty(4)
    for k in range(n - 1):
        p = P[k]
        for s in range(4):
            if s == 0:
                y = p
            elif s == 3:
                y = p + dt * ks[2]
            else:
                y = p + 0.5 * dt * ks[s - 1]
            i_d = Kpp * (P_star[k] - y)
            if clamp_on:
                i_d = min(max(i_d, -clamp), clamp)
            ks[s] = (-y + 1.5 * Vg * i_d - P_L[k]) / tau_p
        P[k + 1] = p + dt / 6.0 * (ks[0] + 2.0 * ks[1] + 2.0 * ks[2] + ks[3])
    return P


@dataclass(frozen=True)
class Scenario:
    params: SystemParams
    gains: ControlGains
    constraints: DesignConstraints = field(default_factory=DesignConstraints)
    clamp: ClampConfig = NO_CLAMP
    load: LoadModel | LoadTrace | float = field(default_factory=LoadModel)
    dc_mode: str = "balanced"
    P_dc_in: float | None = None  # constant mode; None: inverter power at t = 0
    initial_state: PlantState | str = "reduced-equilibrium"
    horizon: float = 1.0
    dt: float = 50e-6
    modulation: str = "monitor"
    setpoint_step: tuple[float, float] | None = None  # (time, change of P_star)
    V_dc0: float | None = None
    transient_multiplier: float = TRANSIENT_MULTIPLIER


@dataclass
class SimTrace:
    kind: str
    scenario: Scenario
    t: np.ndarray
    i_d: np.ndarray
    i_q: np.ndarray
    V_dc: np.ndarray
    P_m: np.ndarray
    P_L: np.ndarray
    P_star: np.ndarray
    i_d_star: np.ndarray
    v_d: np.ndarray
    v_q: np.ndarray
    m_d: np.ndarray
    m_q: np.ndarray
    m_norm: np.ndarray
    saturated: np.ndarray
    P_inv: np.ndarray
    P_net: np.ndarray
    events: list = field(default_factory=list)

    def __len__(self):
        return len(self.t)

    @property
    def e_d(self) -> np.ndarray:
        return self.i_d - self.i_d_star


@dataclass(frozen=True)
class ManifoldReport:
    manifold_deviation: float
    power_deviation: float
    t_start: float
    mu: float


def validate_scenario(s: Scenario):
    """Check the scenario and return its timescales.

    Raises ``ValueError("dt too large for boundary layer")`` when the step
    cannot resolve the fast transient.
    """
    validate_params(s.params, s.gains, s.constraints)
    ts = derive_timescales(s.params, s.gains, s.constraints)
    if s.dc_mode not in DC_MODES:
        raise ValueError(f"unknown dc_mode {s.dc_mode!r}")
    if s.modulation not in MODULATION_MODES:
        raise ValueError(f"unknown modulation mode {s.modulation!r}")
    if not s.horizon >= 0:
        raise ValueError("horizon must be non-negative")
    if not s.dt > 0:
        raise ValueError("dt must be positive")
    if s.dt > ts.mu / 10 * (1 + 1e-12):
        raise ValueError(f"dt too large for boundary layer: dt = {s.dt:.3g} s > mu/10 = "
                         f"{ts.mu / 10:.3g} s")
    return ts


def _steps(s: Scenario) -> int:
    return int(round(s.horizon / s.dt)) + 1


def load_samples(s: Scenario) -> np.ndarray:
    """Load on the scenario grid, held constant over each step."""
    n = _steps(s)
    if isinstance(s.load, LoadModel):
        return generate_load_trace(s.load, s.horizon, s.dt).P_L
    if isinstance(s.load, LoadTrace):
        if len(s.load.P_L) != n or (n > 1 and not math.isclose(s.load.dt, s.dt, rel_tol=1e-9)):
            raise ValueError("load trace grid does not match the scenario grid")
        return np.asarray(s.load.P_L, dtype=float)
    return np.full(n, float(s.load))


def setpoint_samples(s: Scenario) -> np.ndarray:
    n = _steps(s)
    P_star = np.full(n, float(s.gains.P_star))
    if s.setpoint_step is not None:
        t_step, dP = s.setpoint_step
        P_star[np.arange(n) * s.dt >= t_step - 1e-12] += dP
    return P_star


def reduced_equilibrium_state(params: SystemParams, gains: ControlGains, P_L: float,
                              V_dc: float | None = None) -> PlantState:
    """Operating point of the reduced model: droop characteristic plus ``P_m`` fixed point."""
    i_bar = gains.K_pp * (gains.P_star + P_L) / (1 + loop_gain(params, gains))
    P_m = 1.5 * params.V_g * i_bar - P_L
    return PlantState(i_bar, 0.0, params.V_dc_nom if V_dc is None else V_dc, P_m)


def closed_loop_equilibrium(params: SystemParams, gains: ControlGains, P_L: float,
                            V_dc: float | None = None,
                            clamp: ClampConfig = NO_CLAMP) -> PlantState:
    """Exact fixed point of the full closed loop under constant load.

    The resistive drop leaves ``i_d = k_d / (k_d + R) * i_d_star`` in steady
    state, so this differs from :func:`reduced_equilibrium_state` by O(R / k_d).
    """
    g = gains.k_d / (gains.k_d + params.R)
    beta = loop_gain(params, gains)
    i_d = g * gains.K_pp * (gains.P_star + P_L) / (1 + g * beta)
    P_m = 1.5 * params.V_g * i_d - P_L
    if clamp.enabled and abs(gains.K_pp * (gains.P_star - P_m)) > clamp.i_d_star_max:
        i_d = g * math.copysign(clamp.i_d_star_max, gains.P_star - P_m)
        P_m = 1.5 * params.V_g * i_d - P_L
    return PlantState(i_d, 0.0, params.V_dc_nom if V_dc is None else V_dc, P_m)


def initial_state(s: Scenario, P_L0: float) -> PlantState:
    if isinstance(s.initial_state, PlantState):
        return s.initial_state
    if s.initial_state == "reduced-equilibrium":
        return reduced_equilibrium_state(s.params, s.gains, P_L0, s.V_dc0)
    if s.initial_state == "equilibrium":
        return closed_loop_equilibrium(s.params, s.gains, P_L0, s.V_dc0, s.clamp)
    raise ValueError(f"unknown initial_state {s.initial_state!r}")


def _constants(s: Scenario, P_dc: float) -> np.ndarray:
    p, g = s.params, s.gains
    c = np.zeros(16)
    c[[_L, _R, _VG, _WG, _CDC, _TAUP, _KAPPA, _MMAX]] = (p.L, p.R, p.V_g, p.omega_g, p.C_dc,
                                                        p.tau_p, p.kappa, p.m_max)
    c[[_KD, _KQ, _KPP]] = g.k_d, g.k_q, g.K_pp
    c[_CLAMP_ON] = float(s.clamp.enabled)
    c[_CLAMP] = s.clamp.i_d_star_max
    c[_DC_CONST] = float(s.dc_mode == "constant")
    c[_PDC] = P_dc
    c[_CLIP] = float(s.modulation == "clip")
    return c


def _saturation_events(t, saturated):
    flips = np.flatnonzero(np.diff(saturated.astype(np.int8)))
    events = [(float(t[0]), True)] if len(saturated) and saturated[0] else []
    events += [(float(t[k + 1]), bool(saturated[k + 1])) for k in flips]
    return events


def _build_trace(kind, s, t, X, P_L, P_star) -> SimTrace:
    gains = s.gains
    state = PlantState(X[:, 0], X[:, 1], X[:, 2], X[:, 3])
    # controller outputs are recomputed per sample with the step's setpoint
    out = controller_step(state, _ArrayGains(gains, P_star), s.clamp, s.params, s.modulation)
    P_inv = 1.5 * s.params.V_g * X[:, 0]
    saturated = np.asarray(out.saturated, dtype=bool)
    return SimTrace(
        kind=kind, scenario=s, t=t, i_d=X[:, 0].copy(), i_q=X[:, 1].copy(),
        V_dc=X[:, 2].copy(), P_m=X[:, 3].copy(), P_L=P_L, P_star=P_star,
        i_d_star=np.asarray(out.i_d_star, dtype=float), v_d=np.asarray(out.v_d, dtype=float),
        v_q=np.asarray(out.v_q, dtype=float), m_d=out.m_d, m_q=out.m_q, m_norm=out.m_norm,
        saturated=saturated, P_inv=P_inv, P_net=P_L - P_inv,
        events=_saturation_events(t, saturated),
    )


class _ArrayGains:
    """``ControlGains`` look-alike whose setpoint is a per-sample array."""

    def __init__(self, gains: ControlGains, P_star: np.ndarray):
        self.k_d, self.k_q, self.K_pp, self.P_star = gains.k_d, gains.k_q, gains.K_pp, P_star


def simulate_full(scenario: Scenario, P_L: np.ndarray | None = None) -> SimTrace:
    """Fixed-step RK4 integration of the four-state closed loop.

    The load is held constant over each step.

    Raises
    ------
    SingularStateError
        On DC-link collapse; ``err.trace`` holds the trace up to the last
        valid sample.
    """
    s = scenario
    validate_scenario(s)
    if P_L is None:
        P_L = load_samples(s)
    P_star = setpoint_samples(s)
    x0 = initial_state(s, float(P_L[0]))
    if not x0.V_dc > 0:
        raise SingularStateError(f"DC-link collapse: V_dc = {x0.V_dc!r} V")
    P_dc = s.P_dc_in if s.P_dc_in is not None else 1.5 * s.params.V_g * x0.i_d
    X, last = _rk4_full(x0.as_array(), P_L, P_star, s.dt, _constants(s, P_dc))
    t = np.arange(len(P_L)) * s.dt
    if last < len(P_L) - 1:
        k = last + 1
        trace = _build_trace("full", s, t[:k], X[:k], P_L[:k], P_star[:k])
        err = SingularStateError(f"DC-link collapse between t = {t[last]:.6g} s and "
                                 f"t = {t[last] + s.dt:.6g} s")
        err.trace = trace
        raise err
    return _build_trace("full", s, t, X, P_L, P_star)


def simulate_seeds(scenario: Scenario, seeds, jobs: int = 1) -> list[SimTrace]:
    """Run ``scenario`` once per load seed; results keep the order of ``seeds``."""
    if not isinstance(scenario.load, LoadModel):
        raise ValueError("seed sweeps need a LoadModel")
    runs = [replace(scenario, load=scenario.load.with_seed(int(seed))) for seed in seeds]
    if jobs <= 1:
        return [simulate_full(r) for r in runs]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(simulate_full, runs))


def simulate_reduced(scenario: Scenario, P_L: np.ndarray | None = None) -> SimTrace:
    """Integrate the scalar reduced power dynamics; ``i_d`` is the droop reference."""
    s = scenario
    ts = derive_timescales(s.params, s.gains, s.constraints)
    if not s.dt > 0 or s.dt > ts.tau_eff / 20:
        raise ValueError("dt must lie in (0, tau_eff / 20] for the reduced model")
    if P_L is None:
        P_L = load_samples(s)
    P_star = setpoint_samples(s)
    x0 = initial_state(s, float(P_L[0]))
    P = _rk4_reduced(x0.P_m, P_L, P_star, s.dt, s.params.V_g, s.gains.K_pp, s.params.tau_p,
                     s.clamp.enabled, s.clamp.i_d_star_max)
    n = len(P_L)
    V0 = s.V_dc0 if s.V_dc0 is not None else s.params.V_dc_nom
    i_d = np.asarray(droop_reference(P, _ArrayGains(s.gains, P_star), s.clamp), dtype=float)
    X = np.column_stack([i_d, np.zeros(n), np.full(n, V0), P])
    return _build_trace("reduced", s, np.arange(n) * s.dt, X, P_L, P_star)


def boundary_layer_test(params: SystemParams, gains: ControlGains, i_d0: float,
                        i_d_star_frozen: float, periods: float = 8.0,
                        steps_per_mu: int = 200) -> float:
    """Decay rate (1/s) of the d-axis current with the reference frozen.

    The loop is assembled from :func:`~gflsim.plant.plant_derivative` and the
    controller functions and integrated with RK4. The deviation is measured
    from the frozen-reference fixed point ``k_d / (k_d + R) * i_d_star``,
    which the resistive term shifts away from the reference itself.
    """
    mu = params.L / (gains.k_d + params.R)
    i_eq = gains.k_d * i_d_star_frozen / (gains.k_d + params.R)
    if i_d0 == i_eq:
        raise ValueError("i_d0 sits on the fixed point; nothing to fit")
    dt = mu / steps_per_mu
    n = int(round(periods * steps_per_mu))

    def f(i_d):
        st = PlantState(i_d, 0.0, params.V_dc_nom, 0.0)
        u_d, u_q = inner_loop(i_d, 0.0, i_d_star_frozen, gains)
        v_d, v_q = feedback_linearize(st, u_d, u_q, params)
        return plant_derivative(st, PlantInputs(v_d, v_q, 0.0, 0.0), params)[0]

    i = np.empty(n + 1)
    i[0] = i_d0
    for k in range(n):
        x = i[k]
        a = f(x)
        b = f(x + 0.5 * dt * a)
        c = f(x + 0.5 * dt * b)
        d = f(x + dt * c)
        i[k + 1] = x + dt / 6 * (a + 2 * b + 2 * c + d)
    err = np.abs(i - i_eq)
    t = np.arange(n + 1) * dt
    keep = err > 1e-9 * err[0]
    slope = np.polyfit(t[keep], np.log(err[keep]), 1)[0]
    return -slope


def transient_window(mu: float, multiplier: float = TRANSIENT_MULTIPLIER) -> float:
    """Length of the initial fast transient, ``multiplier * mu * |ln mu|`` (mu in s)."""
    return multiplier * mu * abs(math.log(mu))


def compare_reduced_full(full: SimTrace, reduced: SimTrace, mu: float | None = None,
                         multiplier: float | None = None) -> ManifoldReport:
    """Slow-manifold deviation of the full trace and its distance to the reduced one."""
    if full.kind != "full" or reduced.kind != "reduced":
        raise ValueError("expected one full and one reduced trace")
    if (len(full) != len(reduced) or not np.allclose(full.t, reduced.t)
            or not np.array_equal(full.P_L, reduced.P_L)
            or full.scenario.gains != reduced.scenario.gains
            or full.scenario.params != reduced.scenario.params):
        raise ValueError("traces come from different scenarios")
    s = full.scenario
    if mu is None:
        mu = s.params.L / (s.gains.k_d + s.params.R)
    m = s.transient_multiplier if multiplier is None else multiplier
    t0 = transient_window(mu, m)
    post = full.t > t0
    if not np.any(post):
        return ManifoldReport(float("nan"), float("nan"), t0, mu)
    manifold = np.abs(full.i_d - full.i_d_star)
    return ManifoldReport(
        manifold_deviation=float(np.max(manifold[post])),
        power_deviation=float(np.max(np.abs(full.P_m - reduced.P_m)[post])),
        t_start=t0, mu=mu,
    )
