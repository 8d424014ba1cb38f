"""Validation statistics extracted from simulation traces."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass

import numpy as np

from .load import BoundCertificate, LoadModel
from .params import DesignConstraints, derive_timescales
from .sim import SimTrace, compare_reduced_full, transient_window


class FitQualityError(ValueError):
    """The fit window does not hold a clean exponential segment."""

    def __init__(self, message: str, r2: float):
        super().__init__(f"{message} (R^2 = {r2:.6f})")
        self.r2 = r2


@dataclass(frozen=True)
class PowerSharing:
    mean_P_inv: float
    mean_P_net: float
    mean_P_L: float
    participation_empirical: float  # nan when the load does not vary
    horizon_ok: bool


@dataclass(frozen=True)
class BoundAudit:
    amplitude: int
    ramp: int
    modulation: int
    tracking: int

    @property
    def total(self) -> int:
        return self.amplitude + self.ramp + self.modulation + self.tracking


@dataclass(frozen=True)
class MetricsReport:
    tau_fit: float
    tau_expected: float
    m_norm_max_boundary: float
    m_norm_max_post: float
    mean_P_inv: float
    mean_P_net: float
    mean_P_L: float
    participation_empirical: float
    sup_Pm: float
    bound_violations: int
    manifold_deviation: float
    horizon_ok: bool = True
    seed: int | None = None
    scenario_hash: str = ""


def fit_time_constant(trace: SimTrace, signal: str = "P_m", window=None,
                      final_value: float | None = None, min_r2: float = 0.999) -> float:
    """Least-squares time constant of an exponential settling segment.

    Fits the slope of ``log|x - x_inf|`` over ``window``. ``x_inf`` defaults
    to the mean of the last 5 % of the signal, so the trace should run well
    past the window.

    Raises
    ------
    FitQualityError
        If the deviation is not monotone or the log-linear fit has
        ``R^2 < min_r2``.
    """
    t = np.asarray(trace.t)
    x = np.asarray(getattr(trace, signal), dtype=float)
    if final_value is None:
        tail = max(1, len(x) // 20)
        final_value = float(np.mean(x[-tail:]))
    t0, t1 = (t[0], t[-1]) if window is None else window
    sel = (t >= t0) & (t <= t1)
    dev = np.abs(x[sel] - final_value)
    ts = t[sel]
    if dev.size < 3 or dev.max() == 0:
        raise FitQualityError("window holds no settling segment", 0.0)
    keep = dev > 1e-4 * dev.max()
    dev, ts = dev[keep], ts[keep]
    if dev.size < 3:
        raise FitQualityError("window holds no settling segment", 0.0)
    if np.any(np.diff(dev) > 1e-9 * dev.max()):
        raise FitQualityError("deviation is not monotone in the window", 0.0)
    y = np.log(dev)
    slope, intercept = np.polyfit(ts, y, 1)
    resid = y - (slope * ts + intercept)
    r2 = 1 - resid.var() / y.var() if y.var() > 0 else 0.0
    if r2 < min_r2 or slope >= 0:
        raise FitQualityError("segment is not a clean exponential", r2)
    return -1.0 / slope


def _mu(trace: SimTrace) -> float:
    s = trace.scenario
    return s.params.L / (s.gains.k_d + s.params.R)


def modulation_stats(trace: SimTrace, mu: float | None = None,
                     multiplier: float | None = None):
    """Peak modulation magnitude inside and after the boundary-layer window.

    Returns ``(boundary_max, post_max)``; a window without samples gives nan.
    """
    mu = _mu(trace) if mu is None else mu
    m = trace.scenario.transient_multiplier if multiplier is None else multiplier
    t0 = transient_window(mu, m)
    inside = trace.t <= t0
    peak = lambda sel: float(np.max(trace.m_norm[sel])) if np.any(sel) else math.nan  # noqa: E731
    return peak(inside), peak(~inside)


def _block_means(x: np.ndarray, size: int) -> np.ndarray:
    k = len(x) // size
    return x[: k * size].reshape(k, size).mean(axis=1)


def power_sharing_stats(trace: SimTrace, block: float | None = None) -> PowerSharing:
    """Time-averaged power split and the marginal participation factor.

    The participation factor is the least-squares slope of block-averaged
    ``P_inv`` against block-averaged ``P_L`` over post-transient samples;
    averaging over blocks much longer than ``tau_eff`` removes the filter lag
    that biases an instantaneous regression. Blocks default to
    ``10 * tau_eff``.
    """
    s = trace.scenario
    ts = derive_timescales(s.params, s.gains, s.constraints)
    horizon = float(trace.t[-1] - trace.t[0]) if len(trace) else 0.0
    means = [float(np.mean(a)) if len(a) else math.nan
             for a in (trace.P_inv, trace.P_net, trace.P_L)]

    post = trace.t > transient_window(ts.mu, s.transient_multiplier)
    dt = s.dt
    size = max(1, int(round((10 * ts.tau_eff if block is None else block) / dt)))
    xb = _block_means(trace.P_L[post], size)
    yb = _block_means(trace.P_inv[post], size)
    slope = math.nan
    if len(xb) >= 3 and np.var(xb) > 1e-12 * max(1.0, np.mean(xb) ** 2):
        slope = float(np.polyfit(xb, yb, 1)[0])
    return PowerSharing(*means, participation_empirical=slope,
                        horizon_ok=horizon >= 50 * ts.tau_eff)


def audit_bounds(trace: SimTrace, certificate: BoundCertificate,
                 constraints: DesignConstraints | None = None) -> BoundAudit:
    """Count samples breaking the load certificate, the modulation limit or the
    tracking-error budget."""
    if len(trace) == 0:
        return BoundAudit(0, 0, 0, 0)
    c = trace.scenario.constraints if constraints is None else constraints
    slack = 1 + 1e-9
    amplitude = int(np.sum(np.abs(trace.P_L) > certificate.Delta_P * slack))
    ramp = 0
    if len(trace) > 1:
        rate = np.abs(np.diff(trace.P_L)) / np.diff(trace.t)
        ramp = int(np.sum(rate > certificate.rho_P * slack))
    modulation = int(np.sum(trace.m_norm > trace.scenario.params.m_max))
    tracking = int(np.sum(np.abs(trace.e_d) > c.delta_i_max * slack))
    return BoundAudit(amplitude, ramp, modulation, tracking)


def _jsonable(obj):
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: _jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, np.ndarray):
        return {"sha256": hashlib.sha256(np.ascontiguousarray(obj).tobytes()).hexdigest(),
                "len": int(obj.size)}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


def scenario_hash(scenario) -> str:
    blob = json.dumps(_jsonable(scenario), sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def metrics_report(trace: SimTrace, certificate: BoundCertificate | None = None,
                   reduced: SimTrace | None = None, fit_window=None) -> MetricsReport:
    """Assemble every statistic available for ``trace``.

    ``tau_fit`` needs ``fit_window``, the manifold deviation needs a
    ``reduced`` companion trace; missing pieces are reported as nan.
    """
    s = trace.scenario
    ts = derive_timescales(s.params, s.gains, s.constraints)
    tau_fit = fit_time_constant(trace, window=fit_window) if fit_window else math.nan
    m_b, m_p = modulation_stats(trace)
    share = power_sharing_stats(trace)
    violations = audit_bounds(trace, certificate).total if certificate else \
        int(np.sum(trace.saturated))
    manifold = compare_reduced_full(trace, reduced).manifold_deviation if reduced else math.nan
    seed = s.load.seed if isinstance(s.load, LoadModel) else None
    return MetricsReport(
        tau_fit=tau_fit, tau_expected=ts.tau_eff, m_norm_max_boundary=m_b,
        m_norm_max_post=m_p, mean_P_inv=share.mean_P_inv, mean_P_net=share.mean_P_net,
        mean_P_L=share.mean_P_L, participation_empirical=share.participation_empirical,
        sup_Pm=float(np.max(np.abs(trace.P_m))) if len(trace) else math.nan,
        bound_violations=violations, manifold_deviation=manifold,
        horizon_ok=share.horizon_ok, seed=seed, scenario_hash=scenario_hash(s),
    )


def report_to_json(report) -> str:
    """Serialize a report dataclass; nan becomes ``null``."""
    def clean(v):
        if isinstance(v, float) and not math.isfinite(v):
            return None
        if isinstance(v, dict):
            return {k: clean(x) for k, x in v.items()}
        if isinstance(v, list):
            return [clean(x) for x in v]
        return v
    return json.dumps(clean(_jsonable(report)), indent=2, sort_keys=True)

