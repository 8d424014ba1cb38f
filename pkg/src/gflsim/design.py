"""Gain bounds, sequential gain selection, modulation admissibility and
ramp-rate feasibility sweeps."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .params import (ControlGains, DesignConstraints, SystemParams, TimescaleReport,
                     derive_timescales, loop_gain, participation, validate_params)


class InfeasibleHardware(ValueError):
    """No modulation headroom is left after matching the grid voltage."""


class InfeasibleDesign(RuntimeError):
    """A step of the sequential design failed.

    ``step`` is the 1-based procedure step, ``binding`` names the violated
    constraint and ``bounds`` holds the bounds computed so far.
    """

    def __init__(self, step: int, binding: str, message: str, bounds=None):
        super().__init__(f"step {step}: {binding}: {message}")
        self.step = step
        self.binding = binding
        self.bounds = bounds


@dataclass(frozen=True)
class GainBounds:
    kd_SP: float
    kd_ramp: float
    kd_volt: float
    kd_bw: float
    kd_max: float
    kd_lower: float
    Kpp_SP: float
    H_min: float
    rho_P_max: float
    feasible: bool


@dataclass(frozen=True)
class AdmissibilityReport:
    e_bar: float
    i_d_bar: float
    m_norm_boundary: float
    m_norm_post: float
    admissible: bool


@dataclass(frozen=True)
class DesignResult:
    gains: ControlGains
    bounds: GainBounds
    timescales: TimescaleReport
    admissibility: AdmissibilityReport


@dataclass(frozen=True)
class FeasibilityCurve:
    rho_P_grid: np.ndarray
    kd_SP_curve: np.ndarray
    kd_ramp_curve: np.ndarray
    kd_volt_line: np.ndarray
    kd_bw_line: np.ndarray
    rho_P_crit: float
    rho_P_close: float


def modulation_margin(params: SystemParams) -> float:
    """Voltage left for feedback after the grid-voltage peak is matched."""
    return params.modulation_capacity - math.sqrt(2) * params.V_g


def kd_separation(params: SystemParams, constraints: DesignConstraints) -> float:
    return constraints.alpha * params.L / params.tau_p


def kd_ramp(params: SystemParams, constraints: DesignConstraints, K_pp: float,
            rho_P: float | None = None):
    """Smallest ``k_d`` keeping the quasi-steady ramp tracking error below ``e_max``.

    Affine in ``rho_P``; accepts arrays.
    """
    rho = constraints.rho_P if rho_P is None else rho_P
    beta = 1.5 * params.V_g * K_pp
    return params.L * K_pp * np.asarray(rho) / ((1 + beta) * constraints.e_max)


def kpp_separation(params: SystemParams, constraints: DesignConstraints, k_d: float) -> float:
    """Largest ``K_pp`` with ``tau_eff >= alpha * mu`` at the given ``k_d``."""
    return 2.0 / (3.0 * params.V_g) * (k_d * params.tau_p / (constraints.alpha * params.L) - 1.0)


def ramp_limit(params: SystemParams, constraints: DesignConstraints, K_pp: float,
               k_d: float) -> float:
    """Ramp rate at which ``kd_ramp`` reaches ``k_d``."""
    beta = 1.5 * params.V_g * K_pp
    return (1 + beta) * constraints.e_max * k_d / (params.L * K_pp)


def compute_gain_bounds(params: SystemParams, constraints: DesignConstraints,
                        K_pp: float, k_d: float | None = None) -> GainBounds:
    """All ``k_d`` bounds at droop gain ``K_pp``.

    ``Kpp_SP`` is evaluated at ``k_d`` (defaults to ``kd_max``).

    Raises
    ------
    InfeasibleHardware
        When the modulation margin is not positive.
    """
    if not K_pp > 0:
        raise ValueError("K_pp must be positive")
    H_min = modulation_margin(params)
    if H_min <= 0:
        raise InfeasibleHardware(f"modulation margin H_min = {H_min:.1f} V is not positive")
    kd_sp = kd_separation(params, constraints)
    kd_rp = float(kd_ramp(params, constraints, K_pp))
    kd_volt = H_min / constraints.delta_i_max
    kd_bw = params.L * params.omega_sw / constraints.n
    kd_max = min(kd_volt, kd_bw)
    kd_lower = max(kd_sp, kd_rp)
    k_d = kd_max if k_d is None else k_d
    return GainBounds(
        kd_SP=kd_sp, kd_ramp=kd_rp, kd_volt=kd_volt, kd_bw=kd_bw, kd_max=kd_max,
        kd_lower=kd_lower, Kpp_SP=kpp_separation(params, constraints, k_d), H_min=H_min,
        rho_P_max=ramp_limit(params, constraints, K_pp, kd_max),
        feasible=kd_lower <= kd_max,
    )


def worst_case_current(params: SystemParams, gains: ControlGains, Delta_P: float,
                       e_bar: float) -> float:
    return gains.K_pp * (gains.P_star + Delta_P) / (1 + loop_gain(params, gains)) + e_bar


def worst_case_modulation(params: SystemParams, gains: ControlGains, Delta_P: float,
                          e_bar: float) -> float:
    """Upper bound on the modulation magnitude for tracking errors up to ``e_bar``."""
    i_bar = worst_case_current(params, gains, Delta_P, e_bar)
    v = math.hypot(params.V_g + gains.k_d * e_bar, params.L * params.omega_g * i_bar)
    return v / (params.kappa * params.V_dc_min)


def modulation_admissibility(params: SystemParams, gains: ControlGains,
                             constraints: DesignConstraints,
                             Delta_P: float | None = None) -> AdmissibilityReport:
    """Worst-case modulation during and after the boundary-layer transient.

    ``admissible`` evaluates the squared-voltage condition with the full
    error budget ``delta_i_max``.
    """
    if not params.V_dc_min > 0:
        raise ValueError("V_dc_min must be positive")
    Delta_P = constraints.Delta_P if Delta_P is None else Delta_P
    e_bar = constraints.delta_i_max
    i_bar = worst_case_current(params, gains, Delta_P, e_bar)
    lhs = (params.V_g + gains.k_d * e_bar) ** 2 + (params.L * params.omega_g * i_bar) ** 2
    admissible = lhs <= params.modulation_capacity ** 2
    return AdmissibilityReport(
        e_bar=e_bar, i_d_bar=i_bar,
        m_norm_boundary=worst_case_modulation(params, gains, Delta_P, e_bar),
        m_norm_post=worst_case_modulation(params, gains, Delta_P, constraints.e_max),
        admissible=admissible,
    )


def max_admissible_error(params: SystemParams, gains: ControlGains,
                         Delta_P: float) -> float:
    """Largest error budget for which the modulation condition still holds.

    Positive root of the quadratic obtained by making the condition tight;
    returns 0 if the condition fails even with zero error.
    """
    wL = params.L * params.omega_g
    c = gains.K_pp * (gains.P_star + Delta_P) / (1 + loop_gain(params, gains))
    a2 = gains.k_d ** 2 + wL ** 2
    a1 = 2 * (params.V_g * gains.k_d + wL ** 2 * c)
    a0 = params.V_g ** 2 + (wL * c) ** 2 - params.modulation_capacity ** 2
    if a0 > 0:
        return 0.0
    return (-a1 + math.sqrt(a1 * a1 - 4 * a2 * a0)) / (2 * a2)


def steady_state(params: SystemParams, gains: ControlGains, P_L: float):
    """Reduced-system operating point for a constant load.

    Returns ``(i_d_bar, P_inv_ss, participation)``.
    """
    i_bar = gains.K_pp * (gains.P_star + P_L) / (1 + loop_gain(params, gains))
    return i_bar, 1.5 * params.V_g * i_bar, participation(params, gains)


def sequential_design(params: SystemParams, constraints: DesignConstraints,
                      kd_fraction: float = 0.65, Kpp_fraction: float = 0.83,
                      P_star: float = 20e3, k_d: float | None = None,
                      K_pp: float | None = None, k_q: float | None = None) -> DesignResult:
    """Pick ``k_d`` then ``K_pp`` and verify ramp tracking and modulation.

    1. hardware fixes ``kd_max = min(kd_volt, kd_bw)``;
    2. ``k_d = kd_SP + kd_fraction * (kd_max - kd_SP)`` unless given;
    3. ``K_pp = Kpp_fraction * Kpp_SP(k_d)`` unless given;
    4. check ``kd_ramp(rho_P) <= k_d`` and modulation admissibility.

    ``k_q`` defaults to ``k_d``.

    Raises
    ------
    InfeasibleHardware
        No modulation headroom.
    InfeasibleDesign
        With the failing step and binding constraint.
    """
    if not 0 <= kd_fraction <= 1 or not 0 < Kpp_fraction <= 1:
        raise ValueError("kd_fraction must lie in [0, 1] and Kpp_fraction in (0, 1]")
    validate_params(params, ControlGains(), constraints)

    # step 1
    H_min = modulation_margin(params)
    if H_min <= 0:
        raise InfeasibleHardware(f"modulation margin H_min = {H_min:.1f} V is not positive")
    kd_volt = H_min / constraints.delta_i_max
    kd_bw = params.L * params.omega_sw / constraints.n
    kd_max = min(kd_volt, kd_bw)

    # step 2
    kd_sp = kd_separation(params, constraints)
    if kd_sp > kd_max:
        binding = "kd_SP > kd_volt" if kd_volt <= kd_bw else "kd_SP > kd_bw"
        raise InfeasibleDesign(2, binding, f"separation needs k_d >= {kd_sp:.3g} Ohm, "
                               f"hardware allows <= {kd_max:.3g} Ohm")
    if k_d is None:
        k_d = kd_sp + kd_fraction * (kd_max - kd_sp)
    elif not kd_sp <= k_d <= kd_max:
        raise InfeasibleDesign(2, "k_d outside [kd_SP, kd_max]",
                               f"k_d = {k_d:.3g} not in [{kd_sp:.3g}, {kd_max:.3g}]")

    # step 3
    Kpp_sp = kpp_separation(params, constraints, k_d)
    if Kpp_sp <= 0:
        raise InfeasibleDesign(3, "Kpp_SP <= 0",
                               "k_d sits on the separation bound; no droop gain fits")
    if K_pp is None:
        K_pp = Kpp_fraction * Kpp_sp
    elif not 0 < K_pp <= Kpp_sp:
        raise InfeasibleDesign(3, "K_pp > Kpp_SP", f"K_pp = {K_pp:.3g} exceeds {Kpp_sp:.3g}")

    gains = ControlGains(k_d=k_d, k_q=k_d if k_q is None else k_q, K_pp=K_pp, P_star=P_star)
    bounds = compute_gain_bounds(params, constraints, K_pp, k_d)

    # step 4
    if bounds.kd_ramp > bounds.kd_max:
        raise InfeasibleDesign(4, "kd_ramp > kd_max",
                               f"rho_P = {constraints.rho_P:.3g} W/s exceeds "
                               f"rho_P_max = {bounds.rho_P_max:.3g} W/s", bounds)
    if bounds.kd_ramp > k_d:
        raise InfeasibleDesign(4, "kd_ramp > k_d",
                               f"ramp tracking needs k_d >= {bounds.kd_ramp:.3g} Ohm", bounds)
    admissibility = modulation_admissibility(params, gains, constraints)
    if not admissibility.admissible:
        raise InfeasibleDesign(4, "modulation", "worst-case modulation "
                               f"{admissibility.m_norm_boundary:.3f} exceeds m_max", bounds)
    return DesignResult(gains=gains, bounds=bounds,
                        timescales=derive_timescales(params, gains, constraints),
                        admissibility=admissibility)


def feasibility_sweep(params: SystemParams, constraints: DesignConstraints,
                      rho_grid, K_pp: float) -> FeasibilityCurve:
    """Bound curves over a grid of ramp rates and their crossing points."""
    rho = np.atleast_1d(np.asarray(rho_grid, dtype=float))
    if rho.size == 0:
        raise ValueError("rho_grid must not be empty")
    bounds = compute_gain_bounds(params, replace(constraints, rho_P=0.0), K_pp)
    ones = np.ones_like(rho)
    return FeasibilityCurve(
        rho_P_grid=rho,
        kd_SP_curve=bounds.kd_SP * ones,
        kd_ramp_curve=kd_ramp(params, constraints, K_pp, rho),
        kd_volt_line=bounds.kd_volt * ones,
        kd_bw_line=bounds.kd_bw * ones,
        rho_P_crit=ramp_limit(params, constraints, K_pp, bounds.kd_SP),
        rho_P_close=ramp_limit(params, constraints, K_pp, bounds.kd_max),
    )
