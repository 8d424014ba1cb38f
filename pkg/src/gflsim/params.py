"""Hardware, control and design-rule parameters.

All quantities are SI (H, Ohm, V, F, s, W, A/W). Unit conversion from the
mixed engineering units used in config files happens in :mod:`gflsim.config`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

GRID_FREQUENCY_HZ = 60.0


class ParameterError(ValueError):
    """A parameter set violates one of its invariants."""


@dataclass(frozen=True)
class SystemParams:
    L: float = 2e-3
    R: float = 0.1
    V_g: float = 277.0
    omega_g: float = 2 * math.pi * GRID_FREQUENCY_HZ
    V_dc_nom: float = 1200.0
    V_dc_min: float = 1100.0
    C_dc: float = 10e-3
    tau_p: float = 20e-3
    kappa: float = 0.5
    m_max: float = 0.95
    f_sw: float = 10e3

    @property
    def omega_sw(self) -> float:
        return 2 * math.pi * self.f_sw

    @property
    def modulation_capacity(self) -> float:
        """Largest terminal-voltage magnitude available at ``V_dc_min``."""
        return self.kappa * self.m_max * self.V_dc_min


@dataclass(frozen=True)
class ControlGains:
    k_d: float = 1.2
    k_q: float = 1.2
    K_pp: float = 0.4e-3
    P_star: float = 20e3


@dataclass(frozen=True)
class DesignConstraints:
    alpha: float = 10.0
    e_max: float = 10.0
    delta_i_max: float = 100.0
    n: float = 10.0
    Delta_P: float = 20e3
    rho_P: float = 2e6


@dataclass(frozen=True)
class TimescaleReport:
    mu: float
    tau_eff: float
    ratio: float
    separation_ok: bool


@dataclass(frozen=True)
class ParameterBundle:
    params: SystemParams
    gains: ControlGains
    constraints: DesignConstraints = field(default_factory=DesignConstraints)


def loop_gain(params: SystemParams, gains: ControlGains) -> float:
    """Dimensionless droop loop gain ``1.5 * V_g * K_pp``."""
    return 1.5 * params.V_g * gains.K_pp


def participation(params: SystemParams, gains: ControlGains) -> float:
    """Marginal share of a load change picked up by the inverter in steady state."""
    beta = loop_gain(params, gains)
    return beta / (1.0 + beta)


def _check_system(p: SystemParams) -> None:
    for name in ("L", "R", "V_g", "omega_g", "V_dc_nom", "V_dc_min", "C_dc",
                 "tau_p", "kappa", "m_max", "f_sw"):
        value = getattr(p, name)
        if not (math.isfinite(value) and value > 0):
            raise ParameterError(f"{name} must be positive")
    if p.V_dc_min > p.V_dc_nom:
        raise ParameterError("V_dc_min exceeds nominal")
    if p.m_max > 1:
        raise ParameterError("m_max must not exceed 1")
    if p.kappa > 1:
        raise ParameterError("kappa must not exceed 1")


def _check_gains(g: ControlGains) -> None:
    for name in ("k_d", "k_q", "K_pp"):
        value = getattr(g, name)
        if not (math.isfinite(value) and value > 0):
            raise ParameterError(f"{name} must be positive")
    if not math.isfinite(g.P_star):
        raise ParameterError("P_star must be finite")


def _check_constraints(c: DesignConstraints) -> None:
    if not c.alpha >= 1:
        raise ParameterError("alpha must be at least 1")
    if not 5 <= c.n <= 10:
        raise ParameterError("n must lie in [5, 10]")
    if not c.e_max > 0:
        raise ParameterError("e_max must be positive")
    if c.e_max > c.delta_i_max:
        raise ParameterError("e_max exceeds delta_i_max")
    if not c.Delta_P >= 0:
        raise ParameterError("Delta_P must be non-negative")
    if not c.rho_P >= 0:
        raise ParameterError("rho_P must be non-negative")


def validate_params(params: SystemParams, gains: ControlGains,
                    constraints: DesignConstraints | None = None) -> ParameterBundle:
    """Check every invariant and return the bundle.

    Raises
    ------
    ParameterError
        Naming the first violated invariant, e.g. ``"K_pp must be positive"``.
    """
    constraints = constraints if constraints is not None else DesignConstraints()
    _check_system(params)
    _check_gains(gains)
    _check_constraints(constraints)
    return ParameterBundle(params, gains, constraints)


def derive_timescales(params: SystemParams, gains: ControlGains,
                      constraints: DesignConstraints | None = None) -> TimescaleReport:
    """Fast time constant, effective slow time constant and their ratio."""
    bundle = validate_params(params, gains, constraints)
    mu = params.L / (gains.k_d + params.R)
    tau_eff = params.tau_p / (1.0 + loop_gain(params, gains))
    ratio = tau_eff / mu
    return TimescaleReport(mu=mu, tau_eff=tau_eff, ratio=ratio,
                           separation_ok=ratio >= bundle.constraints.alpha)


def baseline() -> ParameterBundle:
    """The 20 kW, 1200 V reference design."""
    return ParameterBundle(SystemParams(), ControlGains(), DesignConstraints())


def high_voltage() -> ParameterBundle:
    """The 1500 V design: more modulation headroom, larger droop gain."""
    return ParameterBundle(
        SystemParams(V_dc_nom=1500.0, V_dc_min=1399.0),
        ControlGains(k_d=2.30, k_q=2.30, K_pp=2.7e-3),
        DesignConstraints(),
    )
