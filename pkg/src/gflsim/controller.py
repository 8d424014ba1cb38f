"""Composite controller: droop reference, inner current loop, feedback
linearization and modulation-index synthesis."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .params import ControlGains, SystemParams
from .plant import PlantState, SingularStateError

MODULATION_MODES = ("monitor", "clip")


@dataclass(frozen=True)
class ClampConfig:
    """Optional symmetric limit on the droop current reference.

    The droop law has no integrator, so ``anti_windup`` only means the clamp
    is applied before feedback linearization and downstream voltages follow
    the clamped reference.
    """

    enabled: bool = False
    i_d_star_max: float = 48.1
    anti_windup: bool = True

    def __post_init__(self):
        if self.enabled and not self.i_d_star_max > 0:
            raise ValueError("i_d_star_max must be positive when the clamp is enabled")

    @classmethod
    def from_rating(cls, P_rated: float, params: SystemParams, anti_windup=True):
        """Clamp at the current that delivers ``P_rated`` into the grid voltage."""
        return cls(True, P_rated / (1.5 * params.V_g), anti_windup)


NO_CLAMP = ClampConfig()


@dataclass(frozen=True)
class ControlOutput:
    i_d_star: float
    u_d: float
    u_q: float
    v_d: float
    v_q: float
    m_d: float
    m_q: float
    m_norm: float
    saturated: bool


def droop_reference(P_m: float, gains: ControlGains, clamp: ClampConfig = NO_CLAMP) -> float:
    i_d_star = gains.K_pp * (gains.P_star - P_m)
    if clamp.enabled:
        i_d_star = np.clip(i_d_star, -clamp.i_d_star_max, clamp.i_d_star_max)
    return i_d_star


def inner_loop(i_d: float, i_q: float, i_d_star: float, gains: ControlGains):
    """First-order tracking virtual inputs ``(u_d, u_q)``."""
    return -gains.k_d * (i_d - i_d_star), -gains.k_q * i_q


def feedback_linearize(state: PlantState, u_d: float, u_q: float, params: SystemParams):
    """Cancel grid voltage and dq cross-coupling; returns ``(v_d, v_q)``."""
    wL = params.L * params.omega_g
    return params.V_g - wL * state.i_q + u_d, wL * state.i_d + u_q


def modulation_indices(v_d: float, v_q: float, V_dc: float, params: SystemParams):
    """Return ``(m_d, m_q, m_norm, saturated)``.

    Saturation is reported, never clipped here; see :func:`clip_modulation`.
    Works elementwise on arrays.
    """
    if not np.all(np.asarray(V_dc) > 0):
        raise SingularStateError(f"DC-link collapse: V_dc = {np.min(V_dc)!r} V")
    scale = params.kappa * V_dc
    m_d, m_q = v_d / scale, v_q / scale
    m_norm = np.hypot(m_d, m_q)
    return m_d, m_q, m_norm, m_norm > params.m_max


def clip_modulation(m_d: float, m_q: float, m_max: float):
    """Radial projection of ``(m_d, m_q)`` onto the disc of radius ``m_max``."""
    norm = np.hypot(m_d, m_q)
    scale = m_max / np.maximum(norm, m_max)
    return m_d * scale, m_q * scale


def controller_step(state: PlantState, gains: ControlGains, clamp: ClampConfig,
                    params: SystemParams, modulation: str = "monitor") -> ControlOutput:
    """Evaluate the full control chain at one state.

    In ``"clip"`` mode the applied voltages come from the radially clipped
    modulation indices; ``m_d``, ``m_q``, ``m_norm`` and ``saturated`` still
    describe the unclipped command so traces show the violation.
    """
    if modulation not in MODULATION_MODES:
        raise ValueError(f"unknown modulation mode {modulation!r}")
    i_d_star = droop_reference(state.P_m, gains, clamp)
    u_d, u_q = inner_loop(state.i_d, state.i_q, i_d_star, gains)
    v_d, v_q = feedback_linearize(state, u_d, u_q, params)
    m_d, m_q, m_norm, saturated = modulation_indices(v_d, v_q, state.V_dc, params)
    if modulation == "clip":
        cd, cq = clip_modulation(m_d, m_q, params.m_max)
        v_d = np.where(saturated, cd * params.kappa * state.V_dc, v_d)
        v_q = np.where(saturated, cq * params.kappa * state.V_dc, v_q)
    return ControlOutput(i_d_star, u_d, u_q, v_d, v_q, m_d, m_q, m_norm, saturated)
