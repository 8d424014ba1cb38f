"""Averaged dq-frame plant: RL filter, DC link and power-measurement filter."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .params import SystemParams


class SingularStateError(RuntimeError):
    """The DC-link voltage reached zero or below; the model is undefined there."""


@dataclass(frozen=True)
class PlantState:
    i_d: float
    i_q: float
    V_dc: float
    P_m: float

    def as_array(self) -> np.ndarray:
        return np.array([self.i_d, self.i_q, self.V_dc, self.P_m], dtype=float)

    @classmethod
    def from_array(cls, x) -> "PlantState":
        return cls(float(x[0]), float(x[1]), float(x[2]), float(x[3]))


@dataclass(frozen=True)
class PlantInputs:
    v_d: float
    v_q: float
    P_dc_in: float
    P_L: float


@dataclass(frozen=True)
class PowerBalance:
    P_inv: float
    P_net: float


def inverter_power(i_d, params: SystemParams):
    return 1.5 * params.V_g * i_d


def plant_derivative(state: PlantState, inputs: PlantInputs,
                     params: SystemParams) -> np.ndarray:
    """Time derivative of ``(i_d, i_q, V_dc, P_m)``.

    Raises
    ------
    SingularStateError
        If ``V_dc <= 0`` (DC-link collapse).
    """
    if not state.V_dc > 0:
        raise SingularStateError(f"DC-link collapse: V_dc = {state.V_dc!r} V")
    p = params
    P_inv = inverter_power(state.i_d, p)
    return np.array([
        (-p.R * state.i_d + p.L * p.omega_g * state.i_q + inputs.v_d - p.V_g) / p.L,
        (-p.R * state.i_q - p.L * p.omega_g * state.i_d + inputs.v_q) / p.L,
        (inputs.P_dc_in - P_inv) / (p.C_dc * state.V_dc),
        (-state.P_m + P_inv - inputs.P_L) / p.tau_p,
    ])


def pcc_power_balance(state: PlantState, P_L: float, params: SystemParams) -> PowerBalance:
    """Split the load at the point of common coupling into inverter and grid shares."""
    P_inv = inverter_power(state.i_d, params)
    return PowerBalance(P_inv=P_inv, P_net=P_L - P_inv)
