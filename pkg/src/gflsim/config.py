"""Flat dotted-key JSON run configuration.

Keys carry their engineering unit as a suffix (``system.L_mH``,
``gains.Kpp_mA_per_W``); values are converted to SI when parsed. Missing
keys fall back to the 1200 V reference design, unknown keys are rejected.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

from .controller import NO_CLAMP, ClampConfig
from .load import LoadModel
from .params import ControlGains, DesignConstraints, SystemParams
from .sim import Scenario


class ConfigError(ValueError):
    pass


# key -> (section, field, scale to SI)
NUMERIC_KEYS = {
    "system.L_mH": ("system", "L", 1e-3),
    "system.R_ohm": ("system", "R", 1.0),
    "system.Vg_V": ("system", "V_g", 1.0),
    "system.fgrid_Hz": ("system", "omega_g", 2 * math.pi),
    "system.Vdc_nom_V": ("system", "V_dc_nom", 1.0),
    "system.Vdc_min_V": ("system", "V_dc_min", 1.0),
    "system.Cdc_mF": ("system", "C_dc", 1e-3),
    "system.tau_p_ms": ("system", "tau_p", 1e-3),
    "system.kappa": ("system", "kappa", 1.0),
    "system.m_max": ("system", "m_max", 1.0),
    "system.fsw_kHz": ("system", "f_sw", 1e3),
    "gains.kd_ohm": ("gains", "k_d", 1.0),
    "gains.kq_ohm": ("gains", "k_q", 1.0),
    "gains.Kpp_mA_per_W": ("gains", "K_pp", 1e-3),
    "gains.Pstar_kW": ("gains", "P_star", 1e3),
    "constraints.alpha": ("constraints", "alpha", 1.0),
    "constraints.e_max_A": ("constraints", "e_max", 1.0),
    "constraints.delta_i_max_A": ("constraints", "delta_i_max", 1.0),
    "constraints.n": ("constraints", "n", 1.0),
    "constraints.Delta_P_kW": ("constraints", "Delta_P", 1e3),
    "constraints.rho_P_MW_s": ("constraints", "rho_P", 1e6),
    "load.P_base_kW": ("load", "P_base", 1e3),
    "load.rho_b_kW_s": ("load", "rho_b", 1e3),
    "load.lambda_per_s": ("load", "lam", 1.0),
    "load.b_max_kW": ("load", "b_max", 1e3),
    "load.tau_filter_ms": ("load", "tau_filter", 1e-3),
    "load.tau_rise_ms": ("load", "tau_rise", 1e-3),
    "load.pulse_width_ms": ("load", "pulse_width", 1e-3),
    "load.M_w_kW": ("load", "M_w", 1e3),
    "load.base_swing_kW": ("load", "base_swing", 1e3),
    "design.kd_fraction": ("design", "kd_fraction", 1.0),
    "design.Kpp_fraction": ("design", "Kpp_fraction", 1.0),
    "scenario.P_dc_in_kW": ("scenario", "P_dc_in", 1e3),
    "scenario.clamp_A": ("scenario", "clamp_A", 1.0),
    "scenario.Pstar_step_kW": ("scenario", "step_size", 1e3),
    "scenario.step_time_s": ("scenario", "step_time", 1.0),
    "scenario.Vdc0_V": ("scenario", "V_dc0", 1.0),
    "scenario.transient_multiplier": ("scenario", "transient_multiplier", 1.0),
    "scenario.constant_load_kW": ("scenario", "constant_load", 1e3),
    "feasibility.rho_min_MW_s": ("feasibility", "rho_min", 1e6),
    "feasibility.rho_max_MW_s": ("feasibility", "rho_max", 1e6),
    "validate.tolerance_scale": ("validate", "tolerance_scale", 1.0),
    "dt_us": ("run", "dt", 1e-6),
    "horizon_s": ("run", "horizon", 1.0),
}
INT_KEYS = {"load.seed": ("load", "seed"), "seed": ("run", "seed"),
            "feasibility.points": ("feasibility", "points")}
STR_KEYS = {
    "scenario.dc_mode": ("balanced", "constant"),
    "scenario.init": ("reduced-equilibrium", "equilibrium"),
    "scenario.modulation": ("monitor", "clip"),
    "output_dir": None,
}
BOOL_KEYS = {"scenario.anti_windup"}


@dataclass
class RunConfig:
    system: SystemParams = field(default_factory=SystemParams)
    gains: ControlGains = field(default_factory=ControlGains)
    constraints: DesignConstraints = field(default_factory=DesignConstraints)
    load: LoadModel = field(default_factory=LoadModel)
    kd_fraction: float = 0.65
    Kpp_fraction: float = 0.83
    explicit_gains: bool = False
    dc_mode: str = "balanced"
    P_dc_in: float | None = None
    init: str = "reduced-equilibrium"
    modulation: str = "monitor"
    clamp: ClampConfig = NO_CLAMP
    setpoint_step: tuple[float, float] | None = None
    V_dc0: float | None = None
    transient_multiplier: float = 5.0
    constant_load: float | None = None
    rho_min: float = 0.0
    rho_max: float = 25e6
    points: int = 251
    tolerance_scale: float = 1.0
    output_dir: str = "."
    seed: int | None = None
    dt: float = 50e-6
    horizon: float = 10.0
    source: str = ""

    def scenario(self) -> Scenario:
        load = self.load if self.seed is None else self.load.with_seed(self.seed)
        return Scenario(
            params=self.system, gains=self.gains, constraints=self.constraints,
            clamp=self.clamp, load=load if self.constant_load is None else self.constant_load,
            dc_mode=self.dc_mode, P_dc_in=self.P_dc_in, initial_state=self.init,
            horizon=self.horizon, dt=self.dt, modulation=self.modulation,
            setpoint_step=self.setpoint_step, V_dc0=self.V_dc0,
            transient_multiplier=self.transient_multiplier,
        )

    def load_model(self) -> LoadModel:
        return self.load if self.seed is None else self.load.with_seed(self.seed)


def parse_config(data: dict, source: str = "") -> RunConfig:
    """Build a :class:`RunConfig` from a flat dotted-key mapping."""
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    unknown = sorted(set(data) - set(NUMERIC_KEYS) - set(INT_KEYS) - set(STR_KEYS) - BOOL_KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")

    sections: dict[str, dict] = {s: {} for s in ("system", "gains", "constraints", "load",
                                                  "design", "scenario", "feasibility",
                                                  "validate", "run")}
    for key, value in data.items():
        if key in NUMERIC_KEYS:
            section, name, scale = NUMERIC_KEYS[key]
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"{key} must be a number")
            sections[section][name] = float(value) * scale
        elif key in INT_KEYS:
            section, name = INT_KEYS[key]
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(f"{key} must be an integer")
            sections[section][name] = value
        elif key in BOOL_KEYS:
            if not isinstance(value, bool):
                raise ConfigError(f"{key} must be true or false")
            sections["scenario"]["anti_windup"] = value
        else:
            allowed = STR_KEYS[key]
            if not isinstance(value, str) or (allowed and value not in allowed):
                raise ConfigError(f"{key} must be one of {allowed}" if allowed
                                  else f"{key} must be a string")
            sections["scenario" if key.startswith("scenario.") else "run"][key.split(".")[-1]] = value

    g = sections["gains"]
    if "k_d" in g and "k_q" not in g:
        g["k_q"] = g["k_d"]
    cfg = RunConfig(
        system=replace(SystemParams(), **sections["system"]),
        gains=replace(ControlGains(), **g),
        constraints=replace(DesignConstraints(), **sections["constraints"]),
        load=replace(LoadModel(), **sections["load"]) if sections["load"] else LoadModel(),
        explicit_gains="k_d" in g or "K_pp" in g,
        source=source,
    )
    for name, value in {**sections["design"], **sections["feasibility"],
                        **sections["validate"]}.items():
        setattr(cfg, name, value)
    sc, run = sections["scenario"], sections["run"]
    for name in ("dc_mode", "P_dc_in", "init", "modulation", "V_dc0",
                 "transient_multiplier", "constant_load"):
        if name in sc:
            setattr(cfg, name, sc[name])
    if sc.get("clamp_A", 0.0) > 0:
        cfg.clamp = ClampConfig(True, sc["clamp_A"], sc.get("anti_windup", True))
    if "step_size" in sc:
        cfg.setpoint_step = (sc.get("step_time", 0.0), sc["step_size"])
    for name in ("dt", "horizon", "seed", "output_dir"):
        if name in run:
            setattr(cfg, name, run[name])
    if cfg.points < 1:
        raise ConfigError("feasibility.points must be at least 1")
    return cfg


def load_config(path: str | Path) -> RunConfig:
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc.msg} at line {exc.lineno})") from exc
    return parse_config(data, str(path))


def bundled_config(name: str) -> RunConfig:
    """Load one of the shipped configs: ``"baseline"`` or ``"high_voltage"``."""
    text = resources.files("gflsim").joinpath("data", f"{name}.json").read_text()
    return parse_config(json.loads(text), f"<bundled {name}>")
