"""Two-timescale simulation and gain design for a grid-following inverter
sharing a bursty data-center load with the grid."""

from .controller import NO_CLAMP, ClampConfig
from .design import InfeasibleDesign, InfeasibleHardware, sequential_design
from .load import LoadModel, certify_bounds, generate_load_trace
from .params import (ControlGains, DesignConstraints, ParameterError, SystemParams, baseline,
                     derive_timescales, high_voltage, validate_params)
from .plant import PlantState, SingularStateError
from .sim import Scenario, simulate_full, simulate_reduced

__version__ = "0.1.0"
