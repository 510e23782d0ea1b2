"""Spring-mass benchmark: plant, control signals, metrics and experiments."""
from .plant import MechanicalSystemParams, plant_force, simulate_plant, static_response
from .metrics import error_l1, error_l2_normalized
from .signals import (
    ExperimentConfig, add_noise, downsample, gen_discrete_control, gen_reflected_walk,
    sample_holds,
)
from .experiment import (
    Scenario, convergence_trace, default_config, plant_black_box, run_experiment, run_grid,
    table_cells,
)
