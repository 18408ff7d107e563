"""Sticky-price mean-field model: Calvo and menu-cost pricing, path-integral control, equilibrium IRFs."""
from .action import (ActionLattice, ControlProblem, WaveGrid, build_action, build_lattice, lq_control_problem,
                     lq_reference, propagate_kernel, solve_foc, solve_kernel)
from .calvo import (AggregatePath, ResetSchedule, aggregate_law_of_motion, calvo_irf_closed_form, decay_rate,
                    optimal_reset, reset_schedule)
from .density import CrossSection
from .errors import *  # noqa: F401,F403
from .jump_diffusion import (AdjustmentTimes, PathEnsemble, SdeSpec, ensemble_stats, sample_adjustment_times,
                             simulate_markup_paths, simulate_sde, step_sde)
from .mean_field import CriticalAlphaReport, EquilibriumResult, find_critical_alpha, solve_equilibrium
from .menu_cost import (PolicyBand, ValueGrid, evolve_density, solve_stationary_vi, solve_time_dependent_vi,
                        stationary_density)
from .params import (ModelParams, StateGrid, TimeGrid, build_state_grid, build_time_grid, validate_params)
from .response import IRFResult, SweepTable, compute_irf, irf_stats, sweep_alpha
from .shell import RunSpec, parse_config, run_command

__version__ = "0.1.0"
