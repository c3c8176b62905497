"""Barrier dynamics, mass-transport order and quasi-solutions for the
mass-conserving one-phase free-boundary heat problem."""
from .errors import (ConfigurationError, ConvergenceError, DomainError, FbpError,
                     GridMismatchError, OrderError, VelocitySearchError)
from .profile import (GridSpec, MassProfile, add, block_profile, displacement_map, edge,
                      l1_distance, left_cut, leq_modulo, load_profile, midpoint, order_excess,
                      quantile_edge, right_cut, save_profile, scale, stationary_profile,
                      stationary_tail, sup_tail_distance, tail_mass, total_mass,
                      triangle_profile, zero_profile)
from .heatkernel import HeatStepPlan, heat_step, kernel_value, plan_heat_step
from .barriers import (BarrierRun, SeparatingElement, cut_and_paste, lower_step, run_barriers,
                       separating_element, upper_step)
from .movingboundary import (EdgePath, QuasiSolution, SandwichReport, SliceResult,
                             build_quasi_solution, find_velocity, sandwich_check, solve_slice)
from .mcoracle import McConfig, mc_mass_loss, mc_profile, mc_simulate, sample_hitting

__version__ = "0.1.0"
