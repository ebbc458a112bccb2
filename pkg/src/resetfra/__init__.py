"""Frequency-response analysis and hybrid simulation of parallel-partial
reset control systems."""

from .errors import *  # noqa: F401,F403
from .lti import (Polynomial, TransferFunction, StateSpace, tf_eval, tf_to_ss,
                  ss_to_tf, mat_exp, ss_freq_response, asymptotic_limit,
                  compose, series, parallel, feedback)
from .element import (ResetController, LoopConfig, make_element, base_linear,
                      check_open_loop_stability, gang_of_four, cglp_lead)
from .hosidf import (theta_d, hosidf_rc, hosidf_pp, nonlinear_part,
                     open_loop_harmonics, HarmonicSet, DEFAULT_NH)
from .closedloop import (gamma_factor, closed_loop_harmonics, sensitivity_n,
                         predict_error, predict_control_input,
                         nonlinear_state_segment, signal_norms,
                         prediction_metrics)
from .regions import (first_reset_instant, reset_limits, peak_time,
                      region_indicator, scan_region, piecewise_reconstruct,
                      transient_crossing_count, delta_prime, scan_delta_prime)
from .sim import (simulate, simulate_element, steady_state_window,
                  harmonic_extract, reset_statistics, step_metrics,
                  linear_steady_state, write_trace_csv)
from .config import (SystemConfig, load_config, load_case, list_cases,
                     config_from_dict, validate_config)

__version__ = '0.1.0'
