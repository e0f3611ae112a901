"""Pathwise Young calculus and Monte-Carlo BSDE solvers with a Young drift."""

__version__ = "0.1.0"

from .errors import NumericalAbort, ValidationError
from .paths import (DiscretePath, TimeGrid, brute_force_pvar, from_csv, merge_grids,
                    pvar_norm, pvar_suffix, sup_norm, to_csv, var_distance)
from .young import (OdeSpec, composition_lemma_check, ode_solve, product_lemma_check,
                    young_bound_report, young_constant, young_integral)
from .signals import (EtaSpec, approximation_sequence, generate_eta, ladder_distances,
                      moving_average, qvar_profile)
from .montecarlo import (BrownianEnsemble, ForwardEnsemble, SdeSpec, euler_maruyama,
                         sample_brownian)
from .bsde import (BsdeProblem, BsdeSolution, Driver, RegressionSpec, bdg_diagnostic,
                   bmo_norm_estimate, bp_norm_estimate, comparison_check,
                   lipschitz_in_xi, solve_backward, solve_picard, stability_in_eta)
from .rpde import (PdeProblem, PdeSolution, barrier_bounds, fd_reference_solve,
                   feynman_kac_solve, modulus_check, rough_convergence_study)
