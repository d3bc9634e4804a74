"""LP-based adaptive allocation for online revenue management.

A finite-support market feeds a deterministic "fluid" LP; the adaptive
policy re-solves a sampled version of that LP every period and accepts
arrivals with the resulting proportions.  Stability machinery quantifies
when the fluid optimum is robust to sampling noise (constant regret) and
when it is not (square-root-of-horizon regret).
"""

from .errors import (DegenerateError, DimensionError, FluidgateError,
                     OracleLimitError, SolverFailure, UsageError,
                     ValidationError)
from .lp import (DenseLp, LpSolution, NondegeneracyReport, StandardFormLp,
                 check_nondegenerate, enumerate_dual_bfs, enumerate_vertices,
                 solve, to_standard_form)
from .market import (CountState, Market, OrderType, RealizedSequence,
                     build_dlp, build_hindsight_collapsed, build_hindsight_lp,
                     build_sampled_lp, check_market, episode_rngs,
                     episode_seed, load_market, market_from_dict,
                     market_to_dict, sample_arrival, sample_sequence,
                     save_market, validate)
from .policies import (ACCEPTANCE_MODES, POLICY_KINDS, UNSEEN_RULES, Decision,
                       DecisionContext, PolicyConfig, PolicyEngine,
                       acceptance_probabilities, decide)
from .simulator import (DecompositionReport, EpisodeResult, EpisodeStep,
                        HorizonSummary, PairedReport, RegretReport, SlopeFit,
                        StoppingBox, compare_known_unknown,
                        estimate_decomposition, fit_loglog_slope, run_batch,
                        run_episode, stopping_box, stopping_threshold)
from .stability import (Classification, StabilityReport, bound_degenerate,
                        bound_nondegenerate, check_perturbation_invariance,
                        classify, compute_L, compute_constants,
                        compute_lambda_bar, stability_report)

__version__ = "0.1.0"
