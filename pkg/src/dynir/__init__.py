"""Multi-page dynamic ranking with a Gaussian relevance belief and click feedback."""
from .click_model import RankBias, click_likelihood, enumerate_truncated
from .errors import (CapacityError, ConfigError, DynIRError, EmptyPoolError, InsufficientSamplesError,
                     InvalidInputError, ParseError, UnsupportedMetricError)
from .metrics import Judgments, expected_dcg, expected_search_length
from .planner import (PlanConfig, PlanResult, dir_mps, dir_mps_exact, iir_mps, iir_prp_mps,
                      perfect_click_variant, prp_rank, s_mps)
from .relevance_model import RelevanceBelief, ScoreEnsemble, build_belief, condition_on_observation

__version__ = "0.1.0"
