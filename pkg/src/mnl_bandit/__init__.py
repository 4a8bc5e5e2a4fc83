"""Contextual multinomial-logit bandits: choice model, estimation, policies and a simulation harness."""

__version__ = "0.1.0"

from .assortment import (
    OptimisticUtilities,
    argmax_assortment,
    enumerate_oracle,
    optimistic_revenue,
    optimistic_utilities,
)
from .errors import (
    ConfigError,
    DomainError,
    GuardExceeded,
    LevelExhausted,
    MnlBanditError,
    ReplicationFailed,
    SingularDesign,
    TooLarge,
    UnknownAlgorithm,
)
from .estimation import (
    ConfidenceConfig,
    GramMatrix,
    MleReport,
    SampleLog,
    min_eigenvalue,
    mle_fit,
    mnl_gradient,
    mnl_neg_log_likelihood,
    online_newton_step,
    prediction_error_bound,
    radius_dbl,
    radius_online,
    radius_sup,
    radius_ucb,
    weighted_norm,
)
from .model import (
    OUTSIDE,
    Assortment,
    ChoiceOutcome,
    ContextSlate,
    choice_probabilities,
    expected_revenue,
    oracle_assortment,
    sample_choice,
)
from .policies import Algorithm, DblMnl, PolicyConfig, SupCbMnl, UcbMnl, UcbMnlOns, policy_factory
from .simulator import (
    ContextDist,
    Environment,
    EnvironmentConfig,
    RegretTrace,
    RevenueMode,
    RunSummary,
    generate_environment,
    run_one,
    run_replications,
)
