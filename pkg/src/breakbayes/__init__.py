"""Least-squares and conjugate Bayesian inference for a single structural break."""

from __future__ import annotations

__version__ = "0.1.0"

from breakbayes.asymptotic import (
    QLimitConfig,
    WstarConfig,
    WstarSample,
    q_limit,
    simulate_wstar,
    simulate_wstar_adaptive,
)
from breakbayes.bayes import (
    ConjugatePosteriorAtTau,
    ConjugatePrior,
    TauPosterior,
    bvm_diagnostic,
    credible_interval_gamma,
    gamma_conditional,
    hpd_set_tau,
    sample_joint,
    sigma2_conditional,
    tau_posterior,
    update_at_tau,
)
from breakbayes.errors import (
    BreakbayesError,
    CellAbortedError,
    ConfigError,
    DegeneratePosteriorError,
    DivergingArgmaxError,
    DomainError,
    IncompleteReportError,
    SchemaError,
    SingularDesignError,
)
from breakbayes.frequentist import LsEstimate, break_ci_wstar, ilr_set, ls_fit, slope_ci
from breakbayes.intervals import IntervalKind, IntervalSet
from breakbayes.kernels import BACKEND
from breakbayes.model import (
    BreakGrid,
    Dataset,
    OlsFit,
    build_design,
    ols_at_break,
    ssr_profile,
    strict_floor,
)
from breakbayes.simulation import (
    DgpSpec,
    ExperimentReport,
    ProtocolSpec,
    generate,
    length_ratio_summary,
    run_cell,
)

__all__ = [name for name in dir() if not name.startswith("_")]
