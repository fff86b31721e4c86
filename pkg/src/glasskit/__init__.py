"""Free-energy functionals, coupled-replica overlap bounds and 2-spin Monte Carlo
for spherical pure p-spin spin glasses."""

__version__ = "0.1.0"

from .core import (  # noqa: E402
    DomainError,
    GlasskitError,
    InvalidMatrix,
    ModelSpec,
    NoConvergence,
    NonSymmetric,
    OverlapMatrix,
    SymmetricEigen,
    psd_check,
    sym_eigen,
    theta,
    xi,
)
from .parisi import (  # noqa: E402
    PspinCritical,
    RsbScheme,
    TrivialPhase,
    check_trivial_phase,
    eval_cs_14,
    eval_parisi_13,
    free_energy,
    minimize_parisi,
    pspin_critical,
    solve_q_2spin,
    solve_x,
)
from .bounds import (  # noqa: E402
    BoundInput,
    ExclusionVerdict,
    bound_theorem1,
    chaos_u0,
    coupled_field_bound_U,
    f_theorem1,
    guerra_bound,
    lemma4_value,
    psi_t,
    pspin_coupled_U,
    pspin_dc,
    pspin_tail_U,
    tau,
    ultrametricity_verdict,
)
from .simulator import (  # noqa: E402
    ChainTooShort,
    DisorderSample,
    McConfig,
    McEstimate,
    estimate_overlap_moments,
    lemma2_check,
    mcmc_chain,
    sample_disorder,
)
