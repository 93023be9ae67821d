"""Decentralized random-finite-set swarm control.

Estimation of a swarm's Gaussian-mixture intensity with a GM-PHD filter,
trajectory optimization of the mixture means with iterative LQR over a
mixture-distance cost, and localization/decentralization of the resulting
feedback gain with ADMM-based sparsity-promoting LQR.
"""

from .dynamics import (
    LinearPlant,
    SwarmPlant,
    build_swarm_plant,
    cw_matrices,
    cw_plant,
    make_plant,
    orbital_rate,
)
from .gaussmix import (
    GaussianComponent,
    GmIntensity,
    eval_gaussian,
    mixture_l2_distance_sq,
    mixture_l2_inner,
    predict_component,
)
from .ilqr import (
    GainSchedule,
    IlqrOptions,
    IlqrResult,
    QuadraticCost,
    Trajectory,
    backward_pass,
    extract_static_gain,
    forward_pass,
    ilqr_solve,
    rollout,
)
from .mateq import (
    solve_continuous_lyapunov,
    solve_discrete_lyapunov,
    solve_sylvester,
    zoh_discretize,
)
from .phd import (
    BirthModel,
    PhdConfig,
    SensorModel,
    SpawnTemplate,
    expected_count,
    extract_states,
    phd_predict,
    phd_update,
    prune_merge,
)
from .rfscost import (
    CostDerivatives,
    RfsCostModel,
    RfsObjective,
    StackedState,
    cost_derivatives,
    mixture_distance_sq,
    running_cost,
)
from .sparselqr import (
    AdmmOptions,
    AdmmResult,
    BlockPartition,
    FeedbackGain,
    FMinOptions,
    SparseLqrProblem,
    SweepEntry,
    admm_sparsify,
    centralized_gain,
    f_min_step,
    g_min_shrinkage,
    g_min_truncate,
    gamma_sweep,
    lqr_cost,
    polish_structured,
    update_weights,
)

__version__ = "0.1.0"
