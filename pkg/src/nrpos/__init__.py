"""Multi-user 5G-NR positioning simulator and minimax optimizer.

Library layout:

  scenario     deployment config, generation, strict JSON handling
  numerology   subcarrier-spacing grids and the comb symbol mapping
  channel      LoS/pathloss model, fading draws, panel beams
  specfun      closed-form band-limited sinc integrals + quadrature twins
  ranging      delay-tracking error variance in two equivalent forms
  positioning  geometry dilution factors and privacy noise calibration
  evaluation   per-realization state evaluation
  optimizer    convex power step, exchange-stable matchings, hybrid loop
  dqn          numpy DQN agent for beam selection
  oracles      brute-force certification oracles
  runner/cli   Monte Carlo experiments, ablation schemes, CSV output
"""

from .channel import (
    ChannelRealization,
    composite_channel,
    draw_channels,
    expected_pathloss_gain,
    kronecker_codebook,
    los_probability,
    pathloss_db,
    steering_vector,
)
from .dqn import DqnAgent, DqnParams, MlpQNet
from .errors import ConfigError, DegenerateGeometryError, InfeasibleError, NumericalError
from .evaluation import PositioningReport, Realization, evaluate_state, make_realization
from .numerology import (
    CombAssignment,
    NumerologyConfig,
    comb_offset,
    numerology_params,
    prs_subcarriers,
    subcarrier_frequency,
)
from .optimizer import (
    OptimizerParams,
    PowerSolverParams,
    hybrid_optimize,
    initial_state,
    numerology_offset_matching,
    preference_values,
    solve_power_privacy,
    user_anchor_matching,
)
from .positioning import (
    GeometryFactors,
    PrivacyBudget,
    dp_noise_variance,
    geometry_factors,
    min_anchor_variance,
    perturb_location,
    positioning_error,
)
from .ranging import (
    AssignmentState,
    RangingCoefficients,
    RangingModel,
    interference_psd,
    psd_value,
    ranging_variance_power_form,
    ranging_variance_psd_form,
    state_violations,
)
from .runner import ExperimentSpec, MetricsRow, emit_csv, run_monte_carlo, run_realization, spec_from_dict
from .scenario import (
    Anchor,
    DllParams,
    IrsPanel,
    Scenario,
    ScenarioConfig,
    UserNode,
    config_from_dict,
    generate_scenario,
    validate_config,
)
from .specfun import (
    PartialFractionCoeffs,
    SincKernelPair,
    cin,
    cross_spectral_moment,
    cross_spectral_moment_quad,
    oscillatory_pole_integral,
    partial_fractions,
    si,
    spectral_moment,
    spectral_moment_quad,
)

__version__ = "0.1.0"
