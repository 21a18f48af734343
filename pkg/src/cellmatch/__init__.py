"""Context-aware user-to-small-cell association: geometry, radio, matching
game with externalities, and Monte-Carlo experiments."""

from .context import SmallCellProfile, UserProfile, is_acceptable_to_cell, is_acceptable_to_user, qoe
from .experiment import MetricsRow, SweepSpec, run_sweep, write_csv
from .geometry import (
    NO_HANDOVER,
    CellGeometry,
    Trajectory,
    chord_cdf,
    chord_length,
    hf_probability,
    hf_probability_linear,
    inter_cell_hf_probability,
    interaction_time,
    mc_hf_oracle,
)
from .matching import (
    MBS,
    Matching,
    SolveReport,
    audit_matching,
    deferred_acceptance_round,
    max_sinr_baseline,
    solve,
    verify_stability,
)
from .preferences import PreferenceList, SolverConfig, UtilityModel
from .radio import ChannelMatrix, RadioConfig, rate_over_load, realize_channels, sinr, sinr_matrix
from .scenario import (
    FixtureError,
    MacroStation,
    Scenario,
    ScenarioConfig,
    generate,
    load_fixture,
    serialize_scenario,
)

__version__ = "0.1.0"
