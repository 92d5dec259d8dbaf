"""slicesim: a seedable O-RAN slicing simulator and DRL experiment harness."""

__version__ = "0.1.0"

from .agent import AgentConfig, PpoAgent, TransitionBatch, exploration_rate
from .env import (
    ActionSpace,
    EnvConfig,
    RanEnvironment,
    SliceSpec,
    WindowOutcome,
    compute_contribution,
    compute_reward,
    enumerate_actions,
)
from .errors import ConfigurationError, IngestionError, SliceSimError
from .forecasting import (
    ContributionOracle,
    Forecast,
    ForecastConfig,
    apply_noise,
    apportion_units,
    forecast_to_action,
    oracle_future_contribution,
)
from .guidance import (
    FORECAST_AIDED,
    FORECAST_STATE,
    MODES,
    PLAIN_DRL,
    PURE_FORECAST,
    GuidanceConfig,
    GuidanceDecision,
    action_distance,
    augmented_state,
    distill,
    select_action,
    trigger_rate,
)
from .harness import (
    RecordTable,
    RunRecord,
    RunSummary,
    aggregate,
    calibrate_capacity,
    capacity_from_episode,
    detect_convergence,
    run_many,
    run_scenario,
    run_single,
)
from .outputs import emit_outputs, plots_from_dir, read_records_csv, write_records_csv
from .scenario import Scenario, Sweep, derive_scenario, load_scenario, load_sweep
from .traffic import (
    EpisodeTraffic,
    Request,
    SliceRequests,
    TrafficModel,
    UserCountLaw,
    VideoModel,
    VoNRModel,
    VRSyntheticModel,
    VRTraceModel,
    generate_episode,
    ingest_vr_trace,
    sample_truncated_pareto,
    sample_user_count,
    solve_pareto_scale,
)
