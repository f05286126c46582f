"""Seedable highway traffic simulation with collision-avoidance
safeguards, driver-parameter belief estimation, and an
importance-sampling evaluation harness."""

from .beliefs import (
    BeliefTracker,
    ParticleSet,
    init_particles,
    resample,
    sample_hypothesis,
    weight_particles,
)
from .calibration import (
    EpisodeLikelihood,
    GaussianDensity,
    NaturalisticModel,
    ProposalModel,
    UniformDensity,
    is_estimate,
    likelihood_ratio,
)
from .harness import (
    AggregateMetrics,
    EpisodeRecord,
    ExperimentConfig,
    compute_metrics,
    run_episode,
    run_experiment,
)
from .planner import (
    Decision,
    PlannerConfig,
    SearchNode,
    TrafficSearchModel,
    TreeSearch,
    mc_policy_return,
    plan,
    quantize_state,
    select_action,
    select_final_action,
)
from .policies import (
    CandidateActionSet,
    GippsParams,
    HumanLikeParams,
    enumerate_candidates,
    gipps_action,
    human_like_action,
)
from .safeguards import (
    ReachableSetParams,
    RssParams,
    reachable_set_supervise,
    rss_distance,
    rss_supervise,
    time_before_collision,
)
from .traffic import (
    DriverParams,
    SpawnConfig,
    advance_traffic,
    idm_acceleration,
    mobil_decide,
    spawn_traffic,
)
from .world import (
    Action,
    CollisionEvent,
    Observation,
    RoadConfig,
    TrajectorySegment,
    VehicleKinematics,
    WorldState,
    apply_action,
    build_trajectory,
    detect_collisions,
    observe,
)

__version__ = "0.1.0"
