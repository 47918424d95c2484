"""Merge Planner Configuration"""
from dataclasses import dataclass, field
from typing import Optional, Tuple


@dataclass
class PlannerConfig:
    """Longitudinal optimal-control weights and constraint scan."""
    w_t: float = 1.0  # closed form is only valid for 1
    w_tf: float = 0.05  # 1/s^2, duration penalty per segment
    scan_step: float = 0.05  # s
    speed_tolerance: float = 0.05  # m/s above v_max still accepted
    accel_tolerance: float = 1e-6
    early_exit: bool = True
    standstill_horizon: float = 0.3  # s; a braking ego that would stop sooner counts as standing

    def __post_init__(self):
        if self.w_t != 1.0:
            raise ValueError("w_t must be 1 for the closed-form quintic solution")
        if self.w_tf < 0:
            raise ValueError("w_tf must be >= 0")
        if self.scan_step <= 0:
            raise ValueError("scan_step must be > 0")


@dataclass
class SamplerConfig:
    """How behavior options are sampled each cycle."""
    v_pnr_min: float = 1.0  # m/s, lowest PNR velocity
    v_pnr_step: float = 0.5
    v_pnr_max: Optional[float] = None  # None -> v_max at the yield line
    times_per_gap: int = 3
    gap_margin: float = 0.5  # s, delta kept from gap edges
    gap_sigma: float = 2.0  # std-devs widening an object's blocked band
    gap_scan_step: float = 0.1
    include_nominal_time: bool = True
    pga_accel: float = 0.5  # m/s^2 used for the speed gained between curve exit and PGA
    approach_decel: float = 0.4  # m/s^2 braking toward a slower limit ahead, planned before the merge context
    stop_time_factors: Tuple[float, ...] = (0.85, 1.0, 1.25)
    follow_times: Tuple[float, ...] = (1.0, 2.0, 3.0, 4.0, 5.0)
    min_leg_time: float = 0.3  # s, shortest leg sampled or kept from a carried option
    committed_margin: float = 0.5  # m before the PNR that already counts as committed
    committed_time_factors: Tuple[float, ...] = (1.0, 1.2, 1.4)
    hold_time: float = 1.0  # s, standstill option duration
    creep_speed: float = 1.0  # m/s assumed when starting from rest
    curve_exit_ratio: float = 0.98  # |kappa| fraction marking the curve exit
    violation_speed_factor: float = 1.3  # x v_sl counts as clear violation
    wrong_way_speed: float = -0.5  # m/s along the lane


@dataclass
class RiskConfig:
    """Safety distances, scan step and virtual end-of-sight object."""
    s_minus_0: float = 2.0  # m behind the ego
    s_plus_0: float = 2.0  # m ahead of the ego
    headway: float = 1.0  # s, applied to the relative speed
    time_step: float = 0.1
    eos_position: Optional[float] = None  # ego-path coordinate of the end of sight
    eos_speed: float = 8.33
    eos_lane: str = "main"
    conflict_position: Optional[float] = None  # ego-path coordinate of the merge point
    virtual_sigma0: float = 0.5
    virtual_sigma_rate: float = 0.3

    def __post_init__(self):
        if self.s_minus_0 < 0 or self.s_plus_0 < 0:
            raise ValueError("safety distances must be >= 0")
        if self.time_step <= 0:
            raise ValueError("time_step must be > 0")


@dataclass
class PredictionConfig:
    """Constant-velocity prediction with growing position uncertainty."""
    sigma0: float = 0.5  # m
    sigma_rate: float = 0.3  # m/s
    horizon: float = 10.0  # s


@dataclass
class PerceptionConfig:
    """Object-list synthesis and the ego/external list merge."""
    assoc_gate: float = 2.0  # m, disagreement above this is a discrepancy
    assoc_radius: float = 6.0  # m, nearest-neighbor search radius
    latency_ext: float = 0.015  # s
    position_noise: float = 0.0  # m std, Gaussian


@dataclass
class VehicleParams:
    """Single-track vehicle geometry and steering limits."""
    l: float = 2.7  # wheelbase
    v_char: float = 20.0  # characteristic velocity
    width: float = 1.8
    length: float = 4.5
    delta_max: float = 0.6  # rad
    ddelta_max: float = 0.5  # rad/s

    def __post_init__(self):
        if self.l <= 0 or self.v_char <= 0:
            raise ValueError("wheelbase and characteristic velocity must be > 0")


@dataclass
class TrackerConfig:
    """Receding-horizon lateral tracking."""
    horizon: float = 3.0  # s
    step: float = 0.05  # s -> 60 points
    w_v: float = 1.0
    w_a: float = 0.2
    w_ddelta: float = 10.0
    w_dperp: float = 5.0
    w_phi: float = 2.0
    a_perp_max: float = 1.45
    penalty: float = 1e3
    max_iterations: int = 60
    tolerance: float = 1e-10  # minimum relative cost decrease per iteration
    gradient_tolerance: float = 1e-6
    violation_tolerance: float = 0.01  # relative, for the lateral acceleration bound

    def __post_init__(self):
        n = self.horizon / self.step
        if abs(n - round(n)) > 1e-9:
            raise ValueError("horizon/step must be an integer point count")

    @property
    def points(self) -> int:
        return int(round(self.horizon / self.step))


@dataclass
class EvalConfig:
    """Maneuver categorization and comfort statistics."""
    standstill_speed: float = 0.1  # m/s
    standstill_duration: float = 0.3  # s
    standstill_zone: float = 2.0  # m around the yield line
    gap_profile_ratio: float = 0.9
    profile_decel: float = 1.0  # m/s^2 for the braking-aware reference profile
    profile_window: float = 40.0  # m before the yield line
    interaction_window: float = 8.0  # s around the ego's conflict passage
    smoothing_window: float = 0.3  # s
    comfort_jerk: float = 1.5  # m/s^3
    min_lane_margin: float = 0.1  # m, runs below are flagged
    lane_width: float = 3.5  # m, boundaries at +-half width around the ego route


@dataclass
class RunConfig:
    """One batch invocation of the closed loop."""
    scenario: str = ""
    cycles_hz: float = 10.0
    duration: Optional[float] = None  # s, None -> scenario duration
    out_dir: str = "runs"
    reps: int = 1
    seed: Optional[int] = None  # None -> scenario seed
    sim_dt: float = 0.05

    def __post_init__(self):
        if self.cycles_hz <= 0:
            raise ValueError("cycles_hz must be > 0")
        if self.reps < 1:
            raise ValueError("reps must be >= 1")


@dataclass
class Config:
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    risk: RiskConfig = field(default_factory=RiskConfig)
    prediction: PredictionConfig = field(default_factory=PredictionConfig)
    perception: PerceptionConfig = field(default_factory=PerceptionConfig)
    vehicle: VehicleParams = field(default_factory=VehicleParams)
    tracker: TrackerConfig = field(default_factory=TrackerConfig)
    evaluation: EvalConfig = field(default_factory=EvalConfig)
    corridor: float = 20.0  # m, Frenet projection limit
    threads_env: str = "MERGEPLAN_THREADS"  # only environment variable read


CONFIG = Config()
