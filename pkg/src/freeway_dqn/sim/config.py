"""Parameter records for the freeway simulator."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum

from ..errors import RejectedInputError

V_CAP = 40.0
ACCEL_MIN, ACCEL_MAX = -10.0, 6.0
STEER_MAX = math.pi / 4
STEER_V_FLOOR = 0.5
NO_LEADER_GAP = 1e9
# Gap handed to IDM when a leader's rear bumper already overlaps ours
# longitudinally while the two are still laterally clear (mid lane change).
MIN_GAP = 1e-3


class Action(IntEnum):
    LANE_LEFT = 0
    IDLE = 1
    LANE_RIGHT = 2
    SLOWER = 3
    FASTER = 4


@dataclass
class VehicleState:
    x_c: float
    y_c: float
    v: float
    heading: float = 0.0
    target_lane: int = 0
    v_ex: float = 0.0
    length: float = 5.0
    width: float = 2.0
    l_r: float = 2.5
    l_f: float = 2.5
    vid: int = 0


@dataclass(frozen=True)
class IdmParams:
    a_max: float = 6.0
    delta: float = 4.0
    d_0: float = 10.0
    t_gap: float = 1.5
    b_comf: float = 5.0

    def __post_init__(self):
        if min(self.a_max, self.delta, self.d_0, self.t_gap, self.b_comf) <= 0:
            raise RejectedInputError("IDM parameters must all be positive")


@dataclass(frozen=True)
class MobilParams:
    b_safe: float = 2.0
    politeness: float = 0.001
    a_th: float = 0.2


@dataclass(frozen=True)
class ControlGains:
    k_p: float = 1 / 0.6
    k_p_lat: float = 1 / 3
    k_p_theta: float = 1 / 0.2

    def __post_init__(self):
        if min(self.k_p, self.k_p_lat, self.k_p_theta) <= 0:
            raise RejectedInputError("control gains must be positive")


@dataclass(frozen=True)
class RoadConfig:
    lane_count: int = 3
    lane_width: float = 4.0
    lane_length: float = 1000.0

    def __post_init__(self):
        if self.lane_count < 2:
            raise RejectedInputError("need at least two lanes")
        if self.lane_width <= 0 or self.lane_length <= 0:
            raise RejectedInputError("lane width and length must be positive")

    def lane_center(self, lane: int) -> float:
        return (lane + 0.5) * self.lane_width

    def lane_of(self, y: float) -> int:
        """Lane whose strip contains ``y``, clipped onto the road."""
        return min(max(int(math.floor(y / self.lane_width)), 0), self.lane_count - 1)


@dataclass(frozen=True)
class ScenarioConfig:
    surrounding_count: int = 15
    ego_v0_range: tuple[float, float] = (23.0, 25.0)
    other_v0_range: tuple[float, float] = (20.0, 23.0)
    episode_duration: float = 100.0
    policy_hz: int = 1
    sim_hz: int = 15
    seed: int = 0
    min_spawn_gap: float = 25.0
    speed_step: float = 5.0
    reward_speed_weight: float = 0.8
    reward_lane_weight: float = 0.2
    reward_speed_range: tuple[float, float] = (20.0, 40.0)
    # "wheelbase" divides the heading rate by l_r + l_f, "rear" by l_r alone.
    heading_rate_denominator: str = "wheelbase"

    def __post_init__(self):
        if self.surrounding_count < 0:
            raise RejectedInputError("surrounding_count must be >= 0")
        if self.policy_hz <= 0 or self.sim_hz <= 0 or self.sim_hz % self.policy_hz:
            raise RejectedInputError("sim_hz must be a positive multiple of policy_hz")
        for lo, hi in (self.ego_v0_range, self.other_v0_range):
            if not 0 <= lo <= hi <= V_CAP:
                raise RejectedInputError(f"speed range [{lo}, {hi}] outside [0, {V_CAP}]")
        if self.heading_rate_denominator not in ("wheelbase", "rear"):
            raise RejectedInputError("heading_rate_denominator must be 'wheelbase' or 'rear'")
        if abs(self.reward_speed_weight + self.reward_lane_weight - 1.0) > 1e-12:
            raise RejectedInputError("reward weights must sum to 1")

    @property
    def max_steps(self) -> int:
        return int(round(self.episode_duration * self.policy_hz))

    @property
    def substeps(self) -> int:
        return self.sim_hz // self.policy_hz


@dataclass(frozen=True)
class SimParams:
    """Everything a World needs besides its RNG."""

    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    road: RoadConfig = field(default_factory=RoadConfig)
    idm: IdmParams = field(default_factory=IdmParams)
    mobil: MobilParams = field(default_factory=MobilParams)
    gains: ControlGains = field(default_factory=ControlGains)
