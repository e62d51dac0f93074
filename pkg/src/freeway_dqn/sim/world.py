"""Multi-lane ring-road world: spawning, stepping, collisions, reward, observation.

The road is a ring of ``lane_length`` metres: vehicles leaving at the far end
re-enter at ``x = 0`` with lane and speed preserved, so every longitudinal
offset is taken modulo the ring length. Vehicle 0 is always the ego.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import EpisodeFinishedError, SpawnCapacityError
from .config import (
    MIN_GAP,
    V_CAP,
    Action,
    ControlGains,
    IdmParams,
    MobilParams,
    RoadConfig,
    ScenarioConfig,
    SimParams,
    VehicleState,
)
from .models import (
    Neighbor,
    Neighbors,
    NO_LEADER_GAP,
    idm_acceleration,
    longitudinal_control,
    mobil_decision,
    slip_angle,
    steering_control,
    bicycle_update,
)

OBS_NEIGHBORS = 5
OBS_FEATURES = 5
OBS_DIM = OBS_FEATURES * (1 + OBS_NEIGHBORS)


@dataclass
class StepInfo:
    collision: bool
    ego_speed: float
    distance: float
    ego_lane: int


@dataclass
class StepResult:
    observation: np.ndarray
    reward: float
    terminated: bool
    info: StepInfo


@dataclass
class World:
    params: SimParams
    vehicles: list[VehicleState]
    steps: int = 0
    distance: float = 0.0
    collided: bool = False
    terminated: bool = False
    _bicycle_denominator: str = field(init=False, repr=False)

    def __post_init__(self):
        self._bicycle_denominator = self.params.scenario.heading_rate_denominator

    @property
    def ego(self) -> VehicleState:
        return self.vehicles[0]

    @property
    def road(self) -> RoadConfig:
        return self.params.road

    def offset(self, src: VehicleState, dst: VehicleState) -> float:
        """Signed longitudinal offset from ``src`` to ``dst`` on the ring, in ``[-L/2, L/2)``."""
        length = self.road.lane_length
        d = (dst.x_c - src.x_c) % length
        return d - length if d >= 0.5 * length else d

    def in_lane(self, vehicle: VehicleState, lane: int) -> bool:
        return vehicle.target_lane == lane or self.road.lane_of(vehicle.y_c) == lane

    def neighbors_in_lane(self, vehicle: VehicleState, lane: int) -> tuple[Neighbor | None, Neighbor | None]:
        """Nearest leader and follower of ``vehicle`` among vehicles occupying ``lane``."""
        length = self.road.lane_length
        leader = follower = None
        best_ahead = best_behind = math.inf
        for other in self.vehicles:
            if other is vehicle or not self.in_lane(other, lane):
                continue
            d = (other.x_c - vehicle.x_c) % length
            if d < best_ahead:
                best_ahead, leader = d, other
            back = length - d if d > 0 else 0.0
            if back < best_behind:
                best_behind, follower = back, other
        lead = Neighbor(best_ahead, leader) if leader is not None else None
        follow = Neighbor(-best_behind, follower) if follower is not None else None
        return lead, follow

    def copy(self) -> "World":
        return World(self.params, [replace(v) for v in self.vehicles], self.steps, self.distance,
                     self.collided, self.terminated)


# --- spawning -----------------------------------------------------------------


def spawn_scenario(cfg: ScenarioConfig, road: RoadConfig, rng: np.random.Generator, *,
                   idm: IdmParams = IdmParams(), mobil: MobilParams = MobilParams(),
                   gains: ControlGains = ControlGains()) -> World:
    """Place the ego and ``cfg.surrounding_count`` vehicles on the ring.

    Lanes are drawn uniformly among lanes with spare room. Within a lane the
    ``n`` positions are uniform subject to a minimum bumper-to-bumper gap:
    sorted uniforms on the shortened ring plus fixed spacing, then a random
    rotation.
    """
    params = SimParams(cfg, road, idm, mobil, gains)
    template = VehicleState(0.0, 0.0, 0.0)
    pitch = cfg.min_spawn_gap + template.length
    per_lane = int(math.floor(road.lane_length / pitch))
    total = cfg.surrounding_count + 1
    if per_lane * road.lane_count < total:
        raise SpawnCapacityError(
            f"{total} vehicles need {total * pitch:.1f} m of lane; road holds {per_lane * road.lane_count}"
        )

    counts = [0] * road.lane_count
    lanes = []
    for _ in range(total):
        free = [k for k in range(road.lane_count) if counts[k] < per_lane]
        lane = free[int(rng.integers(len(free)))]
        counts[lane] += 1
        lanes.append(lane)

    positions: dict[int, list[float]] = {}
    for lane, n in enumerate(counts):
        if n == 0:
            continue
        slack = road.lane_length - n * pitch
        u = np.sort(rng.uniform(0.0, slack, size=n))
        shift = rng.uniform(0.0, road.lane_length)
        xs = [float((u[i] + i * pitch + shift) % road.lane_length) for i in range(n)]
        order = rng.permutation(n)
        positions[lane] = [xs[i] for i in order]

    vehicles = []
    for vid, lane in enumerate(lanes):
        lo, hi = cfg.ego_v0_range if vid == 0 else cfg.other_v0_range
        v0 = float(rng.uniform(lo, hi))
        vehicles.append(VehicleState(
            x_c=positions[lane].pop(), y_c=road.lane_center(lane), v=v0, heading=0.0,
            target_lane=lane, v_ex=v0, vid=vid,
        ))
    return World(params, vehicles)


# --- collision ------------------------------------------------------------------


def _half_extent(v: VehicleState, ux, uy) -> float:
    c, s = math.cos(v.heading), math.sin(v.heading)
    return 0.5 * v.length * abs(ux * c + uy * s) + 0.5 * v.width * abs(-ux * s + uy * c)


def rectangles_overlap(a: VehicleState, b: VehicleState, dx: float, dy: float) -> bool:
    """Separating-axis test on two oriented rectangles with centre offset ``(dx, dy)``.

    Touching edges do not count: every axis needs strictly positive overlap.
    """
    for veh in (a, b):
        c, s = math.cos(veh.heading), math.sin(veh.heading)
        for ux, uy in ((c, s), (-s, c)):
            if abs(dx * ux + dy * uy) >= _half_extent(a, ux, uy) + _half_extent(b, ux, uy):
                return False
    return True


def check_collision(world: World) -> bool:
    vehicles = world.vehicles
    length = world.road.lane_length
    half = 0.5 * length
    radii = [0.5 * math.hypot(v.length, v.width) for v in vehicles]
    n = len(vehicles)
    for i in range(n):
        a = vehicles[i]
        ra = radii[i]
        for j in range(i + 1, n):
            b = vehicles[j]
            reach = ra + radii[j]
            dy = b.y_c - a.y_c
            if dy >= reach or -dy >= reach:
                continue
            dx = (b.x_c - a.x_c) % length
            if dx >= half:
                dx -= length
            if dx >= reach or -dx >= reach:
                continue
            if rectangles_overlap(a, b, dx, dy):
                return True
    return False


# --- reward / observation ---------------------------------------------------------


def compute_reward(world: World, collided: bool) -> float:
    """Speed reward plus a bonus for the rightmost lane; zero on collision."""
    if collided:
        return 0.0
    cfg, road = world.params.scenario, world.road
    lo, hi = cfg.reward_speed_range
    speed = min(max((world.ego.v - lo) / (hi - lo), 0.0), 1.0)
    lane = road.lane_of(world.ego.y_c) / (road.lane_count - 1)
    return cfg.reward_speed_weight * speed + cfg.reward_lane_weight * lane


def _clip1(x):
    return min(max(x, -1.0), 1.0)


def encode_observation(world: World) -> np.ndarray:
    """Ego row then the five nearest vehicles (by |dx|, dx, spawn id), five features each."""
    ego = world.ego
    road = world.road
    y_scale = road.lane_count * road.lane_width
    obs = np.zeros(OBS_DIM)
    obs[:OBS_FEATURES] = [1.0, ego.x_c / 1000.0, _clip1(ego.y_c / y_scale), _clip1(ego.v / V_CAP),
                          _clip1(ego.heading)]
    others = sorted(
        ((world.offset(ego, o), o) for o in world.vehicles[1:]),
        key=lambda t: (abs(t[0]), t[0], t[1].vid),
    )
    for slot, (dx, o) in enumerate(others[:OBS_NEIGHBORS], start=1):
        obs[slot * OBS_FEATURES:(slot + 1) * OBS_FEATURES] = [
            1.0,
            _clip1(dx / 100.0),
            _clip1((o.y_c - ego.y_c) / y_scale),
            _clip1((o.v - ego.v) / V_CAP),
            _clip1(o.heading - ego.heading),
        ]
    return obs


# --- stepping ----------------------------------------------------------------------


def _apply_ego_action(world: World, action: Action) -> None:
    ego = world.ego
    cfg = world.params.scenario
    k = world.road.lane_count
    if action == Action.FASTER:
        ego.v_ex = min(ego.v_ex + cfg.speed_step, V_CAP)
    elif action == Action.SLOWER:
        ego.v_ex = max(ego.v_ex - cfg.speed_step, 0.0)
    elif action == Action.LANE_LEFT:
        ego.target_lane = max(ego.target_lane - 1, 0)
    elif action == Action.LANE_RIGHT:
        ego.target_lane = min(ego.target_lane + 1, k - 1)


def _settled(world: World, v: VehicleState) -> bool:
    road = world.road
    return road.lane_of(v.y_c) == v.target_lane and abs(v.y_c - road.lane_center(v.target_lane)) < 0.5


def _lane_changes(world: World) -> None:
    """One MOBIL pass over surrounding vehicles, in spawn-id order."""
    p = world.params
    for v in world.vehicles[1:]:
        if not _settled(world, v):
            continue
        lane = v.target_lane
        old_leader, old_follower = world.neighbors_in_lane(v, lane)
        for cand in (lane - 1, lane + 1):
            if not 0 <= cand < p.road.lane_count:
                continue
            new_leader, new_follower = world.neighbors_in_lane(v, cand)
            nb = Neighbors(old_leader, old_follower, new_leader, new_follower)
            if mobil_decision(v, cand, nb, p.idm, p.mobil, p.road):
                v.target_lane = cand
                break


class _LaneIndex:
    """Per-lane members sorted by x, for fast leader lookup within one sub-step."""

    def __init__(self, world: World):
        self.length = world.road.lane_length
        members = [[] for _ in range(world.road.lane_count)]
        self.lanes = []
        for i, v in enumerate(world.vehicles):
            lanes = {world.road.lane_of(v.y_c), v.target_lane}
            self.lanes.append(lanes)
            for lane in lanes:
                members[lane].append((v.x_c, i))
        for m in members:
            m.sort()
        self.members = members
        self.xs = [[x for x, _ in m] for m in members]

    def leader(self, i: int, x: float, lane: int):
        """``(offset, index)`` of the nearest vehicle ahead of vehicle ``i`` in ``lane``."""
        m = self.members[lane]
        n = len(m)
        k = bisect_right(self.xs[lane], x)
        for step in range(n):
            xj, j = m[(k + step) % n]
            if j != i:
                return (xj - x) % self.length, j
        return None


def _idm_for(world: World, index: _LaneIndex, i: int) -> float:
    """IDM acceleration against the closer of the current-lane and target-lane leaders."""
    v = world.vehicles[i]
    idm = world.params.idm
    accel = idm_acceleration(v.v, 0.0, NO_LEADER_GAP, v.v_ex, idm)
    for lane in index.lanes[i]:
        found = index.leader(i, v.x_c, lane)
        if found is None:
            continue
        offset, j = found
        lead = world.vehicles[j]
        gap = max(offset - 0.5 * (lead.length + v.length), MIN_GAP)
        accel = min(accel, idm_acceleration(v.v, v.v - lead.v, gap, v.v_ex, idm))
    return accel


def world_step(world: World, action) -> StepResult:
    """Advance one policy step: ego command, MOBIL pass, physics sub-steps, reward."""
    if world.terminated:
        raise EpisodeFinishedError("episode already terminated")
    action = Action(int(action))
    p = world.params
    cfg, road = p.scenario, p.road
    dt = 1.0 / cfg.sim_hz

    _apply_ego_action(world, action)
    _lane_changes(world)

    for _ in range(cfg.substeps):
        index = _LaneIndex(world)
        controls = []
        for i, v in enumerate(world.vehicles):
            accel = longitudinal_control(v.v_ex, v.v, p.gains) if i == 0 else _idm_for(world, index, i)
            steer = steering_control(v, road.lane_center(v.target_lane), 0.0, p.gains)
            controls.append((accel, steer))
        ego = world.ego
        beta = slip_angle(controls[0][1], ego.l_r, ego.l_f)
        world.distance += ego.v * math.cos(ego.heading + beta) * dt
        for v, (accel, steer) in zip(world.vehicles, controls):
            x, v.y_c, v.heading, v.v = bicycle_update(v, accel, steer, dt, world._bicycle_denominator)
            v.x_c = x % road.lane_length
        if check_collision(world):
            world.collided = True
            break

    world.steps += 1
    world.terminated = world.collided or world.steps >= cfg.max_steps
    reward = compute_reward(world, world.collided)
    info = StepInfo(world.collided, world.ego.v, world.distance, road.lane_of(world.ego.y_c))
    return StepResult(encode_observation(world), reward, world.terminated, info)
