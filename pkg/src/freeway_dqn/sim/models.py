"""Vehicle-level models: IDM, MOBIL, low-level controllers, bicycle kinematics.

All functions are scalar and pure; the World in ``world.py`` strings them
together.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from ..errors import AlreadyCollidingError, RejectedInputError
from .config import (
    ACCEL_MAX,
    ACCEL_MIN,
    MIN_GAP,
    NO_LEADER_GAP,
    STEER_MAX,
    STEER_V_FLOOR,
    V_CAP,
    ControlGains,
    IdmParams,
    MobilParams,
    RoadConfig,
    VehicleState,
)


def _clip(x, lo, hi):
    return lo if x < lo else hi if x > hi else x


def idm_acceleration(v, dv, gap, v_ex, params: IdmParams = IdmParams()) -> float:
    """Intelligent Driver Model acceleration.

    Args:
        v: own speed (m/s).
        dv: approach rate ``v - v_leader`` (m/s).
        gap: bumper-to-bumper distance to the leader (m); pass
            ``NO_LEADER_GAP`` when there is none.
        v_ex: desired speed (m/s).

    Returns the acceleration clamped to ``[ACCEL_MIN, a_max]``.
    """
    if not gap > 0:
        raise AlreadyCollidingError(f"non-positive gap {gap!r} to leader")
    d_ex = params.d_0 + params.t_gap * v + v * dv / (2.0 * math.sqrt(params.a_max * params.b_comf))
    speed_term = (v / v_ex) ** params.delta if v_ex > 0 else (math.inf if v > 0 else 0.0)
    a = params.a_max * (1.0 - speed_term - (d_ex / gap) ** 2)
    return _clip(a, ACCEL_MIN, params.a_max)


def mobil_criterion(a_e_be, a_e_af, a_n_be, a_n_af, a_o_be, a_o_af, params: MobilParams = MobilParams()) -> bool:
    """Safety and incentive tests on precomputed accelerations.

    ``e`` is the changing vehicle, ``n`` its follower in the target lane and
    ``o`` its follower in the current lane; ``be``/``af`` are before/after
    the change.
    """
    if a_n_af < -params.b_safe:
        return False
    gain = a_e_af - a_e_be + params.politeness * ((a_n_af - a_n_be) + (a_o_af - a_o_be))
    return gain >= params.a_th


@dataclass
class Neighbor:
    """A nearby vehicle with its signed longitudinal center offset from the deciding vehicle."""

    offset: float
    vehicle: VehicleState


@dataclass
class Neighbors:
    old_leader: Neighbor | None = None
    old_follower: Neighbor | None = None
    new_leader: Neighbor | None = None
    new_follower: Neighbor | None = None


def _follow(follower_offset, follower: VehicleState, leader_offset, leader: VehicleState | None, idm):
    """IDM acceleration of ``follower`` behind ``leader`` (both given by offsets)."""
    if leader is None:
        return idm_acceleration(follower.v, 0.0, NO_LEADER_GAP, follower.v_ex, idm)
    gap = max(leader_offset - follower_offset - 0.5 * (leader.length + follower.length), MIN_GAP)
    return idm_acceleration(follower.v, follower.v - leader.v, gap, follower.v_ex, idm)


def mobil_decision(vehicle: VehicleState, candidate_lane: int, neighbors: Neighbors, idm: IdmParams,
                   mobil: MobilParams, road: RoadConfig = RoadConfig()) -> bool:
    """Whether ``vehicle`` should move to ``candidate_lane`` given its neighbours.

    Offsets in ``neighbors`` are relative to ``vehicle`` (which sits at 0).
    A missing follower contributes identical before/after accelerations, i.e.
    nothing to the incentive and a pass on safety.
    """
    if not 0 <= candidate_lane < road.lane_count:
        raise RejectedInputError(f"lane {candidate_lane} is off the road")

    def unpack(nb):
        return (nb.offset, nb.vehicle) if nb is not None else (0.0, None)

    ol_off, ol = unpack(neighbors.old_leader)
    of_off, of = unpack(neighbors.old_follower)
    nl_off, nl = unpack(neighbors.new_leader)
    nf_off, nf = unpack(neighbors.new_follower)

    if nl is not None and nl_off - 0.5 * (nl.length + vehicle.length) <= 0:
        return False
    if nf is not None and -nf_off - 0.5 * (nf.length + vehicle.length) <= 0:
        return False

    a_e_be = _follow(0.0, vehicle, ol_off, ol, idm)
    a_e_af = _follow(0.0, vehicle, nl_off, nl, idm)
    if nf is not None:
        a_n_be = _follow(nf_off, nf, nl_off, nl, idm)
        a_n_af = _follow(nf_off, nf, 0.0, vehicle, idm)
    else:
        a_n_be = a_n_af = 0.0
    if of is not None:
        a_o_be = _follow(of_off, of, 0.0, vehicle, idm)
        a_o_af = _follow(of_off, of, ol_off, ol, idm)
    else:
        a_o_be = a_o_af = 0.0
    return mobil_criterion(a_e_be, a_e_af, a_n_be, a_n_af, a_o_be, a_o_af, mobil)


def longitudinal_control(v_ex, v, gains: ControlGains = ControlGains()) -> float:
    return _clip(gains.k_p * (v_ex - v), ACCEL_MIN, ACCEL_MAX)


def steering_control(vehicle: VehicleState, target_y, lane_heading=0.0, gains: ControlGains = ControlGains()) -> float:
    """Lateral position -> heading -> steering cascade.

    Below ``STEER_V_FLOOR`` the vehicle is treated as stopped and gets no
    steering, since the cascade divides by speed.
    """
    v = vehicle.v
    if v < STEER_V_FLOOR:
        return 0.0
    d_lat = vehicle.y_c - target_y
    v_lat = -gains.k_p_lat * d_lat
    heading_ex = math.asin(_clip(v_lat / v, -1.0, 1.0)) + lane_heading
    heading_rate = gains.k_p_theta * (heading_ex - vehicle.heading)
    steer = math.asin(_clip(0.5 * vehicle.l_r / v * heading_rate, -1.0, 1.0))
    return _clip(steer, -STEER_MAX, STEER_MAX)


def slip_angle(steer, l_r, l_f) -> float:
    return math.atan(l_r * math.tan(steer) / (l_r + l_f))


def bicycle_update(state: VehicleState, accel, steer, dt, heading_denominator="wheelbase"):
    """One forward-Euler step of the kinematic bicycle model, as ``(x_c, y_c, heading, v)``.

    Position and heading advance with the pre-step speed; speed is clamped
    to ``[0, V_CAP]`` afterwards.
    """
    beta = slip_angle(steer, state.l_r, state.l_f)
    v = state.v
    denom = state.l_r + state.l_f if heading_denominator == "wheelbase" else state.l_r
    direction = state.heading + beta
    return (
        state.x_c + v * math.cos(direction) * dt,
        state.y_c + v * math.sin(direction) * dt,
        state.heading + v * math.sin(beta) / denom * dt,
        _clip(v + accel * dt, 0.0, V_CAP),
    )


def bicycle_step(state: VehicleState, accel, steer, dt, heading_denominator="wheelbase") -> VehicleState:
    x, y, heading, v = bicycle_update(state, accel, steer, dt, heading_denominator)
    return replace(state, x_c=x, y_c=y, heading=heading, v=v)
