"""Deterministic locomotion surrogates with two cue-selected behaviors.

Both environments are written over numpy arrays so the same step function
serves a single episode (0-d state fields) and a population of episodes
(state fields of shape ``(n,)``).  Behaviors are encoded as integers
(``BehaviorCue.B1 == 0``, ``BehaviorCue.B2 == 1``) so that a batch can mix them.

Hopper observation (17 slots)::

    0 h            1 sin(angle to target)=0   2 cos(angle to target)=1
    3 vx           4 0.0                      5 vh
    6 roll=0.0     7 pitch=0.0
    8..13  vx/10, vh/10, h, contact, ground_timer/50, previous lift command
    14 contact     15..16 behavior cue

Walker observation (30 slots)::

    0 height=0.5   1..2 sin/cos(bearing of (1000, 0) minus yaw)
    3..4 world-frame velocity   5 0.0   6 roll=0.0   7 pitch=0.0
    8..15  previous action     16..23 (v, omega) repeated four times
    24..27 feet contact = 1.0  28..29 behavior cue
"""
from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, fields
from typing import NamedTuple

import numpy as np

DT = 0.05
GRAVITY = 9.8
TARGET_X = 1000.0
CUE_ON = 5.0
HOPPER_STAGNATION_STEPS = 50
HOPPER_LIFT_GAIN = 5.0
HOPPER_PUSH_GAIN = 1.0
HOPPER_AIR_BRAKE = 0.1
HOPPER_LANDING_LOSS = 0.5
WALKER_HEIGHT = 0.5
WALKER_GAIN = 2.0
WALKER_STRAFE_GAIN = 2.0
WALKER_LINEAR_DRAG = 1.0
WALKER_TURN_DRAG = 2.0

HOPPER_OBS_DIM = 17
HOPPER_ACTION_DIM = 3
WALKER_OBS_DIM = 30
WALKER_ACTION_DIM = 8
ENVS = ("hopper", "walker")


class BehaviorCue(enum.IntEnum):
    B1 = 0
    B2 = 1

    @property
    def encoding(self) -> tuple[float, float]:
        return (CUE_ON, 0.0) if self is BehaviorCue.B1 else (0.0, CUE_ON)

    @classmethod
    def parse(cls, value) -> "BehaviorCue":
        if isinstance(value, str):
            key = value.strip().upper()
            if key in ("1", "2"):
                key = "B" + key
            try:
                return cls[key]
            except KeyError:
                raise ValueError(f"unknown behavior {value!r}") from None
        return cls(int(value))


_CUE_TABLE = np.array([[CUE_ON, 0.0], [0.0, CUE_ON]])


def cue_inputs(behavior) -> np.ndarray:
    """Cue slot values, shape ``behavior.shape + (2,)``."""
    return _CUE_TABLE[np.asarray(behavior, dtype=np.intp)]


def obs_dim(env: str) -> int:
    return {"hopper": HOPPER_OBS_DIM, "walker": WALKER_OBS_DIM}[env]


def action_dim(env: str) -> int:
    return {"hopper": HOPPER_ACTION_DIM, "walker": WALKER_ACTION_DIM}[env]


def wrap_angle(a):
    """Map angles onto (-pi, pi]; in-range angles pass through untouched."""
    a = np.asarray(a, dtype=float)
    wrapped = np.pi - np.mod(np.pi - a, 2 * np.pi)
    return np.where((a > np.pi) | (a <= -np.pi), wrapped, a)


# -- rewards -----------------------------------------------------------------

def reward_hopper_forward(d_old, d, dt=DT):
    return (d_old - d) / dt


def reward_hopper_vertical(h_old, h, d_old, d, dt=DT):
    progress_up = np.abs((h - h_old) / dt)
    return 2.0 * progress_up - 0.5 * reward_hopper_forward(d_old, d, dt)


def reward_walker(behavior, x_old, y_old, x, y, yaw):
    dx = np.asarray(x, dtype=float) - x_old
    dy = np.asarray(y, dtype=float) - y_old
    step_length = np.sqrt(dx * dx + dy * dy)
    self_angle = np.arctan2(dy, dx) - yaw
    offset = np.where(np.asarray(behavior) == BehaviorCue.B1, -np.pi / 4, np.pi / 4)
    r = step_length * np.cos(self_angle + offset)
    return np.where(step_length > 0.0, r, 0.0)


# -- shared step result ------------------------------------------------------

class StepOutcome(NamedTuple):
    state: object
    observation: np.ndarray
    reward: np.ndarray
    done: np.ndarray
    failed: np.ndarray


def _zeros(batch):
    return np.zeros(()) if batch is None else np.zeros(batch)


# -- hopper ------------------------------------------------------------------

@dataclass(frozen=True)
class HopperSurrogateState:
    x: np.ndarray
    h: np.ndarray
    vx: np.ndarray
    vh: np.ndarray
    contact: np.ndarray
    ground_timer: np.ndarray
    x_old: np.ndarray
    h_old: np.ndarray
    d: np.ndarray
    d_old: np.ndarray
    last_lift: np.ndarray

    def take(self, index) -> "HopperSurrogateState":
        return HopperSurrogateState(**{f.name: getattr(self, f.name)[index] for f in fields(self)})


def hopper_reset(episode_seed=0, batch=None):
    """Start on the ground, at rest, 1000 m from the target.

    ``episode_seed`` is accepted for interface stability; the surrogate start
    state is deterministic.
    """
    z = _zeros(batch)
    d = z + TARGET_X
    state = HopperSurrogateState(
        x=z, h=z, vx=z, vh=z, contact=np.ones_like(z, dtype=bool),
        ground_timer=np.zeros_like(z, dtype=np.int64),
        x_old=z, h_old=z, d=d, d_old=d, last_lift=z,
    )
    return state, hopper_observation(state)


def hopper_observation(state: HopperSurrogateState, behavior=None) -> np.ndarray:
    """Table-I shaped observation; the cue slots are omitted when ``behavior`` is None."""
    width = HOPPER_OBS_DIM if behavior is not None else HOPPER_OBS_DIM - 2
    obs = np.zeros(np.shape(state.h) + (width,))
    contact = state.contact.astype(float)
    obs[..., 0] = state.h
    obs[..., 2] = 1.0
    obs[..., 3] = state.vx
    obs[..., 5] = state.vh
    obs[..., 8] = state.vx / 10.0
    obs[..., 9] = state.vh / 10.0
    obs[..., 10] = state.h
    obs[..., 11] = contact
    obs[..., 12] = state.ground_timer / HOPPER_STAGNATION_STEPS
    obs[..., 13] = state.last_lift
    obs[..., 14] = contact
    if behavior is not None:
        obs[..., 15:] = cue_inputs(behavior)
    return obs


def hopper_step(state: HopperSurrogateState, action, behavior) -> StepOutcome:
    a = np.clip(np.asarray(action, dtype=float), -1.0, 1.0)
    push, lift, brake = a[..., 0], a[..., 1], a[..., 2]
    contact = state.contact

    vh = np.where(contact, np.maximum(lift, 0.0) * HOPPER_LIFT_GAIN, state.vh - GRAVITY * DT)
    vx = np.where(contact, state.vx + push * HOPPER_PUSH_GAIN,
                  state.vx * (1.0 - HOPPER_AIR_BRAKE * np.maximum(brake, 0.0)))
    contact = contact & ~(vh > 0.0)

    x = state.x + vx * DT
    h = state.h + vh * DT
    landed = h < 0.0
    h = np.where(landed, 0.0, h)
    vh = np.where(landed, 0.0, vh)
    vx = np.where(landed, HOPPER_LANDING_LOSS * vx, vx)
    contact = contact | landed
    ground_timer = np.where(contact, state.ground_timer + 1, 0)
    d = TARGET_X - x

    new = HopperSurrogateState(
        x=x, h=h, vx=vx, vh=vh, contact=contact, ground_timer=ground_timer,
        x_old=state.x, h_old=state.h, d=d, d_old=state.d, last_lift=lift,
    )
    reward = np.where(
        np.asarray(behavior) == BehaviorCue.B1,
        reward_hopper_forward(new.d_old, d),
        reward_hopper_vertical(new.h_old, h, new.d_old, d),
    )
    obs = hopper_observation(new, behavior)
    failed = ~(np.isfinite(x) & np.isfinite(h) & np.isfinite(vx) & np.isfinite(vh) & np.isfinite(reward))
    done = (ground_timer > HOPPER_STAGNATION_STEPS) | failed
    return StepOutcome(new, obs, reward, done, failed)


# -- walker ------------------------------------------------------------------

@dataclass(frozen=True)
class WalkerSurrogateState:
    x: np.ndarray
    y: np.ndarray
    yaw: np.ndarray
    v: np.ndarray
    lateral: np.ndarray
    omega: np.ndarray
    x_old: np.ndarray
    y_old: np.ndarray
    last_action: np.ndarray

    def take(self, index) -> "WalkerSurrogateState":
        return WalkerSurrogateState(**{f.name: getattr(self, f.name)[index] for f in fields(self)})


def walker_reset(episode_seed=0, batch=None):
    """Start at the origin facing +x, at rest.  ``episode_seed`` is unused."""
    z = _zeros(batch)
    state = WalkerSurrogateState(
        x=z, y=z, yaw=z, v=z, lateral=z, omega=z, x_old=z, y_old=z,
        last_action=np.zeros(z.shape + (WALKER_ACTION_DIM,)),
    )
    return state, walker_observation(state)


def walker_observation(state: WalkerSurrogateState, behavior=None) -> np.ndarray:
    width = WALKER_OBS_DIM if behavior is not None else WALKER_OBS_DIM - 2
    obs = np.zeros(np.shape(state.x) + (width,))
    bearing = np.arctan2(0.0 - state.y, TARGET_X - state.x) - state.yaw
    c, s = np.cos(state.yaw), np.sin(state.yaw)
    obs[..., 0] = WALKER_HEIGHT
    obs[..., 1] = np.sin(bearing)
    obs[..., 2] = np.cos(bearing)
    obs[..., 3] = state.v * c - state.lateral * s
    obs[..., 4] = state.v * s + state.lateral * c
    obs[..., 8:16] = state.last_action
    obs[..., 16:24:2] = state.v[..., None]
    obs[..., 17:24:2] = state.omega[..., None]
    obs[..., 24:28] = 1.0
    if behavior is not None:
        obs[..., 28:] = cue_inputs(behavior)
    return obs


def walker_step(state: WalkerSurrogateState, action, behavior) -> StepOutcome:
    """One control step of the planar walker.

    Legs 0-3 drive forward thrust (their mean) and sideways strafe (front
    pair minus rear pair); legs 4-7 drive turning.  The planar command
    (thrust, strafe) is capped at the forward maximum, so walking diagonally
    is no faster than walking straight.  Speeds follow first-order drag
    dynamics, then the body integrates in its new heading frame.
    """
    a = np.clip(np.asarray(action, dtype=float), -1.0, 1.0)
    front = a[..., 0] + a[..., 1]
    rear = a[..., 2] + a[..., 3]
    thrust = (front + rear) * (WALKER_GAIN / 4)
    strafe = (front - rear) * (WALKER_STRAFE_GAIN / 2)
    norm = np.hypot(thrust, strafe)
    scale = np.where(norm > WALKER_GAIN, WALKER_GAIN / np.maximum(norm, WALKER_GAIN), 1.0)
    thrust, strafe = thrust * scale, strafe * scale
    turn = (a[..., 4] + a[..., 5] + a[..., 6] + a[..., 7]) * (WALKER_GAIN / 4)

    v = state.v + (thrust - WALKER_LINEAR_DRAG * state.v) * DT
    lateral = state.lateral + (strafe - WALKER_LINEAR_DRAG * state.lateral) * DT
    omega = state.omega + (turn - WALKER_TURN_DRAG * state.omega) * DT
    yaw = wrap_angle(state.yaw + omega * DT)
    c, s = np.cos(yaw), np.sin(yaw)
    x = state.x + (v * c - lateral * s) * DT
    y = state.y + (v * s + lateral * c) * DT

    new = WalkerSurrogateState(
        x=x, y=y, yaw=yaw, v=v, lateral=lateral, omega=omega,
        x_old=state.x, y_old=state.y, last_action=a,
    )
    reward = reward_walker(behavior, new.x_old, new.y_old, x, y, yaw)
    obs = walker_observation(new, behavior)
    failed = ~(np.isfinite(x) & np.isfinite(y) & np.isfinite(v) & np.isfinite(omega) & np.isfinite(reward))
    return StepOutcome(new, obs, reward, failed.copy(), failed)


def reset(env: str, episode_seed=0, batch=None):
    if env == "hopper":
        return hopper_reset(episode_seed, batch)
    if env == "walker":
        return walker_reset(episode_seed, batch)
    raise ValueError(f"unknown environment {env!r}; expected one of {ENVS}")


def step(env: str, state, action, behavior) -> StepOutcome:
    if env == "hopper":
        return hopper_step(state, action, behavior)
    if env == "walker":
        return walker_step(state, action, behavior)
    raise ValueError(f"unknown environment {env!r}; expected one of {ENVS}")


def observe(env: str, state, behavior) -> np.ndarray:
    if env == "hopper":
        return hopper_observation(state, behavior)
    return walker_observation(state, behavior)


# -- trajectory dump -----------------------------------------------------------

TRAJECTORY_HEADERS = {
    "hopper": ("step", "x", "h", "vh", "reward", "done"),
    "walker": ("step", "x", "y", "yaw", "reward", "done"),
}


def trajectory_row(env: str, step_index: int, outcome: StepOutcome) -> tuple:
    s = outcome.state
    if env == "hopper":
        second, third = s.h, s.vh
    else:
        second, third = s.y, s.yaw
    return (step_index, repr(float(s.x)), repr(float(second)), repr(float(third)),
            repr(float(outcome.reward)), int(bool(outcome.done)))


def write_trajectory(path, env: str, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRAJECTORY_HEADERS[env])
        writer.writerows(rows)
