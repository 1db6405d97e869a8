"""Small deterministic-core environments for reproducibility experiments.

Two families:

* point-mass: 2-D navigation, state (px, py, vx, vy), acceleration actions,
  reward is the negative distance of the new position to the goal.
* bandit: single-step envs whose reward mean and spread both depend on the
  action, r = mean_base + mean_slope * a + spread_max * a * U with
  U ~ Uniform(-1, 1). The spread term makes return dispersion controllable
  by the policy, which is what the trade-off metrics need.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .core import EpisodeFinished, ShapeError

ACTION_LOW = -1.0
ACTION_HIGH = 1.0
_ACTION_TOL = 1e-9

FAMILIES = ("point-mass", "bandit")


@dataclass(frozen=True)
class EnvConfig:
    """Static description of one environment instance."""

    env_id: str
    family: str
    episode_length: int
    state_dim: int
    action_dim: int
    dt: float = 0.0
    v_max: float = 0.0
    start: tuple = ()
    goal: tuple = ()
    mean_base: float = 0.0
    mean_slope: float = 0.0
    spread_max: float = 0.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown env family {self.family!r}")
        if self.episode_length < 1:
            raise ValueError("episode_length must be >= 1")

    def to_json_dict(self) -> dict:
        return {
            "env_id": self.env_id,
            "family": self.family,
            "episode_length": self.episode_length,
            "state_dim": self.state_dim,
            "action_dim": self.action_dim,
            "dt": self.dt,
            "v_max": self.v_max,
            "start": list(self.start),
            "goal": list(self.goal),
            "mean_base": self.mean_base,
            "mean_slope": self.mean_slope,
            "spread_max": self.spread_max,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "EnvConfig":
        return cls(
            env_id=d["env_id"],
            family=d["family"],
            episode_length=int(d["episode_length"]),
            state_dim=int(d["state_dim"]),
            action_dim=int(d["action_dim"]),
            dt=float(d.get("dt", 0.0)),
            v_max=float(d.get("v_max", 0.0)),
            start=tuple(d.get("start", ())),
            goal=tuple(d.get("goal", ())),
            mean_base=float(d.get("mean_base", 0.0)),
            mean_slope=float(d.get("mean_slope", 0.0)),
            spread_max=float(d.get("spread_max", 0.0)),
        )


def point_mass_nav(
    episode_length: int = 100,
    dt: float = 0.1,
    v_max: float = 1.0,
    start: tuple = (0.0, 0.0),
    goal: tuple = (1.0, 1.0),
) -> EnvConfig:
    """Navigation task: accelerate a point mass from `start` toward `goal`."""
    return EnvConfig(
        env_id="point-mass-nav",
        family="point-mass",
        episode_length=episode_length,
        state_dim=4,
        action_dim=2,
        dt=dt,
        v_max=v_max,
        start=tuple(float(x) for x in start),
        goal=tuple(float(x) for x in goal),
    )


def flat_mean_spread(mean_base: float = 60.0, spread_max: float = 50.0) -> EnvConfig:
    """Bandit whose expected reward is flat in the action but whose spread is not."""
    return EnvConfig(
        env_id="flat-mean-spread",
        family="bandit",
        episode_length=1,
        state_dim=1,
        action_dim=1,
        mean_base=mean_base,
        spread_max=spread_max,
    )


def tradeoff_spread(
    mean_base: float = 60.0, mean_slope: float = 10.0, spread_max: float = 50.0
) -> EnvConfig:
    """Bandit where larger actions raise both the reward mean and its spread."""
    return EnvConfig(
        env_id="tradeoff-spread",
        family="bandit",
        episode_length=1,
        state_dim=1,
        action_dim=1,
        mean_base=mean_base,
        mean_slope=mean_slope,
        spread_max=spread_max,
    )


BUILTIN_ENVS = {
    "point-mass-nav": point_mass_nav,
    "flat-mean-spread": flat_mean_spread,
    "tradeoff-spread": tradeoff_spread,
}


@dataclass
class EnvState:
    """Mutable episode state: the state vector plus the step counter."""

    vec: np.ndarray
    timestep: int = 0


def env_reset(cfg: EnvConfig) -> EnvState:
    """Nominal initial state. Initial-state noise is the wrapper's job."""
    if cfg.family == "point-mass":
        vec = np.zeros(4, dtype=np.float64)
        vec[0], vec[1] = cfg.start
    else:
        vec = np.zeros(cfg.state_dim, dtype=np.float64)
    return EnvState(vec=vec, timestep=0)


def _check_action(cfg: EnvConfig, action: np.ndarray) -> np.ndarray:
    action = np.asarray(action, dtype=np.float64)
    if action.shape != (cfg.action_dim,):
        raise ShapeError(
            f"action must have shape ({cfg.action_dim},), got {action.shape}"
        )
    if not np.all(np.isfinite(action)):
        raise ValueError("action contains non-finite values")
    if np.any(action < ACTION_LOW - _ACTION_TOL) or np.any(
        action > ACTION_HIGH + _ACTION_TOL
    ):
        raise ValueError(
            f"action {action} outside the box [{ACTION_LOW}, {ACTION_HIGH}]"
        )
    return action


def transition(
    cfg: EnvConfig, vec: np.ndarray, action: np.ndarray, gen: np.random.Generator
) -> Tuple[np.ndarray, float]:
    """State update only. Returns (next_vec, aux) where aux carries the
    environment's own random draw (the bandit U; 0.0 for point-mass)."""
    if cfg.family == "point-mass":
        vel = vec[2:] + action * cfg.dt
        speed = float(np.sqrt(vel[0] * vel[0] + vel[1] * vel[1]))
        if speed > cfg.v_max:
            vel = vel * (cfg.v_max / speed)
        pos = vec[:2] + vel * cfg.dt
        return np.concatenate([pos, vel]), 0.0
    u = float(gen.uniform(-1.0, 1.0))
    return vec.copy(), u


def reward(
    cfg: EnvConfig,
    prev_vec: np.ndarray,
    action: np.ndarray,
    next_vec: np.ndarray,
    aux: float,
) -> float:
    """Reward as a pure function of (s_t, a_t, s_{t+1}) plus the env draw."""
    if cfg.family == "point-mass":
        dx = next_vec[0] - cfg.goal[0]
        dy = next_vec[1] - cfg.goal[1]
        return -float(np.sqrt(dx * dx + dy * dy))
    a = float(action[0])
    return cfg.mean_base + cfg.mean_slope * a + cfg.spread_max * a * aux


def env_step(
    cfg: EnvConfig, state: EnvState, action: np.ndarray, gen: np.random.Generator
) -> Tuple[EnvState, float, bool]:
    """Advance one step. Raises EpisodeFinished past the horizon."""
    if state.timestep >= cfg.episode_length:
        raise EpisodeFinished(
            f"episode of length {cfg.episode_length} already finished"
        )
    action = _check_action(cfg, action)
    next_vec, aux = transition(cfg, state.vec, action, gen)
    r = reward(cfg, state.vec, action, next_vec, aux)
    next_state = EnvState(vec=next_vec, timestep=state.timestep + 1)
    return next_state, r, next_state.timestep >= cfg.episode_length


def descriptor_dim(cfg: EnvConfig) -> int:
    return 2 if cfg.family == "point-mass" else cfg.action_dim


def descriptor(cfg: EnvConfig, traj) -> np.ndarray:
    """Behaviour descriptor of a finished episode.

    Point-mass episodes are summarised by the final position; bandit episodes
    by the executed action.
    """
    if traj.rewards.shape[0] != cfg.episode_length:
        raise ValueError(
            f"trajectory has {traj.rewards.shape[0]} steps, "
            f"expected {cfg.episode_length}"
        )
    if cfg.family == "point-mass":
        return np.asarray(traj.final_state[:2], dtype=np.float64).copy()
    return np.asarray(traj.actions[0], dtype=np.float64).copy()
