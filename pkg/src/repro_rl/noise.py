"""Uncertainty injection around the deterministic environment core.

Exactly one noise kind is active per evaluation. All perturbations are
Gaussian with scale `sigma` and are drawn from dedicated substreams, never
from the environment's own stream, so switching kinds does not shift the
environment draws.

Draw order contract (the accelerated rollout path pregenerates arrays and
must consume draws in exactly this order):

* init-state: position draws once at reset, from the init stream.
* param, per-episode: one theta-sized draw before the first step.
* param, per-step: one theta-sized draw at the start of every step.
* obs: one state-sized draw at reset (epsilon_0), then one per step
  (epsilon_{t+1}), all from the noise stream.
* action: one action-sized draw per step.
* dynamics: one state-sized draw per step.
* reward: one scalar draw per step.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .core import PolicyParams
from .envs import ACTION_HIGH, ACTION_LOW, EnvConfig, EnvState, env_reset, reward, transition

KINDS = ("none", "action", "obs", "reward", "param", "init-state", "dynamics")

RESAMPLE_MODES = ("per-episode", "per-step")

_DEFAULT_SIGMA = {
    "none": 0.0,
    "action": 0.2,
    "obs": 0.05,
    "reward": 0.5,
    "param": 0.02,
    "init-state": 0.1,
    "dynamics": 0.01,
}


def default_sigma(kind: str) -> float:
    """Per-kind default scale, tuned so each kind visibly widens returns
    without drowning the task signal."""
    if kind not in KINDS:
        raise ValueError(f"unknown noise kind {kind!r}, valid kinds: {', '.join(KINDS)}")
    return _DEFAULT_SIGMA[kind]


@dataclass(frozen=True)
class NoiseConfig:
    """Which uncertainty source is active and how strong it is.

    sigma=None resolves to the per-kind default. `resample` only matters for
    parameter noise. `obs_affects_reward` controls whether the reward is
    computed from the noisy observations (the default) or from the true
    states.
    """

    kind: str = "none"
    sigma: Optional[float] = None
    resample: str = "per-episode"
    obs_affects_reward: bool = True

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(
                f"unknown noise kind {self.kind!r}, valid kinds: {', '.join(KINDS)}"
            )
        if self.resample not in RESAMPLE_MODES:
            raise ValueError(
                f"unknown resample mode {self.resample!r}, "
                f"valid modes: {', '.join(RESAMPLE_MODES)}"
            )
        sigma = self.sigma
        if sigma is None:
            sigma = default_sigma(self.kind)
        sigma = float(sigma)
        if not np.isfinite(sigma) or sigma < 0.0:
            raise ValueError(f"sigma must be finite and >= 0, got {sigma}")
        if self.kind == "none" and sigma != 0.0:
            raise ValueError("noise kind 'none' requires sigma 0")
        object.__setattr__(self, "sigma", sigma)

    def to_json_dict(self) -> dict:
        return {
            "kind": self.kind,
            "sigma": self.sigma,
            "resample": self.resample,
            "obs_affects_reward": self.obs_affects_reward,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "NoiseConfig":
        return cls(
            kind=d.get("kind", "none"),
            sigma=d.get("sigma"),
            resample=d.get("resample", "per-episode"),
            obs_affects_reward=d.get("obs_affects_reward", True),
        )


def n_init_dims(cfg: EnvConfig) -> int:
    """How many leading state dims initial-state noise perturbs (positions)."""
    return 2 if cfg.family == "point-mass" else cfg.state_dim


def wrap_params(
    params: PolicyParams, noise: NoiseConfig, gen: np.random.Generator
) -> PolicyParams:
    """Parameter-noise draw: theta + sigma * epsilon, one epsilon per call."""
    if noise.kind != "param":
        raise ValueError(f"wrap_params needs kind 'param', got {noise.kind!r}")
    if not isinstance(params, PolicyParams):
        raise TypeError("parameter noise requires a PolicyParams policy")
    eps = gen.standard_normal(params.theta.shape[0])
    return PolicyParams(
        theta=params.theta + noise.sigma * eps,
        arch=params.arch,
        activation=params.activation,
    )


def wrap_reset(
    cfg: EnvConfig, noise: NoiseConfig, init_gen: np.random.Generator
) -> EnvState:
    """Reset with optional initial-state perturbation of the position dims."""
    state = env_reset(cfg)
    if noise.kind == "init-state":
        k = n_init_dims(cfg)
        state.vec[:k] += noise.sigma * init_gen.standard_normal(k)
    return state


def observe(
    noise: NoiseConfig, state_vec: np.ndarray, noise_gen: np.random.Generator
) -> np.ndarray:
    """Observation emitted for the current state (noisy under obs noise)."""
    if noise.kind == "obs":
        return state_vec + noise.sigma * noise_gen.standard_normal(state_vec.shape[0])
    return state_vec.copy()


def wrap_step(
    cfg: EnvConfig,
    noise: NoiseConfig,
    state: EnvState,
    action: np.ndarray,
    env_gen: np.random.Generator,
    noise_gen: np.random.Generator,
    observation: Optional[np.ndarray] = None,
) -> Tuple[EnvState, float, bool, np.ndarray, np.ndarray]:
    """One noisy step.

    `observation` is the (possibly noisy) observation of the current state,
    needed so observation noise can feed the reward its noisy arguments.
    Returns (next_state, reward, done, next_observation, executed_action).
    """
    from .core import EpisodeFinished
    from .envs import _check_action

    if state.timestep >= cfg.episode_length:
        raise EpisodeFinished(
            f"episode of length {cfg.episode_length} already finished"
        )

    action = np.asarray(action, dtype=np.float64)
    if noise.kind == "action":
        eps = noise_gen.standard_normal(cfg.action_dim)
        exec_action = np.clip(action + noise.sigma * eps, ACTION_LOW, ACTION_HIGH)
    else:
        exec_action = action
    exec_action = _check_action(cfg, exec_action)

    next_vec, aux = transition(cfg, state.vec, exec_action, env_gen)
    if noise.kind == "dynamics":
        next_vec = next_vec + noise.sigma * noise_gen.standard_normal(cfg.state_dim)

    if noise.kind == "obs":
        next_obs = next_vec + noise.sigma * noise_gen.standard_normal(cfg.state_dim)
    else:
        next_obs = next_vec.copy()

    if noise.kind == "obs" and noise.obs_affects_reward:
        if observation is None:
            raise ValueError(
                "observation noise with obs_affects_reward needs the current "
                "observation; call observe() first"
            )
        r = reward(cfg, observation, exec_action, next_obs, aux)
    else:
        r = reward(cfg, state.vec, exec_action, next_vec, aux)

    if noise.kind == "reward":
        r += noise.sigma * float(noise_gen.standard_normal())

    next_state = EnvState(vec=next_vec, timestep=state.timestep + 1)
    done = next_state.timestep >= cfg.episode_length
    return next_state, float(r), done, next_obs, exec_action
