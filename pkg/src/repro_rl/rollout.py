"""Rollout harness: run episodes under a noise model and collect records.

Every rollout i of an evaluation owns three derived substreams,
(master_seed, "init", i), (master_seed, "noise", i) and (master_seed,
"env", i), so rollout i is the same whether it runs alone, in a batch of
256, or on eight worker threads. Streams a rollout does not need are never
materialised; by construction that cannot shift any other stream.

Point-mass episodes with a network policy run through the compiled kernel
in `_accel` (or its numpy twin); everything else takes the generic per-step
path. Within one path results are bit-reproducible.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _accel
from .core import (
    ConstantPolicy,
    EvalRecord,
    NumericFailure,
    Policy,
    PolicyParams,
    Trajectory,
    derive_stream,
    policy_action,
)
from .envs import EnvConfig, descriptor, descriptor_dim
from .noise import NoiseConfig, observe, wrap_params, wrap_reset, wrap_step

INIT_TAG = "init"
NOISE_TAG = "noise"
ENV_TAG = "env"


@dataclass(frozen=True)
class EvalConfig:
    """How many rollouts to run and what to record."""

    n_evals: int = 256
    master_seed: int = 0
    record_state_marginal: bool = False

    def __post_init__(self):
        if self.n_evals < 1:
            raise ValueError(f"n_evals must be >= 1, got {self.n_evals}")


def _rollout_gens(noise_cfg: NoiseConfig, env_cfg: EnvConfig, master_seed: int, index: int):
    init_gen = (
        derive_stream(master_seed, INIT_TAG, index).generator()
        if noise_cfg.kind == "init-state"
        else None
    )
    noise_gen = (
        derive_stream(master_seed, NOISE_TAG, index).generator()
        if noise_cfg.kind != "none"
        else None
    )
    env_gen = (
        derive_stream(master_seed, ENV_TAG, index).generator()
        if env_cfg.family == "bandit"
        else None
    )
    return init_gen, noise_gen, env_gen


def _fast_path_ok(policy: Policy, env_cfg: EnvConfig, noise_cfg: NoiseConfig) -> bool:
    if env_cfg.family != "point-mass":
        return False
    if not isinstance(policy, PolicyParams):
        return False
    if policy.arch[0] != 4 or policy.arch[-1] != 2:
        return False
    if noise_cfg.kind == "param" and noise_cfg.resample == "per-step":
        return False
    return True


def _rollout_generic(policy, env_cfg, noise_cfg, init_gen, noise_gen, env_gen):
    n_steps = env_cfg.episode_length
    states = np.empty((n_steps, env_cfg.state_dim))
    observations = np.empty((n_steps, env_cfg.state_dim))
    actions = np.empty((n_steps, env_cfg.action_dim))
    rewards = np.empty(n_steps)

    state = wrap_reset(env_cfg, noise_cfg, init_gen)
    episode_policy = policy
    if noise_cfg.kind == "param" and noise_cfg.resample == "per-episode":
        episode_policy = wrap_params(policy, noise_cfg, noise_gen)
    obs = observe(noise_cfg, state.vec, noise_gen)

    for t in range(n_steps):
        states[t] = state.vec
        observations[t] = obs
        if noise_cfg.kind == "param" and noise_cfg.resample == "per-step":
            step_policy = wrap_params(policy, noise_cfg, noise_gen)
        else:
            step_policy = episode_policy
        action = policy_action(step_policy, obs)
        state, r, done, obs, exec_action = wrap_step(
            env_cfg, noise_cfg, state, action, env_gen, noise_gen, obs
        )
        actions[t] = exec_action
        rewards[t] = r
        if not (np.all(np.isfinite(state.vec)) and np.isfinite(r)):
            raise NumericFailure(f"non-finite value at step {t}", step=t)

    return Trajectory(
        states=states,
        observations=observations,
        actions=actions,
        rewards=rewards,
        episode_return=float(np.sum(rewards)),
        final_state=state.vec.copy(),
    )


def _rollout_point_mass_fast(policy, env_cfg, noise_cfg, init_gen, noise_gen, env_gen):
    n_steps = env_cfg.episode_length
    kind = _accel.KIND_CODES.get(noise_cfg.kind, 0)
    sigma = noise_cfg.sigma

    theta = policy.theta
    if noise_cfg.kind == "param":
        theta = theta + sigma * noise_gen.standard_normal(theta.shape[0])

    s0 = wrap_reset(env_cfg, noise_cfg, init_gen).vec

    dummy2 = np.zeros((1, 1))
    dummy1 = np.zeros(1)
    eps_action = (
        noise_gen.standard_normal((n_steps, 2)) if noise_cfg.kind == "action" else dummy2
    )
    eps_obs = (
        noise_gen.standard_normal((n_steps + 1, 4)) if noise_cfg.kind == "obs" else dummy2
    )
    eps_dyn = (
        noise_gen.standard_normal((n_steps, 4)) if noise_cfg.kind == "dynamics" else dummy2
    )
    eps_reward = (
        noise_gen.standard_normal(n_steps) if noise_cfg.kind == "reward" else dummy1
    )

    states = np.empty((n_steps, 4))
    observations = np.empty((n_steps, 4))
    actions = np.empty((n_steps, 2))
    rewards = np.empty(n_steps)
    final_state = np.empty(4)

    status = _accel.point_mass_episode(
        np.ascontiguousarray(theta),
        np.asarray(policy.arch, dtype=np.int64),
        1 if policy.activation == "relu" else 0,
        s0,
        env_cfg.goal[0],
        env_cfg.goal[1],
        env_cfg.dt,
        env_cfg.v_max,
        n_steps,
        kind,
        sigma,
        1 if noise_cfg.obs_affects_reward else 0,
        eps_action,
        eps_obs,
        eps_dyn,
        eps_reward,
        states,
        observations,
        actions,
        rewards,
        final_state,
    )
    if status >= 0:
        raise NumericFailure(f"non-finite value at step {status}", step=int(status))

    return Trajectory(
        states=states,
        observations=observations,
        actions=actions,
        rewards=rewards,
        episode_return=float(np.sum(rewards)),
        final_state=final_state,
    )


class _BanditFastEval:
    """Per-record precomputation for single-step bandit evaluations.

    Reproduces the generic path draw for draw on every recorded quantity.
    Draws that cannot reach any recorded output (the post-step observation
    noise and the dynamics perturbation of the terminal state) are skipped;
    they sit after everything recorded within their own stream, so skipping
    them cannot shift a recorded value.
    """

    def __init__(self, policy: Policy, env_cfg: EnvConfig, noise_cfg: NoiseConfig):
        self.env_cfg = env_cfg
        self.noise_cfg = noise_cfg
        self.policy = policy
        self.ds = env_cfg.state_dim
        self.da = env_cfg.action_dim
        self.s0 = np.zeros(self.ds)
        if isinstance(policy, PolicyParams):
            self.weights = []
            self.biases = []
            offset = 0
            for n_in, n_out in zip(policy.arch[:-1], policy.arch[1:]):
                self.weights.append(
                    policy.theta[offset : offset + n_in * n_out].reshape(n_in, n_out)
                )
                offset += n_in * n_out
                self.biases.append(policy.theta[offset : offset + n_out])
                offset += n_out
            self.relu = policy.activation == "relu"
        else:
            from .envs import _check_action

            _check_action(env_cfg, policy.action)
        kind = noise_cfg.kind
        self.base_action = (
            self._forward(self.s0)
            if kind not in ("param", "obs", "init-state")
            else None
        )

    def _forward(self, obs: np.ndarray) -> np.ndarray:
        if isinstance(self.policy, ConstantPolicy):
            return self.policy.action
        x = obs
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = x @ w + b
            if i == last:
                x = np.tanh(z)
            elif self.relu:
                x = np.maximum(z, 0.0)
            else:
                x = np.tanh(z)
        return x

    def run(self, master_seed: int, index: int):
        """One rollout; returns (return, executed_action, initial_state)."""
        cfg = self.env_cfg
        noise = self.noise_cfg
        kind = noise.kind
        sigma = noise.sigma

        s0 = self.s0
        if kind == "init-state":
            init_gen = derive_stream(master_seed, INIT_TAG, index).generator()
            s0 = s0 + sigma * init_gen.standard_normal(self.ds)
        noise_gen = (
            derive_stream(master_seed, NOISE_TAG, index).generator()
            if kind != "none"
            else None
        )

        if kind == "param":
            theta = self.policy.theta + sigma * noise_gen.standard_normal(
                self.policy.theta.shape[0]
            )
            action = _forward_theta(theta, self.policy.arch, self.relu, s0)
        elif kind == "obs":
            obs = s0 + sigma * noise_gen.standard_normal(self.ds)
            action = self._forward(obs)
        elif kind == "init-state":
            action = self._forward(s0)
        else:
            action = self.base_action

        if kind == "action":
            eps = noise_gen.standard_normal(self.da)
            action = np.clip(action + sigma * eps, -1.0, 1.0)

        env_gen = derive_stream(master_seed, ENV_TAG, index).generator()
        u = float(env_gen.uniform(-1.0, 1.0))
        a = float(action[0])
        r = cfg.mean_base + cfg.mean_slope * a + cfg.spread_max * a * u
        if kind == "reward":
            r += sigma * float(noise_gen.standard_normal())
        if not np.isfinite(r):
            raise NumericFailure("non-finite value at step 0", step=0)
        return float(r), np.asarray(action, dtype=np.float64), s0


def _forward_theta(theta, arch, relu, obs):
    x = obs
    offset = 0
    last = len(arch) - 2
    for i, (n_in, n_out) in enumerate(zip(arch[:-1], arch[1:])):
        w = theta[offset : offset + n_in * n_out].reshape(n_in, n_out)
        offset += n_in * n_out
        b = theta[offset : offset + n_out]
        offset += n_out
        z = x @ w + b
        if i == last:
            x = np.tanh(z)
        elif relu:
            x = np.maximum(z, 0.0)
        else:
            x = np.tanh(z)
    return x


def _bandit_fast_ok(policy: Policy, env_cfg: EnvConfig, noise_cfg: NoiseConfig) -> bool:
    if env_cfg.family != "bandit" or env_cfg.episode_length != 1:
        return False
    if noise_cfg.kind == "param" and not isinstance(policy, PolicyParams):
        return False
    return isinstance(policy, (PolicyParams, ConstantPolicy))


def rollout_once(
    policy: Policy,
    env_cfg: EnvConfig,
    noise_cfg: NoiseConfig,
    master_seed: int,
    index: int = 0,
) -> Trajectory:
    """Run rollout `index` of the evaluation identified by `master_seed`.

    The same (policy, env_cfg, noise_cfg, master_seed, index) always yields
    the same trajectory.
    """
    init_gen, noise_gen, env_gen = _rollout_gens(noise_cfg, env_cfg, master_seed, index)
    if _fast_path_ok(policy, env_cfg, noise_cfg):
        return _rollout_point_mass_fast(
            policy, env_cfg, noise_cfg, init_gen, noise_gen, env_gen
        )
    return _rollout_generic(policy, env_cfg, noise_cfg, init_gen, noise_gen, env_gen)


def evaluate(
    policy: Policy,
    env_cfg: EnvConfig,
    noise_cfg: NoiseConfig,
    eval_cfg: EvalConfig,
    jobs: int = 1,
    policy_id: str = "policy",
) -> EvalRecord:
    """Run n_evals rollouts and assemble the evaluation record.

    `jobs` only controls the worker thread count; results are identical for
    any value because every rollout draws from its own substreams and writes
    its own row.
    """
    n = eval_cfg.n_evals
    returns = np.empty(n)
    descs = np.empty((n, descriptor_dim(env_cfg)))
    marginals = (
        np.empty((n, env_cfg.episode_length * env_cfg.state_dim))
        if eval_cfg.record_state_marginal
        else None
    )

    fast_bandit = (
        _BanditFastEval(policy, env_cfg, noise_cfg)
        if _bandit_fast_ok(policy, env_cfg, noise_cfg)
        else None
    )

    def run(i: int) -> None:
        try:
            if fast_bandit is not None:
                r, action, s0 = fast_bandit.run(eval_cfg.master_seed, i)
                returns[i] = r
                descs[i] = action
                if marginals is not None:
                    marginals[i] = s0
                return
            traj = rollout_once(policy, env_cfg, noise_cfg, eval_cfg.master_seed, i)
        except NumericFailure as e:
            e.rollout_index = i
            raise
        returns[i] = traj.episode_return
        descs[i] = descriptor(env_cfg, traj)
        if marginals is not None:
            marginals[i] = traj.state_marginal()

    if jobs <= 1:
        for i in range(n):
            run(i)
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(run, i) for i in range(n)]
            for f in futures:
                f.result()

    return EvalRecord(
        policy_id=policy_id,
        env_id=env_cfg.env_id,
        noise=noise_cfg,
        master_seed=eval_cfg.master_seed,
        returns=returns,
        descriptors=descs,
        state_marginals=marginals,
    )
