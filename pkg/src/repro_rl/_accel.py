"""Accelerated point-mass episode kernels.

Two implementations of the same step semantics: a manual-loop kernel
compiled with numba when available, and a pure-numpy twin. Selection order:

* REPRO_RL_NO_NUMBA=1 in the environment forces the numpy path.
* Otherwise numba is used when importable, numpy when not.

Both paths consume pregenerated noise arrays in the exact order documented
in `noise` so they match the generic per-step rollout bit for bit within
each path (cross-path differences stay at float rounding level, the two
paths order their dot products differently).

Noise kind codes: 0 none, 1 action, 2 obs, 3 reward, 4 dynamics. Parameter
and initial-state noise are applied by the caller (to theta and the start
state) before the kernel runs.
"""

from __future__ import annotations

import math
import os

import numpy as np

NUMBA_ENV_FLAG = "REPRO_RL_NO_NUMBA"

try:
    if os.environ.get(NUMBA_ENV_FLAG, "0") == "1":
        raise ImportError("numba disabled via " + NUMBA_ENV_FLAG)
    from numba import njit

    using_numba = True
except ImportError:
    njit = None
    using_numba = False

KIND_CODES = {"none": 0, "action": 1, "obs": 2, "reward": 3, "dynamics": 4}


def _episode_loops(
    theta,
    arch,
    relu,
    s0,
    goal_x,
    goal_y,
    dt,
    v_max,
    n_steps,
    kind,
    sigma,
    obs_affects_reward,
    eps_action,
    eps_obs,
    eps_dyn,
    eps_reward,
    states,
    observations,
    actions,
    rewards,
    final_state,
):
    n_layers = arch.shape[0] - 1
    max_w = 0
    for i in range(arch.shape[0]):
        if arch[i] > max_w:
            max_w = arch[i]
    buf_a = np.empty(max_w)
    buf_b = np.empty(max_w)

    sx, sy, svx, svy = s0[0], s0[1], s0[2], s0[3]
    if kind == 2:
        ox = sx + sigma * eps_obs[0, 0]
        oy = sy + sigma * eps_obs[0, 1]
        ovx = svx + sigma * eps_obs[0, 2]
        ovy = svy + sigma * eps_obs[0, 3]
    else:
        ox, oy, ovx, ovy = sx, sy, svx, svy

    for t in range(n_steps):
        states[t, 0], states[t, 1], states[t, 2], states[t, 3] = sx, sy, svx, svy
        observations[t, 0], observations[t, 1] = ox, oy
        observations[t, 2], observations[t, 3] = ovx, ovy

        # Forward pass on the observation, manual dot products.
        buf_a[0], buf_a[1], buf_a[2], buf_a[3] = ox, oy, ovx, ovy
        offset = 0
        for layer in range(n_layers):
            n_in = arch[layer]
            n_out = arch[layer + 1]
            for j in range(n_out):
                acc = 0.0
                for i in range(n_in):
                    acc += buf_a[i] * theta[offset + i * n_out + j]
                acc += theta[offset + n_in * n_out + j]
                if layer == n_layers - 1:
                    buf_b[j] = math.tanh(acc)
                elif relu == 1:
                    buf_b[j] = acc if acc > 0.0 else 0.0
                else:
                    buf_b[j] = math.tanh(acc)
            offset += n_in * n_out + n_out
            for j in range(n_out):
                buf_a[j] = buf_b[j]
        ax = buf_a[0]
        ay = buf_a[1]

        if kind == 1:
            ax += sigma * eps_action[t, 0]
            ay += sigma * eps_action[t, 1]
            if ax > 1.0:
                ax = 1.0
            elif ax < -1.0:
                ax = -1.0
            if ay > 1.0:
                ay = 1.0
            elif ay < -1.0:
                ay = -1.0
        actions[t, 0] = ax
        actions[t, 1] = ay

        vx = svx + ax * dt
        vy = svy + ay * dt
        speed = math.sqrt(vx * vx + vy * vy)
        if speed > v_max:
            scale = v_max / speed
            vx *= scale
            vy *= scale
        px = sx + vx * dt
        py = sy + vy * dt

        if kind == 4:
            px += sigma * eps_dyn[t, 0]
            py += sigma * eps_dyn[t, 1]
            vx += sigma * eps_dyn[t, 2]
            vy += sigma * eps_dyn[t, 3]

        if kind == 2:
            nox = px + sigma * eps_obs[t + 1, 0]
            noy = py + sigma * eps_obs[t + 1, 1]
            novx = vx + sigma * eps_obs[t + 1, 2]
            novy = vy + sigma * eps_obs[t + 1, 3]
        else:
            nox, noy, novx, novy = px, py, vx, vy

        if kind == 2 and obs_affects_reward == 1:
            dx = nox - goal_x
            dy = noy - goal_y
        else:
            dx = px - goal_x
            dy = py - goal_y
        r = -math.sqrt(dx * dx + dy * dy)
        if kind == 3:
            r += sigma * eps_reward[t]
        rewards[t] = r

        if not (
            np.isfinite(px)
            and np.isfinite(py)
            and np.isfinite(vx)
            and np.isfinite(vy)
            and np.isfinite(r)
        ):
            return t

        sx, sy, svx, svy = px, py, vx, vy
        ox, oy, ovx, ovy = nox, noy, novx, novy

    final_state[0], final_state[1] = sx, sy
    final_state[2], final_state[3] = svx, svy
    return -1


def point_mass_episode_numpy(
    theta,
    arch,
    relu,
    s0,
    goal_x,
    goal_y,
    dt,
    v_max,
    n_steps,
    kind,
    sigma,
    obs_affects_reward,
    eps_action,
    eps_obs,
    eps_dyn,
    eps_reward,
    states,
    observations,
    actions,
    rewards,
    final_state,
):
    """Pure-numpy twin of the compiled kernel, same argument contract."""
    n_layers = arch.shape[0] - 1
    weights = []
    biases = []
    offset = 0
    for layer in range(n_layers):
        n_in, n_out = int(arch[layer]), int(arch[layer + 1])
        weights.append(theta[offset : offset + n_in * n_out].reshape(n_in, n_out))
        offset += n_in * n_out
        biases.append(theta[offset : offset + n_out])
        offset += n_out

    goal = np.array([goal_x, goal_y])
    s = s0.copy()
    if kind == 2:
        obs = s + sigma * eps_obs[0]
    else:
        obs = s.copy()

    for t in range(n_steps):
        states[t] = s
        observations[t] = obs

        x = obs
        for layer in range(n_layers):
            z = x @ weights[layer] + biases[layer]
            if layer == n_layers - 1:
                x = np.tanh(z)
            elif relu == 1:
                x = np.maximum(z, 0.0)
            else:
                x = np.tanh(z)
        a = x

        if kind == 1:
            a = np.clip(a + sigma * eps_action[t], -1.0, 1.0)
        actions[t] = a

        vel = s[2:] + a * dt
        speed = math.sqrt(vel[0] * vel[0] + vel[1] * vel[1])
        if speed > v_max:
            vel = vel * (v_max / speed)
        pos = s[:2] + vel * dt
        nxt = np.empty(4)
        nxt[:2] = pos
        nxt[2:] = vel

        if kind == 4:
            nxt = nxt + sigma * eps_dyn[t]

        if kind == 2:
            next_obs = nxt + sigma * eps_obs[t + 1]
        else:
            next_obs = nxt.copy()

        if kind == 2 and obs_affects_reward == 1:
            d = next_obs[:2] - goal
        else:
            d = nxt[:2] - goal
        r = -math.sqrt(d[0] * d[0] + d[1] * d[1])
        if kind == 3:
            r += sigma * eps_reward[t]
        rewards[t] = r

        if not (np.all(np.isfinite(nxt)) and np.isfinite(r)):
            return t

        s = nxt
        obs = next_obs

    final_state[:] = s
    return -1


if using_numba:
    point_mass_episode_numba = njit(cache=True, nogil=True)(_episode_loops)
    point_mass_episode = point_mass_episode_numba
else:
    point_mass_episode_numba = None
    point_mass_episode = point_mass_episode_numpy
