import subprocess
import sys

import numpy as np
import pytest

from repro_rl import _accel
from repro_rl.core import ConstantPolicy, NumericFailure, PolicyParams, param_count
from repro_rl.envs import flat_mean_spread, point_mass_nav, tradeoff_spread
from repro_rl.noise import NoiseConfig
from repro_rl.rollout import (
    EvalConfig,
    _rollout_generic,
    _rollout_gens,
    evaluate,
    rollout_once,
)

ALL_KINDS = ["none", "action", "obs", "reward", "param", "init-state", "dynamics"]


def random_policy(seed=0, arch=(4, 16, 16, 2)):
    gen = np.random.default_rng(seed)
    return PolicyParams(theta=gen.standard_normal(param_count(arch)) * 0.5, arch=arch)


def test_eval_config_validation():
    with pytest.raises(ValueError):
        EvalConfig(n_evals=0)


def test_rollout_once_is_deterministic():
    env = point_mass_nav()
    pol = random_policy(1)
    for kind in ALL_KINDS:
        a = rollout_once(pol, env, NoiseConfig(kind=kind), 3, 7)
        b = rollout_once(pol, env, NoiseConfig(kind=kind), 3, 7)
        assert np.array_equal(a.rewards, b.rewards)
        assert np.array_equal(a.states, b.states)
        assert a.episode_return == b.episode_return


def test_noiseless_point_mass_rollouts_identical_across_indices():
    env = point_mass_nav()
    pol = random_policy(2)
    rec = evaluate(pol, env, NoiseConfig(), EvalConfig(n_evals=16, master_seed=0))
    assert np.all(rec.returns == rec.returns[0])
    assert np.all(rec.descriptors == rec.descriptors[0])


def test_fast_and_generic_paths_agree_on_point_mass():
    env = point_mass_nav()
    pol = random_policy(3)
    for kind in ALL_KINDS:
        nc = NoiseConfig(kind=kind)
        fast = rollout_once(pol, env, nc, 5, 2)
        slow = _rollout_generic(pol, env, nc, *_rollout_gens(nc, env, 5, 2))
        assert np.allclose(fast.rewards, slow.rewards, atol=1e-8), kind
        assert np.allclose(fast.states, slow.states, atol=1e-8), kind
        assert np.allclose(fast.observations, slow.observations, atol=1e-8), kind
        assert np.allclose(fast.actions, slow.actions, atol=1e-8), kind
        assert fast.episode_return == pytest.approx(slow.episode_return, abs=1e-7)


def test_bandit_fast_eval_matches_generic_exactly():
    env = tradeoff_spread()
    for pol in [random_policy(4, arch=(1, 8, 1)), ConstantPolicy(np.array([0.7]))]:
        for kind in ALL_KINDS:
            if kind == "param" and isinstance(pol, ConstantPolicy):
                continue
            nc = NoiseConfig(kind=kind)
            rec = evaluate(
                pol, env, nc, EvalConfig(n_evals=32, master_seed=11, record_state_marginal=True)
            )
            for i in range(32):
                traj = _rollout_generic(pol, env, nc, *_rollout_gens(nc, env, 11, i))
                assert rec.returns[i] == traj.episode_return, kind
                assert np.array_equal(rec.descriptors[i], traj.actions[0]), kind
                assert np.array_equal(rec.state_marginals[i], traj.state_marginal()), kind


def test_numba_and_numpy_kernels_agree():
    if not _accel.using_numba:
        pytest.skip("numba path not active")
    env = point_mass_nav()
    pol = random_policy(5)
    for kind_name, code in [("none", 0), ("action", 1), ("obs", 2), ("reward", 3), ("dynamics", 4)]:
        gen = np.random.default_rng(100 + code)
        n_steps = env.episode_length
        args = dict(
            theta=np.ascontiguousarray(pol.theta),
            arch=np.asarray(pol.arch, dtype=np.int64),
            relu=0,
            s0=np.zeros(4),
            goal_x=1.0,
            goal_y=1.0,
            dt=0.1,
            v_max=1.0,
            n_steps=n_steps,
            kind=code,
            sigma=0.1,
            obs_affects_reward=1,
            eps_action=gen.standard_normal((n_steps, 2)),
            eps_obs=gen.standard_normal((n_steps + 1, 4)),
            eps_dyn=gen.standard_normal((n_steps, 4)),
            eps_reward=gen.standard_normal(n_steps),
        )
        outs = {}
        for name, fn in [("numba", _accel.point_mass_episode_numba),
                         ("numpy", _accel.point_mass_episode_numpy)]:
            states = np.empty((n_steps, 4))
            observations = np.empty((n_steps, 4))
            actions = np.empty((n_steps, 2))
            rewards = np.empty(n_steps)
            final_state = np.empty(4)
            status = fn(
                args["theta"], args["arch"], args["relu"], args["s0"],
                args["goal_x"], args["goal_y"], args["dt"], args["v_max"],
                args["n_steps"], args["kind"], args["sigma"],
                args["obs_affects_reward"], args["eps_action"], args["eps_obs"],
                args["eps_dyn"], args["eps_reward"],
                states, observations, actions, rewards, final_state,
            )
            assert status == -1
            outs[name] = (states, observations, actions, rewards, final_state)
        for a, b in zip(outs["numba"], outs["numpy"]):
            assert np.allclose(a, b, atol=1e-8), kind_name


def test_numpy_fallback_selected_by_env_flag():
    code = (
        "import os; os.environ['REPRO_RL_NO_NUMBA']='1';\n"
        "from repro_rl import _accel\n"
        "assert not _accel.using_numba\n"
        "assert _accel.point_mass_episode is _accel.point_mass_episode_numpy\n"
        "import numpy as np, repro_rl as rr\n"
        "from repro_rl.rollout import EvalConfig, evaluate\n"
        "pol = rr.PolicyParams(np.zeros(rr.param_count((4,16,16,2))), (4,16,16,2))\n"
        "rec = evaluate(pol, rr.point_mass_nav(), rr.NoiseConfig(),\n"
        "               EvalConfig(n_evals=2, master_seed=0))\n"
        "assert abs(rec.returns[0] + 100*np.sqrt(2)) < 1e-9\n"
        "print('ok')\n"
    )
    out = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True)
    assert out.returncode == 0, out.stderr
    assert "ok" in out.stdout


def test_jobs_do_not_change_results():
    env = point_mass_nav()
    pol = random_policy(6)
    nc = NoiseConfig(kind="init-state")
    serial = evaluate(pol, env, nc, EvalConfig(n_evals=64, master_seed=9), jobs=1)
    threaded = evaluate(pol, env, nc, EvalConfig(n_evals=64, master_seed=9), jobs=8)
    assert np.array_equal(serial.returns, threaded.returns)
    assert np.array_equal(serial.descriptors, threaded.descriptors)


def test_prefix_property_of_batches():
    env = tradeoff_spread()
    pol = ConstantPolicy(np.array([0.5]))
    nc = NoiseConfig(kind="reward")
    small = evaluate(pol, env, nc, EvalConfig(n_evals=16, master_seed=4))
    large = evaluate(pol, env, nc, EvalConfig(n_evals=64, master_seed=4))
    assert np.array_equal(small.returns, large.returns[:16])
    assert np.array_equal(small.descriptors, large.descriptors[:16])


def test_reported_mean_bound_flat_mean_spread():
    # arm 1, N=256: spread Uniform(-50,50) has std 50/sqrt(3)
    rec = evaluate(
        ConstantPolicy(np.array([1.0])),
        flat_mean_spread(),
        NoiseConfig(),
        EvalConfig(n_evals=256, master_seed=0),
    )
    bound = 3 * (50 / np.sqrt(3 * 256))
    assert abs(float(np.mean(rec.returns)) - 60.0) <= bound


def test_state_marginal_recording():
    env = point_mass_nav()
    pol = random_policy(7)
    rec = evaluate(
        pol, env, NoiseConfig(), EvalConfig(n_evals=3, master_seed=0, record_state_marginal=True)
    )
    assert rec.state_marginals.shape == (3, 100 * 4)
    traj = rollout_once(pol, env, NoiseConfig(), 0, 0)
    assert np.array_equal(rec.state_marginals[0], traj.states.ravel())
    rec2 = evaluate(pol, env, NoiseConfig(), EvalConfig(n_evals=3, master_seed=0))
    assert rec2.state_marginals is None


def test_numeric_failure_carries_indices():
    env = point_mass_nav()
    pol = random_policy(8)
    nc = NoiseConfig(kind="dynamics", sigma=1e308)
    with pytest.raises(NumericFailure) as exc:
        evaluate(pol, env, nc, EvalConfig(n_evals=4, master_seed=0))
    assert exc.value.step >= 0
    assert exc.value.rollout_index >= 0


def test_numeric_failure_in_bandit_reward():
    env = flat_mean_spread()
    pol = ConstantPolicy(np.array([1.0]))
    # sigma*eps overflows once some |eps| > 1.797; 16 draws guarantee a hit here
    nc = NoiseConfig(kind="reward", sigma=1e308)
    with pytest.raises(NumericFailure) as exc:
        evaluate(pol, env, nc, EvalConfig(n_evals=16, master_seed=0))
    assert exc.value.step == 0
    assert 0 <= exc.value.rollout_index < 16


def test_eval_record_json_round_trip():
    from repro_rl.core import EvalRecord

    env = tradeoff_spread()
    rec = evaluate(
        ConstantPolicy(np.array([0.3])),
        env,
        NoiseConfig(kind="reward"),
        EvalConfig(n_evals=8, master_seed=2, record_state_marginal=True),
        policy_id="arm-0.3",
    )
    back = EvalRecord.from_json_dict(rec.to_json_dict())
    assert back.policy_id == "arm-0.3"
    assert back.env_id == env.env_id
    assert back.noise == rec.noise
    assert back.master_seed == 2
    assert np.array_equal(back.returns, rec.returns)
    assert np.array_equal(back.descriptors, rec.descriptors)
    assert np.array_equal(back.state_marginals, rec.state_marginals)
