"""Compare the compiled episode kernel against its pure-numpy twin.

Runs identical point-mass rollouts through both kernel paths, checks they
agree, and reports per-episode timings plus thread scaling for a full
evaluation.  The first compiled call includes numba's compile time; it is
timed separately and excluded from the steady-state numbers (cache=True
makes later processes skip it).

Usage:
    python benchmarks/bench_rollout.py [--episodes N] [--kind K] [--arch A]
"""

import argparse
import time

import numpy as np

from repro_rl import _accel
from repro_rl.envs import point_mass_nav
from repro_rl.noise import NoiseConfig
from repro_rl.optim import EsConfig, init_center
from repro_rl.rollout import EvalConfig, evaluate, rollout_once


def _time_path(kernel, policy, env, noise, episodes):
    """Per-episode seconds with `kernel` installed, plus summed returns."""
    saved = _accel.point_mass_episode
    _accel.point_mass_episode = kernel
    try:
        returns = np.empty(episodes)
        t0 = time.perf_counter()
        for i in range(episodes):
            returns[i] = rollout_once(policy, env, noise, 0, i).episode_return
        dt = time.perf_counter() - t0
    finally:
        _accel.point_mass_episode = saved
    return dt / episodes, returns


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--episodes", type=int, default=2000)
    ap.add_argument("--kind", default="obs", help="noise kind to run under")
    ap.add_argument("--arch", default="4,16,16,2", help="policy layer sizes")
    args = ap.parse_args()

    arch = tuple(int(x) for x in args.arch.split(","))
    env = point_mass_nav()
    noise = NoiseConfig(kind=args.kind) if args.kind != "none" else NoiseConfig()
    policy = init_center(EsConfig(arch=arch), 0)

    print(f"env={env.env_id} kind={noise.kind} arch={arch} "
          f"episodes={args.episodes} horizon={env.episode_length}")

    if _accel.point_mass_episode_numba is None:
        print("numba unavailable or disabled "
              f"({_accel.NUMBA_ENV_FLAG}=1); timing numpy path only")
        t_np, _ = _time_path(_accel.point_mass_episode_numpy, policy, env, noise,
                             args.episodes)
        print(f"numpy kernel : {t_np * 1e6:9.1f} us/episode")
        return

    t0 = time.perf_counter()
    rollout_once(policy, env, noise, 0, 0)
    print(f"first compiled call (incl. any compile): {time.perf_counter() - t0:.2f} s")

    t_nb, r_nb = _time_path(_accel.point_mass_episode_numba, policy, env, noise,
                            args.episodes)
    t_np, r_np = _time_path(_accel.point_mass_episode_numpy, policy, env, noise,
                            args.episodes)
    gap = float(np.max(np.abs(r_nb - r_np)))
    print(f"numba kernel : {t_nb * 1e6:9.1f} us/episode")
    print(f"numpy kernel : {t_np * 1e6:9.1f} us/episode")
    print(f"speedup      : {t_np / t_nb:9.2f}x")
    print(f"max |return diff| across paths: {gap:.3e} (tolerance 1e-8)")
    if gap > 1e-8:
        raise SystemExit("kernel paths disagree beyond tolerance")

    # nogil=True lets worker threads overlap inside the compiled kernel
    cfg = EvalConfig(n_evals=args.episodes, master_seed=0)
    for jobs in [1, 4]:
        t0 = time.perf_counter()
        evaluate(policy, env, noise, cfg, jobs=jobs)
        dt = time.perf_counter() - t0
        print(f"evaluate jobs={jobs}: {dt:6.2f} s "
              f"({dt / args.episodes * 1e6:.1f} us/episode)")


if __name__ == "__main__":
    main()
