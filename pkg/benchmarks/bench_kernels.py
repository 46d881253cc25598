"""Time the compiled and pure-Python tabular kernels on the same workload.

    python benchmarks/bench_kernels.py --steps 200000
"""
import argparse
import time

import numpy as np

from avgreward import kernels
from avgreward.envs import random_unichain


def time_training(backend, mdp, noise, repeats):
    best = float("inf")
    for _ in range(repeats):
        table = np.zeros((mdp.num_states, mdp.num_actions))
        start = time.perf_counter()
        backend.run_tabular(kernels.KIND_RLEARN, table, 0.0, 0, mdp.offsets, mdp.next_state,
                            mdp.reward, mdp.cumulative_prob, noise, 0.1, 0.01, len(noise),
                            0.2, 0.2, 0, 0.01, 0.9, 0, 0)
        best = min(best, time.perf_counter() - start)
    return best, table


def time_rollout(backend, mdp, noise, repeats):
    actions = np.zeros(mdp.num_states, dtype=np.int64)
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        mean, _ = backend.rollout(actions, 0, mdp.offsets, mdp.next_state, mdp.reward,
                                  mdp.cumulative_prob, noise, 0)
        best = min(best, time.perf_counter() - start)
    return best, mean


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--steps", type=int, default=200_000)
    parser.add_argument("--states", type=int, default=20)
    parser.add_argument("--actions", type=int, default=4)
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()

    mdp = random_unichain(args.states, args.actions, seed=0)
    rng = np.random.default_rng(0)
    train_noise = rng.random((args.steps, 3))
    eval_noise = rng.random(args.steps)
    backends = [("python", kernels.python_backend)]
    if kernels.compiled_backend is not None:
        backends.append(("compiled", kernels.compiled_backend))
    else:
        print("compiled kernel not built; timing the Python backend only")

    results = {}
    print(f"{'backend':<10}{'train steps/s':>16}{'rollout steps/s':>18}")
    for name, backend in backends:
        t_train, table = time_training(backend, mdp, train_noise, args.repeats)
        t_roll, mean = time_rollout(backend, mdp, eval_noise, args.repeats)
        results[name] = (t_train, t_roll, table, mean)
        print(f"{name:<10}{args.steps / t_train:>16,.0f}{args.steps / t_roll:>18,.0f}")
    if len(results) == 2:
        py, cy = results["python"], results["compiled"]
        same = np.array_equal(py[2], cy[2]) and py[3] == cy[3]
        print(f"speedup: train x{py[0] / cy[0]:.1f}, rollout x{py[1] / cy[1]:.1f}; "
              f"outputs identical: {same}")


if __name__ == "__main__":
    main()
