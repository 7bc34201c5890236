"""Compare the compiled and pure-Python learner kernels.

    python benchmarks/bench_backends.py --steps 200000 --repeat 3
"""

import argparse
import time

from lowswitch.agent import backend, init_state, run
from lowswitch.mdp import RngStream, make_random_mdp
from lowswitch.oracle import value_iteration
from lowswitch.schedule import HyperParams


def time_run(name, mdp, hp, algorithm, steps, monitor, q_star):
    state = init_state(mdp.n_states, mdp.n_actions, mdp.gamma)
    start = time.perf_counter()
    run(state, mdp, hp, RngStream(0, 1), steps, algorithm, q_star=q_star if monitor else None, backend=name)
    return time.perf_counter() - start, state


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--steps", type=int, default=100_000)
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--states", type=int, default=5)
    parser.add_argument("--actions", type=int, default=3)
    args = parser.parse_args()

    mdp = make_random_mdp(args.states, args.actions, 0.9, 1.0, RngStream(0))
    hp = HyperParams(0.5, 0.1, args.steps, mdp.gamma, mdp.n_states, mdp.n_actions)
    q_star = value_iteration(mdp).q_star
    names = backend.available()
    print(f"backends: {', '.join(names)}; S={args.states} A={args.actions} steps={args.steps}")
    print(f"{'algorithm':<18}{'monitor':<9}" + "".join(f"{n + ' s':>12}" for n in names) + f"{'speedup':>10}")
    for algorithm in ("main", "ucb_q", "random"):
        for monitor in (False, True):
            best = {}
            finals = {}
            for name in names:
                times = []
                for _ in range(args.repeat):
                    dt, state = time_run(name, mdp, hp, algorithm, args.steps, monitor, q_star)
                    times.append(dt)
                best[name] = min(times)
                finals[name] = state
            if len(names) == 2:
                assert finals["python"].equals(finals["cython"]), "backends disagree"
                speed = f"{best['python'] / best['cython']:>9.1f}x"
            else:
                speed = f"{'-':>10}"
            print(f"{algorithm:<18}{str(monitor):<9}" + "".join(f"{best[n]:>12.4f}" for n in names) + speed)


if __name__ == "__main__":
    main()
