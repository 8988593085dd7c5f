"""Recurrence trends of two semi-infinite tails against a return-time simulation.

For each tail, prints the recurrence integral across truncation orders
and compares the implied return probability ``1 - 1/I_N`` with the
fraction of simulated excursions from state 0 that come back within the
horizon (reflecting truncation at ``10 N``).

    python3 scripts/infinite_trends.py --N 25,50,100,200 --s 0.9999
"""
import argparse
from dataclasses import dataclass

import numpy as np

from banded_markov.banded_core import generator, reflecting_truncation
from banded_markov.markov_analysis import S_GRID, classify_infinite
from banded_markov.simulate import SimConfig, empirical_estimates, sample_path

TAILS = {
    "symmetric": generator(1, 1, [[2 / 3, 1 / 3]], [[1 / 3, 1 / 3, 1 / 3]]),
    "biased": generator(1, 1, [[0.3, 0.7]], [[0.1, 0.2, 0.7]]),
}


@dataclass(frozen=True)
class TrendConfig:
    orders: tuple = (25, 50, 100, 200)
    s_grid: tuple = S_GRID
    seed: int = 11
    replicas: int = 1000
    horizon: int = 1000


def return_fraction(T, size, cfg):
    paths = sample_path(reflecting_truncation(T, size),
                        SimConfig(seed=cfg.seed, steps=cfg.horizon, replicas=cfg.replicas))
    fp = empirical_estimates(paths, size, k_max=0)["first_passage"]
    f = fp["estimate"][0]
    return fp["hit_fraction"][0], fp["hit_fraction_se"][0], np.cumsum(f)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--N", default="25,50,100,200")
    ap.add_argument("--seed", type=int, default=11)
    ap.add_argument("--replicas", type=int, default=1000)
    ap.add_argument("--horizon", type=int, default=1000)
    args = ap.parse_args(argv)
    cfg = TrendConfig(orders=tuple(int(v) for v in args.N.split(",")), seed=args.seed,
                      replicas=args.replicas, horizon=args.horizon)
    key = repr(cfg.s_grid[-1])
    for name, T in TAILS.items():
        res = classify_infinite(T, cfg.orders, cfg.s_grid)
        print(f"== {name}: recurrent_leaning={res['recurrent_leaning']} "
              f"growth={res['integral_growth']:.3f} ergodic_leaning={res['ergodic_leaning']}")
        print(f"{'N':>5} {'lambda0':>10} {'mass11':>10} {'I(s)':>10} {'1-1/I':>8}")
        for r in res["rows"]:
            I = r["integral"][key]
            print(f"{r['N']:>5} {r['lambda0']:>10.6f} {r['mass11']:>10.3e} {I:>10.4f} {1 - 1 / I:>8.4f}")
        F, se, cum = return_fraction(T, 10 * cfg.orders[-1], cfg)
        marks = [h for h in (10, 100, cfg.horizon) if h < len(cum)]
        print(f"simulated return fraction {F:.4f} +- {se:.4f}; "
              + ", ".join(f"F({h})={cum[h]:.4f}" for h in marks))


if __name__ == "__main__":
    main()
