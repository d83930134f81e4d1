"""Compare the compiled and pure-Python sequence kernels.

    python3 bench/bench_kernels.py [--bits N] [--repeat R] [--json PATH]

Prints one row per kernel with the best-of-R wall time for each backend and
the speedup.  Every row also checks that both backends return identical
results on the benchmark input.
"""

import argparse
import json
import time

import numpy as np

from errorcalc import kernels
from errorcalc.sequences import prng_bits, random_rule, random_strategy


def best_time(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def cases(bits, gen):
    rule = random_rule(gen, max_states=6)
    st = random_strategy(gen, max_states=6, max_stake=0.05)
    bet_args = (st.transitions, st.stakes, st.predictions, st.initial, 1.0)
    matrix = bits[: (len(bits) // 1000) * 1000].reshape(-1, 1000)
    return {
        "block_counts k=3": lambda impl: kernels.block_counts(bits, 3, impl),
        "block_counts k=16": lambda impl: kernels.block_counts(bits, 16, impl),
        "fsm_select": lambda impl: kernels.fsm_select(bits, rule.transitions, rule.decisions, rule.initial, impl),
        "fsm_bet": lambda impl: kernels.fsm_bet(bits, *bet_args, impl=impl),
        "fsm_bet_batch": lambda impl: kernels.fsm_bet_batch(matrix, *bet_args, impl=impl),
        "lil_max": lambda impl: kernels.lil_max(bits, 10, impl),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--bits", type=int, default=10**6)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--json", help="also write the rows as JSON")
    args = ap.parse_args()

    impls = kernels.implementations()
    if "cython" not in impls:
        raise SystemExit("compiled extension not built; reinstall without ERRORCALC_NO_EXT")
    bits = prng_bits(args.bits, seed=1).bits
    rows = []
    print(f"{'kernel':<20}{'python [s]':>12}{'cython [s]':>12}{'speedup':>10}  match")
    for name, fn in cases(bits, np.random.default_rng(0)).items():
        tp, outp = best_time(lambda: fn(impls["python"]), args.repeat)
        tc, outc = best_time(lambda: fn(impls["cython"]), args.repeat)
        if isinstance(outp, float):
            match = abs(outp - outc) <= 1e-12 * max(1.0, abs(outp))
        else:
            match = bool(np.array_equal(outp, outc))
        rows.append({"kernel": name, "python_s": tp, "cython_s": tc, "speedup": tp / tc, "match": match})
        print(f"{name:<20}{tp:>12.4f}{tc:>12.4f}{tp / tc:>9.1f}x  {'yes' if match else 'NO'}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump({"bits": args.bits, "repeat": args.repeat, "rows": rows}, fh, indent=2)


if __name__ == "__main__":
    main()
