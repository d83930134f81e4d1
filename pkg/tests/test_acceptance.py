"""Acceptance criteria 1-10.

Each criterion is a function returning ``(passed, detail)``; runtime limits
are part of the verdict.  Under pytest every criterion prints one line

    [criterion N] PASS|FAIL  (t.ts)  detail

and the run can also be made directly with ``python3 tests/test_acceptance.py``.
"""

from __future__ import annotations

import json
import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from errorcalc.cli import main as cli_main  # noqa: E402
from errorcalc.expression import eval2, parse, substitute  # noqa: E402
from errorcalc.oracle import dirichlet_energy, extend_by_limit, mc_gamma  # noqa: E402
from errorcalc.propagation import (  # noqa: E402
    carre_terms,
    compose,
    gamma,
    propagate,
    propagate_naive,
    pushforward,
    verify_carre_identity,
)
from errorcalc.sequences import (  # noqa: E402
    block_frequencies,
    champernowne_bits,
    ensemble_capital,
    exhaustive_mean_capital,
    prng_bits,
    random_rule,
    random_strategy,
    select_subsequence,
)
from errorcalc.structure import Frame, Grid1D, base_frame, diag_structure  # noqa: E402

from helpers import (  # noqa: E402
    random_injective_map,
    random_linear_map,
    random_monotone_map,
    random_poly,
    random_psd,
    random_smooth,
    sine_family,
)

NAMES = ("x", "y", "z")
DISPLAYED_PREFIX = "01101110010111011"  # "0 1 10 11 100 101 110 111" concatenated


def _timed(limit):
    def wrap(fn):
        def run():
            t0 = time.perf_counter()
            ok, detail = fn()
            dt = time.perf_counter() - t0
            if limit is not None and dt >= limit:
                ok, detail = False, f"{detail}; runtime {dt:.2f}s exceeds {limit}s"
            return ok, detail, dt

        run.__name__ = fn.__name__
        run.__doc__ = fn.__doc__
        return run

    return wrap


@_timed(10.0)
def criterion_1():
    """Engine Γ for x·y at (2,3) is 0.25; mc_gamma within 2%."""
    s = diag_structure(["x", "y"], [0.01, 0.04])
    e = parse("x*y", ["x", "y"])
    f = base_frame(s, [2.0, 3.0])
    q = propagate(e, f)
    g = gamma(q, q, f)
    est = mc_gamma(e, s, [2.0, 3.0], epsilon=1e-3, samples=10**6, seed=0)
    rel = abs(est.estimate - 0.25) / 0.25
    return g == 0.25 and rel < 0.02, f"engine {g!r}, oracle {est.estimate:.6f} (rel {rel:.2e}, se {est.std_error:.1e})"


@_timed(5.0)
def criterion_2():
    """Carré identity over 250 random polynomials and PSD frames."""
    gen = np.random.default_rng(2)
    worst = 0.0
    for _ in range(250):
        n = int(gen.integers(1, 4))
        f = Frame(gen.uniform(-1, 1, size=n), random_psd(gen, n, rank=int(gen.integers(1, n + 1))), np.zeros(n))
        e = random_poly(gen, NAMES[:n], 4)
        g = carre_terms(e, f)[2]
        worst = max(worst, abs(verify_carre_identity(e, f)) / (1 + abs(g)))
    return worst < 1e-9, f"250 cases, max |residual|/(1+|Γ|) = {worst:.2e}"


@_timed(1.0)
def criterion_3():
    """Shear round trip: coherent engine exact, naive chain inflates to 3."""
    s = diag_structure(["x", "y"], [1.0, 1.0])
    shear = [parse("x + y", ["x", "y"]), parse("y", ["x", "y"])]
    inverse = [parse("x - y", ["x", "y"]), parse("y", ["x", "y"])]
    back = pushforward(inverse, pushforward(shear, base_frame(s, [0.0, 0.0])))
    err = float(np.max(np.abs(back.gamma - np.eye(2))))
    naive = propagate_naive([shear, inverse], s, [0.0, 0.0])
    return err <= 1e-12 and naive[0] == 3.0, f"coherent max error {err:.1e}, naive first coordinate {float(naive[0])!r}"


@_timed(10.0)
def criterion_4():
    """Staged vs direct transport on 120 injective pairs (60 linear, 60 monotone)."""
    gen = np.random.default_rng(4)
    worst = 0.0
    for case in range(120):
        n = int(gen.integers(1, 4))
        names = NAMES[:n]
        pick = random_linear_map if case % 2 == 0 else random_monotone_map
        u, v = pick(gen, names), random_injective_map(gen, names)
        f = Frame(gen.uniform(-1, 1, size=n), random_psd(gen, n), 0.1 * gen.normal(size=n))
        staged = pushforward(v, pushforward(u, f))
        direct = pushforward(compose(v, u), f)
        for a, b in ((staged.point, direct.point), (staged.gamma, direct.gamma), (staged.bias, direct.bias)):
            scale = max(float(np.max(np.abs(a))), float(np.max(np.abs(b))), 1e-300)
            worst = max(worst, float(np.max(np.abs(a - b))) / scale)
    return worst <= 1e-9, f"120 pairs, max relative gap {worst:.2e}"


@_timed(None)
def criterion_5():
    """Functional calculus, Cauchy-Schwarz and bilinearity on 200 cases."""
    gen = np.random.default_rng(5)
    worst_fc = worst_bil = 0.0
    cs_ok = True
    for _ in range(200):
        f = Frame(gen.uniform(-1, 1, size=3), random_psd(gen, 3, rank=int(gen.integers(1, 4))), np.zeros(3))
        p, q = int(gen.integers(1, 4)), int(gen.integers(1, 4))
        u = [random_smooth(gen, NAMES, 2) for _ in range(p)]
        v = [random_smooth(gen, NAMES, 2) for _ in range(q)]
        F, G = random_smooth(gen, NAMES[:p], 3), random_smooth(gen, NAMES[:q], 3)
        Fu, Gv = propagate(substitute(F, u), f), propagate(substitute(G, v), f)
        lhs = gamma(Fu, Gv, f)
        U, V = [propagate(e, f) for e in u], [propagate(e, f) for e in v]
        dF = eval2(F, [w.value for w in U]).gradient
        dG = eval2(G, [w.value for w in V]).gradient
        terms = [dF[i] * dG[j] * gamma(U[i], V[j], f) for i in range(p) for j in range(q)]
        scale = sum(abs(t) for t in terms)
        if scale > 0:
            worst_fc = max(worst_fc, abs(lhs - sum(terms)) / scale)
        elif lhs != 0.0:
            worst_fc = math.inf
        cs_ok &= lhs**2 <= gamma(Fu, Fu, f) * gamma(Gv, Gv, f) * (1 + 1e-10) + 1e-300
        a, b = gen.normal(size=2)
        combo = gamma(a * Fu + b * Gv, Gv, f)
        parts = (a * gamma(Fu, Gv, f), b * gamma(Gv, Gv, f))
        bscale = abs(parts[0]) + abs(parts[1])
        if bscale > 0:
            worst_bil = max(worst_bil, abs(combo - sum(parts)) / bscale)
    ok = worst_fc <= 1e-9 and worst_bil <= 1e-12 and cs_ok
    return ok, f"chain rule gap {worst_fc:.2e}, bilinearity gap {worst_bil:.2e}, Cauchy-Schwarz {'holds' if cs_ok else 'fails'}"


@_timed(30.0)
def criterion_6():
    """Sine families on a 10^4-cell grid: 1/k^2 Cauchy with energy near π⁴/12, 1/k not."""
    s = diag_structure(["x"], [1.0], Grid1D(0.0, 1.0))
    good = extend_by_limit(sine_family(200, 2), s, 10**4)
    bad = extend_by_limit(sine_family(200, 1), s, 10**4)
    target = math.pi**4 / 12
    quad = dirichlet_energy(sine_family(200, 2)[-1], s, 10**4).estimate
    rel = abs(good.limiting_energy - target) / target if good.limiting_energy is not None else math.inf
    ok = good.is_cauchy_in_D and rel < 0.01 and not bad.is_cauchy_in_D and quad == good.limiting_energy
    return ok, (
        f"1/k^2: cauchy={good.is_cauchy_in_D}, E[F_200]={good.limiting_energy:.6f} (rel {rel:.2e}); "
        f"1/k: cauchy={bad.is_cauchy_in_D}"
    )


@_timed(None)
def criterion_7():
    """Champernowne prefix and 10^6-bit frequencies."""
    prefix = str(champernowne_bits(17))
    seq = champernowne_bits(10**6)
    dev1 = abs(block_frequencies(seq, 1)["1"] - 0.5)
    dev3 = block_frequencies(seq, 3).max_deviation()
    ok = prefix == DISPLAYED_PREFIX and dev1 < 0.05 and dev3 < 0.03
    return ok, f"prefix {prefix}, |freq(1)-0.5| = {dev1:.6f}, max k=3 deviation = {dev3:.6f}"


@_timed(60.0)
def criterion_8():
    """Exhaustive martingale check (L <= 12, 20 strategies) and a 10^4 x 10^3 ensemble."""
    gen = np.random.default_rng(8)
    worst = 0.0
    for _ in range(20):
        st = random_strategy(gen)
        for L in range(1, 13):
            worst = max(worst, abs(exhaustive_mean_capital(st, L, 1.0) - 1.0))
    ens = ensemble_capital(random_strategy(gen, max_stake=0.05), 10**4, 10**3, seed=8)
    z = (ens.mean - 1.0) / ens.std_error
    return worst <= 1e-12 and ens.within(3.0), f"exhaustive max gap {worst:.1e}, ensemble mean {ens.mean:.5f} (z = {z:+.2f})"


@_timed(None)
def criterion_9():
    """10 random finite-state rules on a 10^6-bit PRNG stream."""
    gen = np.random.default_rng(9)
    seq = prng_bits(10**6, seed=9)
    checked, worst = 0, 0.0
    for _ in range(10):
        sub = select_subsequence(seq, random_rule(gen))
        m = len(sub)
        if m >= 10**4:
            checked += 1
            worst = max(worst, abs(sub.mean() - 0.5) / (4 / (2 * math.sqrt(m))))
    return checked > 0 and worst <= 1.0, f"{checked} subsequences with m >= 10^4, worst |mean-0.5|/bound = {worst:.3f}"


def _cli(argv, out):
    import contextlib
    import io

    buf = io.StringIO()
    with contextlib.redirect_stdout(buf):
        code = cli_main([str(a) for a in argv])
    if out is not None:
        Path(out).write_text(buf.getvalue())
    return code, buf.getvalue()


@_timed(None)
def criterion_10(workdir: Path | None = None):
    """Every CLI command re-run from its report reproduces all results bit for bit."""
    import tempfile

    tmp = Path(workdir or tempfile.mkdtemp(prefix="errorcalc-acc-"))
    (tmp / "grid.json").write_text(json.dumps({"vars": ["x"], "sigma": {"kind": "diag", "values": [1]}, "law": {"kind": "grid", "interval": [0, 1]}}))
    (tmp / "unif.json").write_text(json.dumps({"vars": ["x"], "sigma": {"kind": "diag", "values": [1]}, "law": {"kind": "uniform", "bounds": [[0, 1]]}}))
    (tmp / "fam.json").write_text(json.dumps({"family": {"term": "sin(k*pi*x)/k^2", "K": 64}}))
    rule = {"states": ["a", "b"], "initial": "a", "transitions": {"a": ["a", "b"], "b": ["a", "b"]}, "decisions": {"a": "skip", "b": "select"}}
    (tmp / "rule.json").write_text(json.dumps(rule))
    strat = {"states": ["s"], "initial": "s", "transitions": {"s": ["s", "s"]}, "decisions": {"s": {"stake": 0.1, "predict": 1}}}
    (tmp / "strat.json").write_text(json.dumps(strat))
    seqf = tmp / "bits.bin"
    commands = [
        ["propagate", "x*y", "--sigma", "diag:0.01,0.04", "--vars", "x,y", "--point", "2,3"],
        ["oracle", "x*y", "--sigma", "diag:0.01,0.04", "--vars", "x,y", "--point", "2,3", "--samples", "300000", "--seed", "10", "--workers", "1"],
        ["coherence-demo"],
        ["limit", tmp / "fam.json", "--structure", tmp / "grid.json", "--points", "5000"],
        ["limit", tmp / "fam.json", "--structure", tmp / "unif.json", "--points", "200000", "--seed", "3", "--workers", "1"],
        ["sequence", "generate", "prng", "--count", "5000000", "--seed", "10", "--out", seqf, "--packed", "--workers", "1"],
        ["sequence", "generate", "champernowne", "--count", "100000", "--out", tmp / "champ.txt"],
        ["sequence", "analyze", seqf, "--packed", "--kmax", "8", "--n0", "100"],
        ["sequence", "select", seqf, "--packed", "--rule", tmp / "rule.json", "--out", tmp / "sub.txt"],
        ["sequence", "bet", tmp / "champ.txt", "--strategy", tmp / "strat.json"],
        ["sequence", "bet", "--strategy", tmp / "strat.json", "--ensemble", "1000", "--length", "300", "--seed", "4"],
    ]
    failures = []
    for i, argv in enumerate(commands):
        first = tmp / f"report{i}.json"
        code, _ = _cli(argv, first)
        if code != 0:
            failures.append(f"{argv[0]} exited {code}")
            continue
        before = json.loads(first.read_text())
        code, text = _cli(["rerun", first, "--workers", "4"], None)
        if code != 0 or json.loads(text)["results"] != before["results"]:
            failures.append(" ".join(map(str, argv[:2])))
    ok = not failures
    return ok, f"{len(commands)} commands re-run with 4 workers" + ("" if ok else f"; mismatched: {failures}")


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6, criterion_7, criterion_8, criterion_9, criterion_10]


def _line(n, ok, detail, dt):
    return f"[criterion {n}] {'PASS' if ok else 'FAIL'}  ({dt:.2f}s)  {detail}"


@pytest.mark.parametrize("n", range(1, 11))
def test_criterion(n, capsys):
    ok, detail, dt = CRITERIA[n - 1]()
    with capsys.disabled():
        print("\n" + _line(n, ok, detail, dt))
    assert ok, detail


if __name__ == "__main__":
    results = []
    for n, fn in enumerate(CRITERIA, start=1):
        ok, detail, dt = fn()
        print(_line(n, ok, detail, dt), flush=True)
        results.append(ok)
    sys.exit(0 if all(results) else 1)
