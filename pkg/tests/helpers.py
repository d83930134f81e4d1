"""Random test objects shared by the property suites."""

import numpy as np

from errorcalc.expression import Binary, Const, Unary, Var


def var(names, i):
    return Var(names[i], i)


def random_smooth(gen: np.random.Generator, names, depth: int = 3):
    """Random C-infinity expression that is defined on all of R^n."""
    n = len(names)
    if depth == 0 or gen.random() < 0.25:
        if gen.random() < 0.3:
            return Const(float(np.round(gen.uniform(-2, 2), 3)))
        return var(names, int(gen.integers(n)))
    kind = int(gen.integers(9))
    a = random_smooth(gen, names, depth - 1)
    if kind == 0:
        return Binary("add", a, random_smooth(gen, names, depth - 1))
    if kind == 1:
        return Binary("sub", a, random_smooth(gen, names, depth - 1))
    if kind == 2:
        return Binary("mul", a, random_smooth(gen, names, depth - 1))
    if kind == 3:  # a / (1 + b^2)
        b = random_smooth(gen, names, depth - 1)
        return Binary("div", a, Binary("add", Const(1.0), Binary("pow", b, Const(2.0))))
    if kind == 4:
        return Unary("sin", a)
    if kind == 5:
        return Unary("cos", a)
    if kind == 6:  # exp(a / (1 + a^2)) stays bounded
        return Unary("exp", Binary("div", a, Binary("add", Const(1.0), Binary("pow", a, Const(2.0)))))
    if kind == 7:
        return Unary("log", Binary("add", Const(1.0), Binary("pow", a, Const(2.0))))
    return Binary("pow", a, Const(float(gen.integers(0, 4))))


def random_poly(gen: np.random.Generator, names, max_degree: int = 4, terms: int = 5):
    """Random polynomial of total degree <= max_degree."""
    n = len(names)
    acc = Const(float(np.round(gen.uniform(-2, 2), 3)))
    for _ in range(terms):
        mono = Const(float(np.round(gen.uniform(-2, 2), 3)))
        degree = int(gen.integers(0, max_degree + 1))
        for _ in range(degree):
            mono = Binary("mul", mono, var(names, int(gen.integers(n))))
        acc = Binary("add", acc, mono)
    return acc


def random_psd(gen: np.random.Generator, n: int, rank: int | None = None) -> np.ndarray:
    r = n if rank is None else rank
    a = gen.normal(size=(n, r))
    m = a @ a.T / r
    return 0.5 * (m + m.T)


def random_linear_map(gen: np.random.Generator, names):
    """Well-conditioned invertible linear map with an affine shift."""
    n = len(names)
    while True:
        A = np.round(gen.normal(size=(n, n)), 3)
        if abs(np.linalg.det(A)) > 0.2 and np.linalg.cond(A) < 50:
            break
    shift = np.round(gen.uniform(-1, 1, size=n), 3)
    out = []
    for i in range(n):
        acc = Const(float(shift[i]))
        for j in range(n):
            acc = Binary("add", acc, Binary("mul", Const(float(A[i, j])), var(names, j)))
        out.append(acc)
    return out


def random_monotone_map(gen: np.random.Generator, names):
    """Componentwise strictly increasing C-infinity bijection of R^n, possibly permuted."""
    n = len(names)
    perm = gen.permutation(n)
    out = []
    for i in range(n):
        x = var(names, int(perm[i]))
        a = float(np.round(gen.uniform(0.5, 2), 3))
        b = float(np.round(gen.uniform(0.05, 0.5), 3))
        kind = int(gen.integers(3))
        if kind == 0:  # a x + b x^3
            e = Binary("add", Binary("mul", Const(a), x), Binary("mul", Const(b), Binary("pow", x, Const(3.0))))
        elif kind == 1:  # a x + b sin(x), b < a
            e = Binary("add", Binary("mul", Const(a), x), Binary("mul", Const(min(b, a / 2)), Unary("sin", x)))
        else:  # a x + b exp(0.3 x)
            e = Binary("add", Binary("mul", Const(a), x), Binary("mul", Const(b), Unary("exp", Binary("mul", Const(0.3), x))))
        out.append(e)
    return out


def random_injective_map(gen: np.random.Generator, names):
    if gen.random() < 0.5:
        return random_linear_map(gen, names)
    return random_monotone_map(gen, names)


def rel_close(a, b, rtol: float) -> bool:
    """|a - b| <= rtol * max(|a|, |b|, scale) with scale the largest magnitude in b."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    scale = max(1e-300, float(np.max(np.abs(b), initial=0.0)), float(np.max(np.abs(a), initial=0.0)))
    return bool(np.all(np.abs(a - b) <= rtol * scale))


def sine_family(K: int, power: float):
    """Partial sums F_N = sum_{k<=N} sin(k pi x) / k^power, sharing subtrees."""
    x = Var("x", 0)
    out, acc = [], None
    for k in range(1, K + 1):
        term = Binary("div", Unary("sin", Binary("mul", Const(k * np.pi), x)), Const(float(k) ** power))
        acc = term if acc is None else Binary("add", acc, term)
        out.append(acc)
    return out
