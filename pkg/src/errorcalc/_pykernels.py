"""Pure Python / numpy versions of the compiled kernels in ``_ckernels.pyx``."""

import numpy as np


def block_counts(bits, k):
    n = len(bits)
    codes = np.zeros(n - k + 1, dtype=np.int64)
    for j in range(k):
        codes = (codes << 1) | bits[j : j + n - k + 1]
    return np.bincount(codes, minlength=1 << k).astype(np.int64)


def fsm_select(bits, trans, decide, initial):
    trans = trans.tolist()
    decide = decide.tolist()
    state = initial
    mask = []
    for b in bits.tolist():
        mask.append(decide[state])
        state = trans[state][b]
    return np.array(mask, dtype=bool)


def fsm_bet(bits, trans, stake, predict, initial, capital):
    trans = trans.tolist()
    stake = stake.tolist()
    predict = predict.tolist()
    state = initial
    c = float(capital)
    out = []
    for b in bits.tolist():
        s = stake[state] * c
        c = c + s if predict[state] == b else c - s
        out.append(c)
        state = trans[state][b]
    return np.array(out, dtype=np.float64)


def fsm_bet_batch(bits, trans, stake, predict, initial, capital):
    # vectorized across sequences, sequential in time
    m, L = bits.shape
    state = np.full(m, initial, dtype=np.int64)
    c = np.full(m, float(capital))
    for i in range(L):
        col = bits[:, i].astype(np.int64)
        s = stake[state] * c
        win = predict[state] == col
        c = np.where(win, c + s, c - s)
        state = trans[state, col]
    return c


def lil_max(bits, n0):
    n = len(bits)
    if n < n0:
        return 0.0
    m = np.arange(1, n + 1, dtype=np.float64)
    ones = np.cumsum(bits, dtype=np.int64)
    sl = slice(n0 - 1, n)
    vals = np.abs(2.0 * ones[sl] - m[sl]) / np.sqrt(2.0 * m[sl] * np.log(np.log(m[sl])))
    return float(vals.max())
