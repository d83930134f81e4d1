"""Binary sequences: normality statistics, selection rules and betting tests.

Selection rules and betting strategies are finite-state machines that take
their decision for position ``n`` from the current state *before* reading bit
``n``, so they cannot anticipate.  The bit-level loops run in
:mod:`errorcalc.kernels`.
"""

from __future__ import annotations

import json
import math
from collections.abc import Mapping
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterator

import numpy as np

from . import kernels, rng
from .errors import ErrorCalcError, PreconditionError

MAX_BLOCK = 24
POWER_FACTOR = 10  # normality_report wants len >= 2**kmax * POWER_FACTOR


class SequenceFormatError(ErrorCalcError, ValueError):
    """A sequence file could not be read."""


class MachineFormatError(ErrorCalcError, ValueError):
    """Invalid rule or strategy description."""


@dataclass(frozen=True, eq=False)
class BitSequence:
    bits: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        b = np.array(self.bits, dtype=np.uint8)
        if b.ndim != 1:
            raise PreconditionError("bits must be one-dimensional")
        if b.size and b.max() > 1:
            raise PreconditionError("bits must be 0 or 1")
        b.setflags(write=False)
        object.__setattr__(self, "bits", b)
        if not self.provenance:
            object.__setattr__(self, "provenance", {"generator": "literal"})

    @classmethod
    def from_string(cls, text: str, provenance: dict | None = None) -> "BitSequence":
        text = "".join(text.split())
        if set(text) - {"0", "1"}:
            raise PreconditionError("bit strings may only contain '0' and '1'")
        return cls(np.frombuffer(text.encode(), dtype=np.uint8) - ord("0"), provenance or {})

    def __len__(self) -> int:
        return len(self.bits)

    def __str__(self) -> str:
        return (self.bits + ord("0")).tobytes().decode()

    def mean(self) -> float:
        return float(self.bits.mean())


def _nonempty(seq: BitSequence) -> None:
    if len(seq) == 0:
        raise PreconditionError("sequence is empty")


# ---------------------------------------------------------------------------
# generators


def champernowne_bits(count: int) -> BitSequence:
    """First ``count`` bits of 0 1 10 11 100 101 ... (binary integers from 0)."""
    if count < 1:
        raise PreconditionError("count must be positive")
    parts: list[str] = []
    length = 0
    i = 0
    while length < count:
        b = format(i, "b")
        parts.append(b)
        length += len(b)
        i += 1
    text = "".join(parts)[:count]
    return BitSequence.from_string(text, {"generator": "champernowne", "count": count, "start": 0, "seed": None})


BITS_PER_CHUNK = rng.CHUNK * 64


def prng_bits(count: int, seed: int = 0, workers: int = 1) -> BitSequence:
    if count < 1:
        raise PreconditionError("count must be positive")

    def chunk(i: int, size: int) -> np.ndarray:
        return rng.bits(seed, rng.stream_id(rng.PURPOSE_BITS, i), size)

    bits = np.concatenate(rng.map_chunks(chunk, count, workers, BITS_PER_CHUNK))
    return BitSequence(bits, {"generator": rng.GENERATOR_NAME, "count": count, "seed": seed})


# ---------------------------------------------------------------------------
# block statistics


class BlockFrequencies(Mapping):
    """Sliding-window frequency of every length-``k`` block, keyed by bit string."""

    def __init__(self, k: int, counts: np.ndarray):
        self.k = k
        self.counts = counts
        self.windows = int(counts.sum())
        self.array = counts / self.windows

    def _code(self, block: str) -> int:
        if len(block) != self.k or set(block) - {"0", "1"}:
            raise KeyError(block)
        return int(block, 2)

    def __getitem__(self, block: str) -> float:
        return float(self.array[self._code(block)])

    def __iter__(self) -> Iterator[str]:
        return (format(c, f"0{self.k}b") for c in range(1 << self.k))

    def __len__(self) -> int:
        return 1 << self.k

    def max_deviation(self) -> float:
        return float(np.max(np.abs(self.array - 2.0**-self.k)))


def block_frequencies(seq: BitSequence, k: int) -> BlockFrequencies:
    if not 1 <= k <= MAX_BLOCK:
        raise PreconditionError(f"block length must be in 1..{MAX_BLOCK}, got {k}")
    if len(seq) < k:
        raise PreconditionError(f"sequence of length {len(seq)} is shorter than block length {k}")
    return BlockFrequencies(k, kernels.block_counts(seq.bits, k))


@dataclass
class NormalityReport:
    rows: list[dict]
    warnings: list[str]
    length: int

    def to_dict(self) -> dict:
        return {"length": self.length, "rows": self.rows, "warnings": self.warnings}


def normality_report(seq: BitSequence, kmax: int) -> NormalityReport:
    """Per block length ``k`` ≤ ``kmax``: worst frequency deviation from 2⁻ᵏ and
    a chi-square statistic against the uniform law with 2ᵏ − 1 degrees of
    freedom (approximate: sliding windows overlap)."""
    _nonempty(seq)
    if kmax < 1:
        raise PreconditionError("kmax must be at least 1")
    warnings = []
    if len(seq) < (1 << kmax) * POWER_FACTOR:
        warnings.append(
            f"low power: length {len(seq)} < 2^{kmax} * {POWER_FACTOR}; block statistics are unreliable"
        )
    rows = []
    for k in range(1, min(kmax, len(seq)) + 1):
        bf = block_frequencies(seq, k)
        expected = bf.windows / (1 << k)
        chi2 = math.fsum(((bf.counts - expected) ** 2 / expected).tolist())
        dev = np.abs(bf.array - 2.0**-k)
        worst = int(np.argmax(dev))
        rows.append(
            {
                "k": k,
                "windows": bf.windows,
                "max_deviation": float(dev[worst]),
                "worst_block": format(worst, f"0{k}b"),
                "chi_square": chi2,
                "dof": (1 << k) - 1,
                "approximate": True,
            }
        )
    return NormalityReport(rows, warnings, len(seq))


def lil_statistic(seq: BitSequence, n0: int = 10) -> float:
    """max over n0 ≤ n ≤ len of |2 S_n − n| / sqrt(2 n ln ln n)."""
    if n0 < 10 or len(seq) < n0:
        raise PreconditionError(f"need len >= n0 >= 10, got len {len(seq)}, n0 {n0}")
    return kernels.lil_max(seq.bits, n0)


# ---------------------------------------------------------------------------
# finite-state machines


def _machine_core(doc: Any, what: str) -> tuple[list[str], int, np.ndarray]:
    if not isinstance(doc, dict):
        raise MachineFormatError(f"{what} must be a JSON object")
    try:
        states = [str(s) for s in doc["states"]]
        initial = str(doc["initial"])
        trans_doc = doc["transitions"]
    except (KeyError, TypeError) as exc:
        raise MachineFormatError(f"{what} is missing {exc}") from None
    if not states or len(set(states)) != len(states):
        raise MachineFormatError(f"{what} needs distinct, non-empty states")
    index = {s: i for i, s in enumerate(states)}
    if initial not in index:
        raise MachineFormatError(f"{what}: unknown initial state {initial!r}")
    trans = np.zeros((len(states), 2), dtype=np.int64)
    for s in states:
        t = trans_doc.get(s) if isinstance(trans_doc, dict) else None
        if isinstance(t, dict):
            pair = (t.get("0"), t.get("1"))
        elif isinstance(t, list) and len(t) == 2:
            pair = tuple(t)
        else:
            raise MachineFormatError(f"{what}: state {s!r} needs transitions on 0 and 1")
        for bit, target in enumerate(pair):
            if str(target) not in index:
                raise MachineFormatError(f"{what}: transition from {s!r} on {bit} to unknown state {target!r}")
            trans[index[s], bit] = index[str(target)]
    return states, index[initial], trans


def _transitions_doc(states: tuple[str, ...], trans: np.ndarray) -> dict:
    return {s: {"0": states[trans[i, 0]], "1": states[trans[i, 1]]} for i, s in enumerate(states)}


@dataclass(frozen=True, eq=False)
class SelectionRule:
    """Decides select/skip for position n from the state reached on bits 0..n-1."""

    states: tuple[str, ...]
    initial: int
    transitions: np.ndarray  # (S, 2) next state on bit 0 / 1
    decisions: np.ndarray  # (S,) 1 = select

    @classmethod
    def from_json(cls, doc: Any) -> "SelectionRule":
        states, initial, trans = _machine_core(doc, "selection rule")
        dec_doc = doc.get("decisions")
        if not isinstance(dec_doc, dict):
            raise MachineFormatError("selection rule needs a decisions object")
        decisions = np.zeros(len(states), dtype=np.uint8)
        for i, s in enumerate(states):
            d = dec_doc.get(s)
            if d not in ("select", "skip"):
                raise MachineFormatError(f"selection rule: decision for {s!r} must be 'select' or 'skip'")
            decisions[i] = d == "select"
        return cls(tuple(states), initial, trans, decisions)

    def to_json(self) -> dict:
        return {
            "states": list(self.states),
            "initial": self.states[self.initial],
            "transitions": _transitions_doc(self.states, self.transitions),
            "decisions": {s: ("select" if self.decisions[i] else "skip") for i, s in enumerate(self.states)},
        }

    def state_after(self, history) -> int:
        state = self.initial
        for b in history:
            state = int(self.transitions[state, int(b)])
        return state

    def decide(self, history) -> bool:
        """Decision for the position following ``history``."""
        return bool(self.decisions[self.state_after(history)])


def select_all() -> SelectionRule:
    return SelectionRule(("s",), 0, np.zeros((1, 2), dtype=np.int64), np.ones(1, dtype=np.uint8))


def select_after_one() -> SelectionRule:
    """Select a bit iff the previous bit was 1 (position 0 is skipped)."""
    trans = np.array([[0, 1], [0, 1]], dtype=np.int64)
    return SelectionRule(("after0", "after1"), 0, trans, np.array([0, 1], dtype=np.uint8))


def selection_mask(seq: BitSequence, rule: SelectionRule) -> np.ndarray:
    return kernels.fsm_select(seq.bits, rule.transitions, rule.decisions, rule.initial)


def select_subsequence(seq: BitSequence, rule: SelectionRule) -> BitSequence:
    mask = selection_mask(seq, rule)
    return BitSequence(
        seq.bits[mask],
        {"generator": "selection", "rule": rule.to_json(), "source": seq.provenance, "seed": seq.provenance.get("seed")},
    )


@dataclass(frozen=True, eq=False)
class BettingStrategy:
    """Stakes a fraction of current capital on a predicted bit, chosen from
    the state reached on the history; fair even-odds payout."""

    states: tuple[str, ...]
    initial: int
    transitions: np.ndarray
    stakes: np.ndarray  # (S,) in [0, 1]
    predictions: np.ndarray  # (S,) 0 or 1

    def __post_init__(self):
        if np.any(self.stakes < 0) or np.any(self.stakes > 1):
            raise MachineFormatError("stake fractions must lie in [0, 1]")

    @classmethod
    def from_json(cls, doc: Any) -> "BettingStrategy":
        states, initial, trans = _machine_core(doc, "betting strategy")
        dec_doc = doc.get("decisions")
        if not isinstance(dec_doc, dict):
            raise MachineFormatError("betting strategy needs a decisions object")
        stakes = np.zeros(len(states))
        preds = np.zeros(len(states), dtype=np.uint8)
        for i, s in enumerate(states):
            d = dec_doc.get(s)
            try:
                stakes[i] = float(d["stake"])
                preds[i] = int(d["predict"])
            except (KeyError, TypeError, ValueError):
                raise MachineFormatError(f"betting strategy: decision for {s!r} needs stake and predict") from None
            if preds[i] not in (0, 1) or not 0.0 <= stakes[i] <= 1.0:
                raise MachineFormatError(f"betting strategy: bad decision for {s!r}")
        return cls(tuple(states), initial, trans, stakes, preds)

    def to_json(self) -> dict:
        return {
            "states": list(self.states),
            "initial": self.states[self.initial],
            "transitions": _transitions_doc(self.states, self.transitions),
            "decisions": {
                s: {"stake": float(self.stakes[i]), "predict": int(self.predictions[i])}
                for i, s in enumerate(self.states)
            },
        }

    def decide(self, history) -> tuple[float, int]:
        state = self.initial
        for b in history:
            state = int(self.transitions[state, int(b)])
        return float(self.stakes[state]), int(self.predictions[state])


def constant_strategy(stake: float, predict: int) -> BettingStrategy:
    return BettingStrategy(
        ("s",), 0, np.zeros((1, 2), dtype=np.int64), np.array([stake], dtype=float), np.array([predict], dtype=np.uint8)
    )


def random_rule(gen: np.random.Generator, max_states: int = 4) -> SelectionRule:
    S = int(gen.integers(1, max_states + 1))
    trans = gen.integers(0, S, size=(S, 2)).astype(np.int64)
    decisions = gen.integers(0, 2, size=S).astype(np.uint8)
    decisions[gen.integers(0, S)] = 1  # at least one selecting state
    return SelectionRule(tuple(f"q{i}" for i in range(S)), 0, trans, decisions)


def random_strategy(gen: np.random.Generator, max_states: int = 4, max_stake: float = 1.0) -> BettingStrategy:
    """Random finite-state strategy with stakes uniform in [0, max_stake]."""
    S = int(gen.integers(1, max_states + 1))
    trans = gen.integers(0, S, size=(S, 2)).astype(np.int64)
    return BettingStrategy(
        tuple(f"q{i}" for i in range(S)),
        0,
        trans,
        max_stake * gen.random(S),
        gen.integers(0, 2, size=S).astype(np.uint8),
    )


def martingale_capital(seq: BitSequence, strategy: BettingStrategy, initial: float = 1.0) -> np.ndarray:
    """Capital after each bit: c ← c ± stake·c, + when the prediction is right."""
    if not initial > 0:
        raise PreconditionError("initial capital must be positive")
    return kernels.fsm_bet(
        seq.bits, strategy.transitions, strategy.stakes, strategy.predictions, strategy.initial, initial
    )


def final_capitals(bits: np.ndarray, strategy: BettingStrategy, initial: float = 1.0) -> np.ndarray:
    """Final capital for every row of a 2-d bit matrix."""
    return kernels.fsm_bet_batch(
        bits, strategy.transitions, strategy.stakes, strategy.predictions, strategy.initial, initial
    )


def all_sequences(length: int) -> np.ndarray:
    """Every bit string of ``length`` as rows of a ``(2**length, length)`` matrix."""
    codes = np.arange(1 << length, dtype=np.int64)
    shifts = np.arange(length - 1, -1, -1, dtype=np.int64)
    return ((codes[:, None] >> shifts) & 1).astype(np.uint8)


def exhaustive_mean_capital(strategy: BettingStrategy, length: int, initial: float = 1.0) -> float:
    """Average final capital over all 2**length sequences (exact fair-coin expectation)."""
    if length == 0:
        return initial
    finals = final_capitals(all_sequences(length), strategy, initial)
    return math.fsum(finals.tolist()) / len(finals)


@dataclass
class EnsembleResult:
    mean: float
    std_error: float
    sequences: int
    length: int
    seed: int
    initial: float

    def within(self, sigmas: float = 3.0) -> bool:
        return abs(self.mean - self.initial) <= sigmas * self.std_error


def ensemble_bits(sequences: int, length: int, seed: int) -> np.ndarray:
    """Bit matrix whose row ``i`` comes from its own stream (seed, i)."""
    rows = [rng.bits(seed, rng.stream_id(rng.PURPOSE_ENSEMBLE, i), length) for i in range(sequences)]
    return np.stack(rows) if rows else np.empty((0, length), dtype=np.uint8)


def ensemble_capital(
    strategy: BettingStrategy, sequences: int, length: int, seed: int = 0, initial: float = 1.0
) -> EnsembleResult:
    if sequences < 2 or length < 1:
        raise PreconditionError("ensemble needs at least 2 sequences of positive length")
    finals = final_capitals(ensemble_bits(sequences, length, seed), strategy, initial)
    mean = math.fsum(finals.tolist()) / sequences
    d = finals - mean
    var = math.fsum((d * d).tolist()) / (sequences - 1)
    return EnsembleResult(mean, math.sqrt(var / sequences), sequences, length, seed, initial)


# ---------------------------------------------------------------------------
# files


def read_sequence(path, packed: bool = False, count: int | None = None) -> BitSequence:
    """Read ASCII '0'/'1' text (whitespace ignored) or packed MSB-first bytes."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise SequenceFormatError(f"cannot read {path}: {exc.strerror}") from None
    if packed:
        bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8))
    else:
        text = b"".join(data.split())
        arr = np.frombuffer(text, dtype=np.uint8)
        if arr.size and (arr.min() < ord("0") or arr.max() > ord("1")):
            raise SequenceFormatError(f"{path}: ASCII sequences may only contain '0', '1' and whitespace")
        bits = arr - ord("0")
    if count is not None:
        if count > len(bits):
            raise SequenceFormatError(f"{path}: holds {len(bits)} bits, {count} requested")
        bits = bits[:count]
    if len(bits) == 0:
        raise SequenceFormatError(f"{path}: empty sequence")
    return BitSequence(bits, {"generator": "file", "path": str(path), "packed": packed, "seed": None})


def write_sequence(path, seq: BitSequence, packed: bool = False, width: int = 64) -> None:
    path = Path(path)
    if packed:
        path.write_bytes(np.packbits(seq.bits).tobytes())
        return
    text = str(seq)
    lines = [text[i : i + width] for i in range(0, len(text), width)]
    path.write_text("\n".join(lines) + "\n")


def load_json(path, what: str) -> Any:
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise MachineFormatError(f"cannot read {what} {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise MachineFormatError(f"{what} {path} is not valid JSON: {exc}") from None
