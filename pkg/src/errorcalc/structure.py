"""Finite-dimensional error structures and evaluation frames."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Sequence, Union

import numpy as np

from . import rng
from .errors import PreconditionError, StructureError, UnsupportedSamplingError
from .expression import MAX_DIM, Const, Expr, evaluate_batch, max_index, parse, validate_names

PSD_TOL = 1e-10


def check_psd(matrix, what: str = "covariance") -> tuple[np.ndarray, float]:
    """Return ``(psd_matrix, clip)`` for a symmetric input.

    Eigenvalues in ``[-PSD_TOL, 0)`` are clipped to zero and ``clip`` is the
    magnitude of the most negative one; anything lower raises
    :class:`StructureError`.
    """
    m = np.asarray(matrix, dtype=float)
    if not np.all(np.isfinite(m)):
        raise StructureError(f"{what} has non-finite entries")
    m = 0.5 * (m + m.T)
    w, v = np.linalg.eigh(m)
    lo = float(w[0])
    if lo >= 0.0:
        return m, 0.0
    if lo < -PSD_TOL:
        raise StructureError(
            f"{what} is not positive semidefinite (minimum eigenvalue {lo:.6g})", min_eigenvalue=lo
        )
    clipped = (v * np.clip(w, 0.0, None)) @ v.T
    return 0.5 * (clipped + clipped.T), -lo


def psd_sqrt(matrix) -> np.ndarray:
    """Symmetric square root through the eigendecomposition (works when singular)."""
    w, v = np.linalg.eigh(np.asarray(matrix, dtype=float))
    r = (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T
    return 0.5 * (r + r.T)


# ---------------------------------------------------------------------------
# covariance fields


@dataclass(frozen=True, eq=False)
class DiagSigma:
    values: np.ndarray

    def matrix(self) -> np.ndarray:
        return np.diag(self.values)


@dataclass(frozen=True, eq=False)
class FullSigma:
    matrix_: np.ndarray

    def matrix(self) -> np.ndarray:
        return self.matrix_.copy()


@dataclass(frozen=True, eq=False)
class ExprSigma:
    """Upper triangle of expressions; ``entries[i][j - i]`` is σ_ij for j ≥ i."""

    entries: tuple[tuple[Expr, ...], ...]
    texts: tuple[tuple[str, ...], ...]

    def batch(self, points: np.ndarray) -> np.ndarray:
        N, n = points.shape
        out = np.empty((N, n, n))
        for i, row in enumerate(self.entries):
            for off, e in enumerate(row):
                j = i + off
                vals = np.full(N, e.value) if isinstance(e, Const) else evaluate_batch(e, points)
                out[:, i, j] = vals
                out[:, j, i] = vals
        return out


SigmaField = Union[DiagSigma, FullSigma, ExprSigma]


# ---------------------------------------------------------------------------
# base laws


@dataclass(frozen=True, eq=False)
class UniformBox:
    bounds: np.ndarray  # (n, 2)


@dataclass(frozen=True, eq=False)
class Gaussians:
    mean: np.ndarray
    sd: np.ndarray


@dataclass(frozen=True, eq=False)
class Grid1D:
    """Deterministic composite-midpoint quadrature on ``[a, b]``."""

    a: float
    b: float

    def points(self, cells: int) -> np.ndarray:
        if cells < 1:
            raise PreconditionError("grid needs at least one cell")
        h = (self.b - self.a) / cells
        return (self.a + (np.arange(cells) + 0.5) * h)[:, None]


BaseLaw = Union[UniformBox, Gaussians, Grid1D]


@dataclass(frozen=True, eq=False)
class ErrorStructure:
    names: tuple[str, ...]
    sigma: SigmaField
    law: BaseLaw | None = None

    @property
    def n(self) -> int:
        return len(self.names)

    def __post_init__(self):
        names = validate_names(self.names)
        object.__setattr__(self, "names", names)
        n = len(names)
        if isinstance(self.sigma, DiagSigma):
            if self.sigma.values.shape != (n,) or np.any(self.sigma.values < 0):
                raise StructureError(f"diagonal covariance needs {n} nonnegative entries")
        elif isinstance(self.sigma, FullSigma):
            if self.sigma.matrix_.shape != (n, n):
                raise StructureError(f"full covariance must be {n}x{n}")
        elif len(self.sigma.entries) != n or any(
            len(row) != n - i for i, row in enumerate(self.sigma.entries)
        ):
            raise StructureError(f"expression covariance needs an upper triangle of size {n}")
        law = self.law
        if isinstance(law, UniformBox):
            if law.bounds.shape != (n, 2) or np.any(law.bounds[:, 1] <= law.bounds[:, 0]):
                raise StructureError("uniform law needs one [a, b] interval with a < b per variable")
        elif isinstance(law, Gaussians):
            if law.mean.shape != (n,) or law.sd.shape != (n,) or np.any(law.sd <= 0):
                raise StructureError("gaussian law needs per-variable mean and positive sd")
        elif isinstance(law, Grid1D):
            if n != 1:
                raise StructureError("grid law is only available in dimension 1")
            if not law.b > law.a:
                raise StructureError("grid law needs a < b")


def sigma_at(s: ErrorStructure, point) -> np.ndarray:
    """Covariance matrix of the errors at ``point``, symmetric and PSD."""
    x = _point(s, point)
    if isinstance(s.sigma, ExprSigma):
        m = s.sigma.batch(x[None, :])[0]
    else:
        m = s.sigma.matrix()
    return check_psd(m)[0]


def sigma_batch(s: ErrorStructure, points: np.ndarray) -> np.ndarray:
    """``sigma_at`` for every row of ``points``; shape ``(N, n, n)``."""
    points = np.asarray(points, dtype=float)
    if isinstance(s.sigma, ExprSigma):
        mats = s.sigma.batch(points)
        for k in range(len(mats)):
            try:
                mats[k] = check_psd(mats[k])[0]
            except StructureError as exc:
                raise StructureError(f"{exc} at point {points[k].tolist()}", exc.min_eigenvalue) from None
        return mats
    m = sigma_at(s, np.zeros(s.n))
    return np.broadcast_to(m, (len(points), s.n, s.n))


def _point(s: ErrorStructure, point) -> np.ndarray:
    x = np.asarray(point, dtype=float)
    if x.shape != (s.n,):
        raise PreconditionError(f"point must have length {s.n}, got shape {x.shape}")
    return x


# ---------------------------------------------------------------------------
# frames


@dataclass(frozen=True, eq=False)
class Frame:
    """Evaluation context: a point, the error covariance there, and the bias
    (drift) of each coordinate.  ``clip`` records PSD clipping applied when
    the frame was produced by a mapping."""

    point: np.ndarray
    gamma: np.ndarray
    bias: np.ndarray
    clip: float = 0.0
    nondifferentiable: bool = False
    names: tuple[str, ...] | None = field(default=None)

    def __post_init__(self):
        p = np.array(self.point, dtype=float)
        g = np.array(self.gamma, dtype=float)
        b = np.array(self.bias, dtype=float)
        m = p.shape[0] if p.ndim == 1 else -1
        if p.ndim != 1 or not 1 <= m <= MAX_DIM:
            raise StructureError(f"frame point must be a vector of length 1..{MAX_DIM}")
        if g.shape != (m, m) or b.shape != (m,):
            raise StructureError("frame gamma/bias shapes do not match the point")
        if not (np.all(np.isfinite(p)) and np.all(np.isfinite(b))):
            raise StructureError("frame entries must be finite")
        scale = max(1.0, float(np.max(np.abs(g)))) if g.size else 1.0
        if np.max(np.abs(g - g.T), initial=0.0) > 1e-12 * scale:
            raise StructureError("frame gamma must be symmetric")
        g, _ = check_psd(g, "frame gamma")
        for name, arr in (("point", p), ("gamma", g), ("bias", b)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def dim(self) -> int:
        return self.point.shape[0]


def base_frame(s: ErrorStructure, point) -> Frame:
    """Frame of the base coordinates: their bias is zero since L has no drift."""
    x = _point(s, point)
    return Frame(x, sigma_at(s, x), np.zeros(s.n), names=s.names)


def sample_base(s: ErrorStructure, count: int, seed: int, workers: int = 1) -> np.ndarray:
    """``count`` draws from the base law as an ``(count, n)`` array.

    Reproducible for fixed ``(count, seed)`` regardless of ``workers``.
    """
    law = s.law
    if law is None:
        raise UnsupportedSamplingError("structure has no base law")
    if isinstance(law, Grid1D):
        raise UnsupportedSamplingError("grid law is deterministic; use grid quadrature instead")
    if count < 0:
        raise PreconditionError("count must be nonnegative")
    n = s.n

    def chunk(i: int, size: int) -> np.ndarray:
        sid = rng.stream_id(rng.PURPOSE_BASE_LAW, i)
        if isinstance(law, UniformBox):
            u = rng.uniforms(seed, sid, size * n).reshape(size, n)
            return law.bounds[:, 0] + (law.bounds[:, 1] - law.bounds[:, 0]) * u
        z = rng.normals(seed, sid, size * n).reshape(size, n)
        return law.mean + law.sd * z

    parts = rng.map_chunks(chunk, count, workers)
    return np.concatenate(parts) if parts else np.empty((0, n))


# ---------------------------------------------------------------------------
# configuration documents


def _floats(value, what: str) -> np.ndarray:
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError):
        raise StructureError(f"{what} must be numeric") from None
    if not np.all(np.isfinite(arr)):
        raise StructureError(f"{what} must be finite")
    return arr


def structure_from_config(doc: dict[str, Any]) -> ErrorStructure:
    """Build an :class:`ErrorStructure` from its JSON document.

    ::

        {"vars": ["x", "y"],
         "sigma": {"kind": "diag", "values": [0.01, 0.04]},
         "law": {"kind": "uniform", "bounds": [[0, 1], [0, 1]]}}

    ``sigma.kind`` is ``diag`` (``values``), ``full`` (``matrix``) or
    ``exprs`` (``entries``: row ``i`` holds σ_ij for j ≥ i, or a full row of
    which the upper part is used).  ``law.kind`` is ``uniform`` (``bounds``),
    ``gauss`` (``mean``, ``sd``) or ``grid`` (``interval``, dimension 1).
    """
    if not isinstance(doc, dict):
        raise StructureError("structure config must be a JSON object")
    try:
        names = validate_names(doc["vars"])
        sig = doc["sigma"]
        kind = sig["kind"]
    except (KeyError, TypeError) as exc:
        raise StructureError(f"structure config is missing {exc}") from None
    except PreconditionError as exc:
        raise StructureError(str(exc)) from None
    n = len(names)
    if kind == "diag":
        sigma: SigmaField = DiagSigma(_floats(sig.get("values"), "sigma.values"))
    elif kind == "full":
        sigma = FullSigma(_floats(sig.get("matrix"), "sigma.matrix"))
    elif kind == "exprs":
        rows = sig.get("entries")
        if not isinstance(rows, list) or len(rows) != n:
            raise StructureError(f"sigma.entries must have {n} rows")
        entries, texts = [], []
        for i, row in enumerate(rows):
            if not isinstance(row, list) or len(row) not in (n, n - i):
                raise StructureError(f"sigma.entries row {i} must have {n} or {n - i} items")
            upper = row[i:] if len(row) == n else row
            texts.append(tuple(str(t) for t in upper))
            entries.append(tuple(parse(str(t), names) for t in upper))
        sigma = ExprSigma(tuple(entries), tuple(texts))
    else:
        raise StructureError(f"unknown sigma kind {kind!r}")
    law_doc = doc.get("law")
    law: BaseLaw | None = None
    if law_doc is not None:
        lk = law_doc.get("kind") if isinstance(law_doc, dict) else None
        if lk == "uniform":
            law = UniformBox(_floats(law_doc.get("bounds"), "law.bounds").reshape(-1, 2))
        elif lk == "gauss":
            law = Gaussians(_floats(law_doc.get("mean"), "law.mean"), _floats(law_doc.get("sd"), "law.sd"))
        elif lk == "grid":
            a, b = _floats(law_doc.get("interval"), "law.interval")
            law = Grid1D(float(a), float(b))
        else:
            raise StructureError(f"unknown law kind {lk!r}")
    return ErrorStructure(names, sigma, law)


def structure_to_config(s: ErrorStructure) -> dict[str, Any]:
    doc: dict[str, Any] = {"vars": list(s.names)}
    if isinstance(s.sigma, DiagSigma):
        doc["sigma"] = {"kind": "diag", "values": s.sigma.values.tolist()}
    elif isinstance(s.sigma, FullSigma):
        doc["sigma"] = {"kind": "full", "matrix": s.sigma.matrix_.tolist()}
    else:
        doc["sigma"] = {"kind": "exprs", "entries": [list(r) for r in s.sigma.texts]}
    law = s.law
    if isinstance(law, UniformBox):
        doc["law"] = {"kind": "uniform", "bounds": law.bounds.tolist()}
    elif isinstance(law, Gaussians):
        doc["law"] = {"kind": "gauss", "mean": law.mean.tolist(), "sd": law.sd.tolist()}
    elif isinstance(law, Grid1D):
        doc["law"] = {"kind": "grid", "interval": [law.a, law.b]}
    return doc


def diag_structure(names: Sequence[str], variances: Sequence[float], law: BaseLaw | None = None) -> ErrorStructure:
    return ErrorStructure(tuple(names), DiagSigma(_floats(list(variances), "variances")), law)


def check_expr_dims(e: Expr, n: int) -> None:
    if max_index(e) >= n:
        raise PreconditionError(f"expression uses variable index {max_index(e)} beyond dimension {n}")
