"""Forward propagation of variance (Γ) and bias (L) through expressions.

A :class:`Quantity` is an erroneous quantity expressed in the coordinates of
a :class:`~errorcalc.structure.Frame`: its value, its gradient with respect
to those coordinates, and its bias.  Given a frame with covariance ``G`` and
coordinate biases ``b``, an expression ``F`` propagates as

    value    F(p)
    gradient ∇F(p)
    bias     ∇F(p)·b + ½ Σ_kl ∂²F/∂v_k∂v_l (p) G_kl

and the covariance of errors between two quantities is ``∇F G ∇Gᵀ``.  With a
base frame (``b = 0``) the bias is exactly ``L F``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import FrameMismatchError, PreconditionError
from .expression import Binary, Const, Expr, eval2, max_index, substitute
from .structure import ErrorStructure, Frame, check_psd, sigma_at


@dataclass(frozen=True, eq=False)
class Quantity:
    value: float
    gradient: np.ndarray
    bias: float
    nondifferentiable: bool = False
    frame: Frame | None = field(default=None, repr=False)

    def _check(self, other: "Quantity") -> None:
        if not _same_frame(self.frame, other.frame):
            raise FrameMismatchError("quantities live on different frames")

    # Linear combinations stay in the domain; L and ∇ are linear.
    def __add__(self, other: "Quantity") -> "Quantity":
        self._check(other)
        return Quantity(
            self.value + other.value,
            self.gradient + other.gradient,
            self.bias + other.bias,
            self.nondifferentiable or other.nondifferentiable,
            self.frame,
        )

    def __sub__(self, other: "Quantity") -> "Quantity":
        return self + (-1.0) * other

    def __mul__(self, scalar: float) -> "Quantity":
        scalar = float(scalar)
        return Quantity(
            scalar * self.value, scalar * self.gradient, scalar * self.bias, self.nondifferentiable, self.frame
        )

    __rmul__ = __mul__

    def __neg__(self) -> "Quantity":
        return (-1.0) * self


def _same_frame(a: Frame | None, b: Frame | None) -> bool:
    if a is b:
        return True
    if a is None or b is None:
        return False
    return (
        np.array_equal(a.point, b.point)
        and np.array_equal(a.gamma, b.gamma)
        and np.array_equal(a.bias, b.bias)
    )


def lift(f: Frame, index: int) -> Quantity:
    """The ``index``-th frame coordinate as a quantity."""
    g = np.zeros(f.dim)
    g[index] = 1.0
    return Quantity(float(f.point[index]), g, float(f.bias[index]), f.nondifferentiable, f)


def propagate(e: Expr, f: Frame) -> Quantity:
    """Push the frame's errors through ``e``."""
    if max_index(e) >= f.dim:
        raise PreconditionError(
            f"expression uses variable index {max_index(e)} but the frame has dimension {f.dim}"
        )
    jet = eval2(e, f.point)
    bias = float(jet.gradient @ f.bias) + 0.5 * float(np.sum(jet.hessian * f.gamma))
    return Quantity(jet.value, jet.gradient, bias, jet.nondifferentiable or f.nondifferentiable, f)


def gamma(x: Quantity, y: Quantity, f: Frame) -> float:
    """Covariance of the errors on ``x`` and ``y``; symmetric in its arguments."""
    if not (_same_frame(x.frame, f) and _same_frame(y.frame, f)):
        raise FrameMismatchError("gamma needs both quantities on the given frame")
    G = f.gamma
    # averaging both orders makes gamma(x, y) == gamma(y, x) bit for bit
    return 0.5 * (float(x.gradient @ G @ y.gradient) + float(y.gradient @ G @ x.gradient))


def variance(x: Quantity) -> float:
    return gamma(x, x, x.frame)


def square(e: Expr) -> Expr:
    return Binary("pow", e, Const(2.0))


def carre_terms(e: Expr, f: Frame) -> tuple[float, float, float]:
    """``(L(F²), 2F·LF, Γ[F])`` at the frame point."""
    q = propagate(e, f)
    q2 = propagate(square(e), f)
    return q2.bias, 2.0 * q.value * q.bias, gamma(q, q, f)


def verify_carre_identity(e: Expr, f: Frame) -> float:
    """Residual of Γ[F] = L(F²) − 2F·LF, computed through two independent paths."""
    l_sq, two_f_lf, g = carre_terms(e, f)
    return l_sq - two_f_lf - g


def pushforward(u: Sequence[Expr], f: Frame) -> Frame:
    """Image of the frame under the mapping ``u`` (one expression per output).

    The image covariance is ``J G Jᵀ`` and the image bias the propagated bias
    of each component, so a later stage sees exactly the transported
    operator.  The covariance is symmetrized and PSD-clipped; ``clip`` on the
    result records how much was removed.
    """
    if not u:
        raise PreconditionError("mapping needs at least one component")
    qs = [propagate(uk, f) for uk in u]
    J = np.array([q.gradient for q in qs])
    G = J @ f.gamma @ J.T
    G, clip = check_psd(0.5 * (G + G.T), "pushed-forward gamma")
    return Frame(
        np.array([q.value for q in qs]),
        G,
        np.array([q.bias for q in qs]),
        clip=max(clip, f.clip),
        nondifferentiable=any(q.nondifferentiable for q in qs),
    )


def compose(v: Sequence[Expr], u: Sequence[Expr]) -> list[Expr]:
    """Expressions of ``v ∘ u``."""
    return [substitute(vk, u) for vk in v]


def propagate_naive(stages: Sequence[Sequence[Expr]], s: ErrorStructure, point) -> np.ndarray:
    """Per-coordinate errors by σ_U = Σ |∂F/∂V_i| σ_i, stage after stage.

    Deliberately incoherent: covariances are ignored and the result depends
    on how a mapping is split into stages.
    """
    x = np.asarray(point, dtype=float)
    sd = np.sqrt(np.diag(sigma_at(s, x)))
    for stage in stages:
        if not stage:
            raise PreconditionError("empty mapping stage")
        jets = [eval2(e, x) for e in stage]
        sd = np.array([float(np.abs(j.gradient) @ sd) for j in jets])
        x = np.array([j.value for j in jets])
    return sd
