"""Objective algebra for regularized risk minimization in saddle form.

The primal objective is

    P(w) = lambda * sum_j phi_j(w_j) + (1/m) * sum_i l(<w, x_i>)

and the equivalent saddle function obtained by dualizing the per-example
losses through their convex conjugates is

    f(w, a) = lambda * sum_j phi_j(w_j)
              - (1/m) * sum_i a_i <w, x_i>
              - (1/m) * sum_i lstar_i(-a_i).

Maximizing f over admissible a recovers P(w); minimizing over w in its box
gives the dual objective D(a), so the duality gap is P(w) - D(a).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import SparseDataset

HINGE = "hinge"
LOGISTIC = "logistic"
SQUARED = "squared"
L2 = "l2"
L1 = "l1"

LOSS_CODES = {HINGE: 0, LOGISTIC: 1, SQUARED: 2}
REG_CODES = {L2: 0, L1: 1}

# open-interval endpoints keeping the entropy conjugate finite
LOGISTIC_ALPHA_EPS = 1e-14

GAP_TOLERANCE = 1e-9


class DomainError(ValueError):
    """A dual variable fell outside the admissible interval for its loss."""


class IndexNotInSupportError(KeyError):
    """(i, j) does not index a stored nonzero of the design matrix."""


@dataclass(frozen=True)
class LossModel:
    """A loss, its conjugate, and the admissible interval for dual variables.

    Hinge and logistic operate in margin form on folded data.  Squared loss
    keeps its targets and is used unfolded.  ``b_alpha`` bounds the dual
    variables of the squared loss, whose conjugate is otherwise unbounded.
    """

    kind: str
    targets: np.ndarray | None = None
    b_alpha: float = 10.0

    def __post_init__(self):
        if self.kind not in LOSS_CODES:
            raise ValueError(f"unknown loss {self.kind!r}")
        if self.kind == SQUARED and self.b_alpha <= 0:
            raise ValueError("b_alpha must be positive")

    @property
    def code(self) -> int:
        return LOSS_CODES[self.kind]

    @property
    def alpha_box(self) -> tuple[float, float]:
        if self.kind == HINGE:
            return (0.0, 1.0)
        if self.kind == LOGISTIC:
            return (LOGISTIC_ALPHA_EPS, 1.0 - LOGISTIC_ALPHA_EPS)
        return (-self.b_alpha, self.b_alpha)

    def _target(self, i) -> float:
        if self.targets is None:
            raise ValueError("squared loss requires target values")
        return float(self.targets[i])

    def value(self, u: float, i: int = 0) -> float:
        if self.kind == HINGE:
            return max(0.0, 1.0 - u)
        if self.kind == LOGISTIC:
            # overflow-safe log(1 + exp(-u))
            return max(0.0, -u) + math.log1p(math.exp(-abs(u)))
        r = self._target(i) - u
        return 0.5 * r * r

    def values(self, u: np.ndarray) -> np.ndarray:
        """Vectorized loss over all examples."""
        if self.kind == HINGE:
            return np.maximum(0.0, 1.0 - u)
        if self.kind == LOGISTIC:
            return np.maximum(0.0, -u) + np.log1p(np.exp(-np.abs(u)))
        r = self.targets - u
        return 0.5 * r * r

    def grad(self, u: float, i: int = 0) -> float:
        """Derivative of the loss in u (subgradient at hinge kink: 0 at u=1)."""
        if self.kind == HINGE:
            return -1.0 if u < 1.0 else 0.0
        if self.kind == LOGISTIC:
            # -sigmoid(-u), computed stably
            if u >= 0:
                e = math.exp(-u)
                return -e / (1.0 + e)
            return -1.0 / (1.0 + math.exp(u))
        return u - self._target(i)

    def grads(self, u: np.ndarray) -> np.ndarray:
        if self.kind == HINGE:
            return np.where(u < 1.0, -1.0, 0.0)
        if self.kind == LOGISTIC:
            out = np.empty_like(u)
            pos = u >= 0
            e = np.exp(-u[pos])
            out[pos] = -e / (1.0 + e)
            out[~pos] = -1.0 / (1.0 + np.exp(u[~pos]))
            return out
        return u - self.targets

    def check_alpha(self, alpha: float) -> None:
        lo, hi = self.alpha_box
        if not (lo <= alpha <= hi):
            raise DomainError(
                f"alpha={alpha} outside admissible interval [{lo}, {hi}] for {self.kind}"
            )

    def conjugate(self, alpha: float, i: int = 0) -> float:
        """lstar(-alpha) in closed form."""
        self.check_alpha(alpha)
        if self.kind == HINGE:
            return -alpha
        if self.kind == LOGISTIC:
            return _xlogx(alpha) + _xlogx(1.0 - alpha)
        return -alpha * self._target(i) + 0.5 * alpha * alpha

    def conjugates(self, alpha: np.ndarray) -> np.ndarray:
        if self.kind == HINGE:
            return -alpha
        if self.kind == LOGISTIC:
            return _xlogx_vec(alpha) + _xlogx_vec(1.0 - alpha)
        return -alpha * self.targets + 0.5 * alpha * alpha

    def conjugate_grad(self, alpha: float, i: int = 0) -> float:
        """Derivative of lstar evaluated at -alpha.

        At interval endpoints for hinge/logistic this is the one-sided value
        of the same closed form.
        """
        self.check_alpha(alpha)
        if self.kind == HINGE:
            return 1.0
        if self.kind == LOGISTIC:
            return math.log((1.0 - alpha) / alpha)
        return self._target(i) - alpha


def _xlogx(x: float) -> float:
    return 0.0 if x <= 0.0 else x * math.log(x)


def _xlogx_vec(x: np.ndarray) -> np.ndarray:
    out = np.zeros_like(x)
    pos = x > 0
    out[pos] = x[pos] * np.log(x[pos])
    return out


def default_w_bound(loss_kind: str, reg_kind: str, lam: float) -> float:
    """Clipping half-width for the primal variables.

    For the l2-regularized hinge and logistic losses the bound below contains
    every minimizer; for other combinations it is a configurable convention.
    """
    if reg_kind == L2 and loss_kind == HINGE:
        return 1.0 / math.sqrt(lam)
    if reg_kind == L2 and loss_kind == LOGISTIC:
        return math.sqrt(math.log(2.0) / lam)
    return 1.0 / math.sqrt(lam)


@dataclass(frozen=True)
class RegularizerModel:
    kind: str
    w_bound: float

    def __post_init__(self):
        if self.kind not in REG_CODES:
            raise ValueError(f"unknown regularizer {self.kind!r}")
        if self.w_bound <= 0:
            raise ValueError("w_bound must be positive")

    @property
    def code(self) -> int:
        return REG_CODES[self.kind]

    @property
    def w_box(self) -> tuple[float, float]:
        return (-self.w_bound, self.w_bound)

    def value(self, wj: float) -> float:
        return 0.5 * wj * wj if self.kind == L2 else abs(wj)

    def values(self, w: np.ndarray) -> np.ndarray:
        return 0.5 * w * w if self.kind == L2 else np.abs(w)

    def grad(self, wj: float) -> float:
        """Derivative; the subgradient of |.| at exactly zero is taken as 0."""
        if self.kind == L2:
            return wj
        return 0.0 if wj == 0.0 else math.copysign(1.0, wj)

    def grads(self, w: np.ndarray) -> np.ndarray:
        return w if self.kind == L2 else np.sign(w)


@dataclass(frozen=True)
class SaddleParams:
    """Everything the objective and its gradients depend on."""

    lam: float
    dataset: SparseDataset
    loss: LossModel
    reg: RegularizerModel

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("lam must be positive")


def make_params(
    dataset: SparseDataset,
    lam: float,
    loss_kind: str = HINGE,
    reg_kind: str = L2,
    b_alpha: float = 10.0,
    w_bound: float | None = None,
) -> SaddleParams:
    targets = dataset.labels if loss_kind == SQUARED else None
    loss = LossModel(loss_kind, targets=targets, b_alpha=b_alpha)
    if w_bound is None:
        w_bound = default_w_bound(loss_kind, reg_kind, lam)
    return SaddleParams(lam=lam, dataset=dataset, loss=loss, reg=RegularizerModel(reg_kind, w_bound))


def primal_objective(params: SaddleParams, w: np.ndarray) -> float:
    ds = params.dataset
    u = ds.dots(w)
    return float(
        params.lam * params.reg.values(w).sum() + params.loss.values(u).mean()
    )


def saddle_value(params: SaddleParams, w: np.ndarray, alpha: np.ndarray) -> float:
    """f(w, alpha)."""
    ds = params.dataset
    u = ds.dots(w)
    return float(
        params.lam * params.reg.values(w).sum()
        - (alpha * u).sum() / ds.m
        - params.loss.conjugates(alpha).sum() / ds.m
    )


def _dual_w_star(params: SaddleParams, alpha: np.ndarray) -> np.ndarray:
    """Coordinatewise minimizer of f(., alpha) over the clipping box."""
    ds = params.dataset
    s = np.bincount(
        ds.row_cols, weights=ds.row_vals * alpha[ds.row_index], minlength=ds.d
    ) / ds.m
    bound = params.reg.w_bound
    if params.reg.kind == L2:
        return np.clip(s / params.lam, -bound, bound)
    # l1: lam*|w| - s*w over [-W, W] is minimized at the near boundary
    # when |s| exceeds lam, and at 0 otherwise
    return np.where(np.abs(s) > params.lam, bound * np.sign(s), 0.0)


def dual_objective(params: SaddleParams, alpha: np.ndarray) -> float:
    """D(alpha) = min over boxed w of f(w, alpha), in closed form."""
    return saddle_value(params, _dual_w_star(params, alpha), alpha)


def duality_gap(params: SaddleParams, w: np.ndarray, alpha: np.ndarray) -> float:
    gap = primal_objective(params, w) - dual_objective(params, alpha)
    if gap < -GAP_TOLERANCE:
        raise ArithmeticError(f"negative duality gap {gap}: objectives inconsistent")
    return gap


def stochastic_gradient(params: SaddleParams, w, alpha, i: int, j: int):
    """The two nonzero components of the doubly stochastic gradient estimate.

    Scaled by the support size so that a uniform draw over stored nonzeros
    is unbiased for (grad_w f, grad_alpha f).
    """
    ds = params.dataset
    if not ds.has_entry(i, j):
        raise IndexNotInSupportError((i, j))
    x = ds.entry(i, j)
    m = ds.m
    nnz = ds.nnz_total
    gw = nnz * (
        params.lam * params.reg.grad(float(w[j])) / int(ds.nnz_col[j])
        - float(alpha[i]) * x / m
    )
    ga = nnz * (
        params.loss.conjugate_grad(float(alpha[i]), i) / (m * int(ds.nnz_row[i]))
        - float(w[j]) * x / m
    )
    return gw, ga


def saddle_gradient(params: SaddleParams, w, alpha):
    """Exact (grad_w f, grad_alpha f), for unbiasedness checks."""
    ds = params.dataset
    s = np.bincount(
        ds.row_cols, weights=ds.row_vals * alpha[ds.row_index], minlength=ds.d
    )
    gw = params.lam * params.reg.grads(w) - s / ds.m
    # features with empty columns never appear in the decomposed sum
    gw[ds.nnz_col == 0] = 0.0
    u = ds.dots(w)
    cg = np.array(
        [params.loss.conjugate_grad(float(a), i) for i, a in enumerate(alpha)]
    )
    ga = cg / ds.m - u / ds.m
    ga[ds.nnz_row == 0] = 0.0
    return gw, ga


def batch_gradient(params: SaddleParams, w: np.ndarray) -> np.ndarray:
    """Full gradient of the primal objective (subgradients at kinks)."""
    ds = params.dataset
    u = ds.dots(w)
    lg = params.loss.grads(u)
    data_part = np.bincount(
        ds.row_cols, weights=ds.row_vals * lg[ds.row_index], minlength=ds.d
    ) / ds.m
    return params.lam * params.reg.grads(w) + data_part
