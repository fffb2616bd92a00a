"""Single-threaded solvers and the shared coordinate-update kernel.

The kernel in ``apply_updates`` is the one arithmetic authority for the
paired coordinate update

    w_j <- w_j - eta * (lam * phi'(w_j) / col_nnz_j - a_i * x_ij / m)
    a_i <- a_i + eta * (lstar'(-a_i) / (m * row_nnz_i) - w_j * x_ij / m)

with both reads taken from the pre-update state and both results projected
onto their clipping boxes.  The serial engine, the parallel workers, and
the replay path all route through it, which is what makes replay equality
hold at the bit level.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field, replace

import numpy as np

from . import models
from .data import SparseDataset
from .models import IndexNotInSupportError, SaddleParams

SQRT_T = "sqrt_t"
ADAGRAD = "adagrad"
BOUND_SQRT = "bound_sqrt"  # eta_t = sqrt(diam / (2 * grad_const * t))

SCHEDULE_KINDS = (SQRT_T, ADAGRAD, BOUND_SQRT)


@dataclass(frozen=True)
class StepSchedule:
    kind: str = SQRT_T
    eta0: float = 1.0
    eps: float = 1e-8  # adagrad floor inside the square root
    diam: float = 1.0  # squared-diameter constant of the bound-derived schedule
    grad_const: float = 1.0

    def __post_init__(self):
        if self.kind not in SCHEDULE_KINDS:
            raise ValueError(f"unknown schedule {self.kind!r}")
        if self.eta0 <= 0 or self.diam <= 0 or self.grad_const <= 0:
            raise ValueError("schedule constants must be positive")


def step_size(schedule: StepSchedule, t: int, accumulated: float = 0.0) -> float:
    """Step size at epoch t (per-coordinate accumulator for adagrad).

    With a zero accumulator the adagrad step is eta0/sqrt(eps), i.e. very
    large; projection onto the clipping boxes keeps the iterate feasible.
    """
    if t < 1:
        raise ValueError("t starts at 1")
    if schedule.kind == SQRT_T:
        return schedule.eta0 / math.sqrt(t)
    if schedule.kind == BOUND_SQRT:
        return math.sqrt(schedule.diam / (2.0 * schedule.grad_const * t))
    return schedule.eta0 / math.sqrt(schedule.eps + accumulated)


def epoch_eta(schedule: StepSchedule, t: int) -> float:
    """The scalar the kernel receives for epoch t.

    For adagrad this is the numerator eta0; the per-coordinate denominator
    is applied inside the kernel.
    """
    if schedule.kind == ADAGRAD:
        return schedule.eta0
    return step_size(schedule, t)


@dataclass(frozen=True)
class TrainConfig:
    lam: float
    loss: str = models.HINGE
    reg: str = models.L2
    schedule: StepSchedule = field(default_factory=StepSchedule)
    epochs: int = 10
    seed: int = 0
    p: int = 1
    b_alpha: float = 10.0
    w_bound: float | None = None
    eval_every: int = 0  # 0 disables gap/metric evaluation
    shuffle: bool = True  # permute each block's update order once per epoch
    log_updates: bool = False
    strategy: str = "contiguous"

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("lam must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be nonnegative")
        if self.p < 1:
            raise ValueError("p must be at least 1")


@dataclass
class ModelState:
    w: np.ndarray
    alpha: np.ndarray
    gw_acc: np.ndarray | None = None  # adagrad squared-gradient accumulators
    ga_acc: np.ndarray | None = None

    def copy(self) -> "ModelState":
        return ModelState(
            w=self.w.copy(),
            alpha=self.alpha.copy(),
            gw_acc=None if self.gw_acc is None else self.gw_acc.copy(),
            ga_acc=None if self.ga_acc is None else self.ga_acc.copy(),
        )


def init_state(params: SaddleParams, schedule: StepSchedule) -> ModelState:
    ds = params.dataset
    alo, ahi = params.loss.alpha_box
    state = ModelState(
        w=np.zeros(ds.d),
        alpha=np.full(ds.m, min(max(0.0, alo), ahi)),
    )
    if schedule.kind == ADAGRAD:
        state.gw_acc = np.zeros(ds.d)
        state.ga_acc = np.zeros(ds.m)
    return state


class _KernelContext:
    """Precomputed per-dataset scalars and lookup lists for the hot loop."""

    __slots__ = (
        "lam", "m", "nnz_row", "nnz_col", "loss_code", "reg_code",
        "targets", "w_lo", "w_hi", "a_lo", "a_hi", "eps",
    )

    def __init__(self, params: SaddleParams, eps: float = 1e-8):
        ds = params.dataset
        self.lam = params.lam
        self.m = ds.m
        self.nnz_row = ds.nnz_row.tolist()
        self.nnz_col = ds.nnz_col.tolist()
        self.loss_code = params.loss.code
        self.reg_code = params.reg.code
        self.targets = (
            params.loss.targets.tolist() if params.loss.targets is not None else None
        )
        self.w_lo, self.w_hi = params.reg.w_box
        self.a_lo, self.a_hi = params.loss.alpha_box
        self.eps = eps


def kernel_context(params: SaddleParams, schedule: StepSchedule | None = None) -> _KernelContext:
    eps = schedule.eps if schedule is not None else 1e-8
    return _KernelContext(params, eps=eps)


def apply_updates(w, a, ii, jj, xx, eta, ctx, gw_acc=None, ga_acc=None):
    """Run the coordinate update over the given (i, j, x) sequence in order.

    ``w`` and ``a`` are mutated in place.  When accumulator arrays are given
    the step is eta/sqrt(eps + acc) per coordinate, with the accumulator
    advanced after the step is computed.
    """
    lam = ctx.lam
    m = ctx.m
    nr = ctx.nnz_row
    nc = ctx.nnz_col
    loss = ctx.loss_code
    reg = ctx.reg_code
    tg = ctx.targets
    w_lo = ctx.w_lo
    w_hi = ctx.w_hi
    a_lo = ctx.a_lo
    a_hi = ctx.a_hi
    log = math.log
    sqrt = math.sqrt
    eps = ctx.eps

    if gw_acc is None:
        for i, j, x in zip(ii, jj, xx):
            wj = w[j]
            ai = a[i]
            if reg == 0:
                rg = wj
            else:
                rg = 0.0 if wj == 0.0 else (1.0 if wj > 0.0 else -1.0)
            gw = lam * rg / nc[j] - ai * x / m
            if loss == 0:
                cg = 1.0
            elif loss == 1:
                cg = log((1.0 - ai) / ai)
            else:
                cg = tg[i] - ai
            ga = cg / (m * nr[i]) - wj * x / m
            wj -= eta * gw
            ai += eta * ga
            if wj < w_lo:
                wj = w_lo
            elif wj > w_hi:
                wj = w_hi
            if ai < a_lo:
                ai = a_lo
            elif ai > a_hi:
                ai = a_hi
            w[j] = wj
            a[i] = ai
    else:
        for i, j, x in zip(ii, jj, xx):
            wj = w[j]
            ai = a[i]
            if reg == 0:
                rg = wj
            else:
                rg = 0.0 if wj == 0.0 else (1.0 if wj > 0.0 else -1.0)
            gw = lam * rg / nc[j] - ai * x / m
            if loss == 0:
                cg = 1.0
            elif loss == 1:
                cg = log((1.0 - ai) / ai)
            else:
                cg = tg[i] - ai
            ga = cg / (m * nr[i]) - wj * x / m
            eta_w = eta / sqrt(eps + gw_acc[j])
            eta_a = eta / sqrt(eps + ga_acc[i])
            gw_acc[j] += gw * gw
            ga_acc[i] += ga * ga
            wj -= eta_w * gw
            ai += eta_a * ga
            if wj < w_lo:
                wj = w_lo
            elif wj > w_hi:
                wj = w_hi
            if ai < a_lo:
                ai = a_lo
            elif ai > a_hi:
                ai = a_hi
            w[j] = wj
            a[i] = ai


def saddle_update(state: ModelState, params: SaddleParams, i: int, j: int, eta: float) -> None:
    """One paired coordinate update on (w_j, a_i), in place."""
    ds = params.dataset
    if not ds.has_entry(i, j):
        raise IndexNotInSupportError((i, j))
    x = ds.entry(i, j)
    apply_updates(
        state.w,
        state.alpha,
        [i],
        [j],
        [x],
        eta,
        _KernelContext(params),
        gw_acc=state.gw_acc,
        ga_acc=state.ga_acc,
    )


def block_permutation(n: int, seed: int, t: int, q: int, r: int) -> np.ndarray:
    """Deterministic per-(epoch, worker, phase) shuffle of a block's entries."""
    rng = np.random.default_rng([seed, t, q, r])
    return rng.permutation(n)


def epoch_order(plan, config: TrainConfig, t: int):
    """Yield (i, j, x) list triples in the exact order the engine visits them.

    Blocks are visited phase by phase; within a phase, workers in rank
    order; within a block, a seeded permutation (or stored order when
    shuffling is off).  A parallel run interleaves the per-phase blocks
    across workers, but per-coordinate order is identical.
    """
    from .partition import sigma  # local import to avoid a cycle

    p = plan.p
    for r in range(1, p + 1):
        for q in range(1, p + 1):
            s = sigma(r, q, p) - 1
            ii, jj, xx = plan.blocks[q - 1][s]
            if config.shuffle and len(ii) > 1:
                perm = block_permutation(len(ii), config.seed, t, q, r)
                ii, jj, xx = ii[perm], jj[perm], xx[perm]
            yield ii.tolist(), jj.tolist(), xx.tolist()


def serial_saddle_epoch(state: ModelState, params: SaddleParams, order, eta: float, ctx=None) -> None:
    """Apply the update kernel over an explicit order (an iterable of
    (i-list, j-list, x-list) chunks or a single such triple)."""
    if ctx is None:
        ctx = _KernelContext(params)
    if isinstance(order, tuple):
        order = [order]
    for ii, jj, xx in order:
        apply_updates(
            state.w, state.alpha, ii, jj, xx, eta, ctx,
            gw_acc=state.gw_acc, ga_acc=state.ga_acc,
        )


def train_serial(dataset: SparseDataset, config: TrainConfig, plan=None):
    """Run the saddle-point solver serially for config.epochs epochs.

    Returns (state, trace) where trace holds one record per evaluated epoch
    with the duality gap of the running-average iterate.
    """
    from .partition import make_partition

    params = _params_from_config(dataset, config)
    if plan is None:
        plan = make_partition(dataset, config.p, config.strategy)
    state = init_state(params, config.schedule)
    ctx = kernel_context(params, config.schedule)
    w_sum = np.zeros_like(state.w)
    a_sum = np.zeros_like(state.alpha)
    trace = []
    for t in range(1, config.epochs + 1):
        eta = epoch_eta(config.schedule, t)
        for chunk in epoch_order(plan, config, t):
            serial_saddle_epoch(state, params, [chunk], eta, ctx=ctx)
        if config.eval_every:
            w_sum += state.w
            a_sum += state.alpha
            if t % config.eval_every == 0:
                trace.append(evaluate_epoch(params, state, w_sum, a_sum, t))
    return state, trace


def evaluate_epoch(params, state, w_sum, a_sum, t, test=None):
    """Objective record for epoch t, gap taken at the averaged iterate."""
    w_avg = w_sum / t
    a_avg = a_sum / t
    primal = models.primal_objective(params, state.w)
    dual = models.dual_objective(params, state.alpha)
    rec = {
        "epoch": t,
        "primal": primal,
        "dual": dual,
        "gap": primal - dual,
        "avg_gap": models.duality_gap(params, w_avg, a_avg),
    }
    if test is not None:
        from .evaluate import SingleClassError, eval_auprc, eval_test_error

        rec["test_error"] = eval_test_error(state.w, test)
        try:
            rec["auprc"] = eval_auprc(state.w, test)
        except SingleClassError:
            pass
    return rec


def _params_from_config(dataset: SparseDataset, config: TrainConfig) -> SaddleParams:
    return models.make_params(
        dataset,
        config.lam,
        loss_kind=config.loss,
        reg_kind=config.reg,
        b_alpha=config.b_alpha,
        w_bound=config.w_bound,
    )


def sgd_epoch(w, params: SaddleParams, eta, rng, lam=None, acc=None, eta0=None,
              eps=1e-8, rows=None):
    """One pass of plain stochastic gradient descent on the primal only.

    Draws len(rows) examples (all m when ``rows`` is None) uniformly with
    replacement and applies the full (regularizer + loss) gradient
    estimate, projecting onto the clipping box after every step.  ``lam``
    may override params.lam (e.g. 0 for an unregularized baseline);
    ``acc`` enables per-coordinate adagrad steps with numerator ``eta0``.
    """
    ds = params.dataset
    if lam is None:
        lam = params.lam
    w_lo, w_hi = params.reg.w_box
    n = ds.m if rows is None else len(rows)
    for k in rng.integers(0, n, size=n):
        i = int(k) if rows is None else int(rows[int(k)])
        cols, vals = ds.row(i)
        u = float(vals @ w[cols])
        g = lam * params.reg.grads(w)
        lg = params.loss.grad(u, i)
        if lg != 0.0:
            g[cols] += lg * vals
        if acc is None:
            w -= eta * g
        else:
            step = eta0 / np.sqrt(eps + acc)
            acc += g * g
            w -= step * g
        np.clip(w, w_lo, w_hi, out=w)
    return w


def train_sgd(dataset: SparseDataset, config: TrainConfig, lam=None):
    """SGD baseline over config.epochs passes; returns the primal vector.

    Seeded per (epoch, worker=1) so that the sharded-and-averaged variant
    degenerates to this exact run when there is a single shard.
    """
    params = _params_from_config(dataset, config)
    w = np.zeros(dataset.d)
    acc = np.zeros(dataset.d) if config.schedule.kind == ADAGRAD else None
    for t in range(1, config.epochs + 1):
        eta = epoch_eta(config.schedule, t)
        rng = np.random.default_rng([config.seed, t, 1])
        sgd_epoch(
            w, params, eta, rng, lam=lam,
            acc=acc, eta0=config.schedule.eta0, eps=config.schedule.eps,
        )
    return w


# --- checkpoint format -----------------------------------------------------
#
# magic(8) | version u32 | loss u8 | reg u8 | pad u16 | m u64 | d u64 |
# lam f64 | w (d * f64) | alpha (m * f64), all little-endian.

_CKPT_MAGIC = b"SDLMDL01"
_CKPT_HEADER = struct.Struct("<8sIBBHQQd")
_LOSS_IDS = {models.HINGE: 0, models.LOGISTIC: 1, models.SQUARED: 2}
_REG_IDS = {models.L2: 0, models.L1: 1}


class CheckpointError(Exception):
    pass


def save_checkpoint(path, state: ModelState, config: TrainConfig, m: int, d: int) -> None:
    header = _CKPT_HEADER.pack(
        _CKPT_MAGIC, 1, _LOSS_IDS[config.loss], _REG_IDS[config.reg], 0, m, d, config.lam
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(state.w, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(state.alpha, dtype="<f8").tobytes())


def load_checkpoint(path):
    """Returns (w, alpha, meta) with meta = dict(loss, reg, lam, m, d)."""
    with open(path, "rb") as fh:
        raw = fh.read(_CKPT_HEADER.size)
        if len(raw) < _CKPT_HEADER.size:
            raise CheckpointError("truncated header")
        magic, version, loss_id, reg_id, _, m, d, lam = _CKPT_HEADER.unpack(raw)
        if magic != _CKPT_MAGIC:
            raise CheckpointError("bad magic")
        if version != 1:
            raise CheckpointError(f"unsupported version {version}")
        body = fh.read()
    need = 8 * (m + d)
    if len(body) != need:
        raise CheckpointError(f"expected {need} payload bytes, found {len(body)}")
    w = np.frombuffer(body[: 8 * d], dtype="<f8").astype(np.float64)
    alpha = np.frombuffer(body[8 * d :], dtype="<f8").astype(np.float64)
    losses = {v: k for k, v in _LOSS_IDS.items()}
    regs = {v: k for k, v in _REG_IDS.items()}
    meta = {"loss": losses[loss_id], "reg": regs[reg_id], "lam": lam, "m": m, "d": d}
    return w, alpha, meta
