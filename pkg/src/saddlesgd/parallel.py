"""Block-rotating parallel engine, serial replay of its update log, and the
locally-trained-then-averaged SGD baseline.

Workers are forked processes sharing the parameter vectors through
anonymous shared memory.  Within one phase each worker writes only its own
dual block and the primal block it currently holds, so no locking is
needed; a barrier separates phases, and the "exchange" of primal blocks is
an ownership hand-off at that barrier (the bytes never move).  Every run is
deterministic given (config, seed): block visit order is a seeded
permutation, re-drawn per (epoch, worker, phase).
"""

from __future__ import annotations

import multiprocessing
import struct
import time
from dataclasses import dataclass

import numpy as np

from . import models, serial
from .data import SparseDataset
from .partition import PartitionPlan, make_partition, sigma
from .serial import ModelState, TrainConfig

_CTX = multiprocessing.get_context("fork")

LOG_DTYPE = np.dtype(
    [("t", "<u4"), ("r", "<u2"), ("q", "<u2"), ("i", "<u8"), ("j", "<u8"), ("eta", "<f8")]
)

_LOG_MAGIC = b"SDUPLOG1"
_LOG_HEADER = struct.Struct("<8sQ")

_BARRIER_TIMEOUT = 600.0


class WorkerFailedError(RuntimeError):
    pass


class LogOverflowError(RuntimeError):
    pass


class CorruptLogError(ValueError):
    pass


class InsufficientSamplesError(ValueError):
    pass


@dataclass
class EpochTimings:
    """Per-epoch wall times plus per-worker compute and exchange-wait sums."""

    wall: np.ndarray  # (epochs,)
    compute: np.ndarray  # (epochs, p) summed per-phase compute time
    exchange: np.ndarray  # (epochs, p) summed barrier/hand-off wait time

    def mean_wall(self) -> float:
        return float(self.wall.mean())


@dataclass
class ParallelResult:
    state: ModelState
    trace: list
    log: np.ndarray | None
    timings: EpochTimings


def _shared_vector(n: int) -> np.ndarray:
    raw = _CTX.RawArray("d", n)
    return np.frombuffer(raw, dtype=np.float64)


def _worker_loop(
    q, plan, config, ctx, w, a, gw_acc, ga_acc,
    phase_barrier, epoch_end, epoch_start,
    compute_time, wait_time, log_queue, max_log_records,
):
    p = plan.p
    my_blocks = plan.blocks[q - 1]
    log_chunks = [] if log_queue is not None else None
    logged = 0
    try:
        for t in range(1, config.epochs + 1):
            eta = serial.epoch_eta(config.schedule, t)
            for r in range(1, p + 1):
                s = sigma(r, q, p) - 1
                bi, bj, bx = my_blocks[s]
                if config.shuffle and len(bi) > 1:
                    perm = serial.block_permutation(len(bi), config.seed, t, q, r)
                    bi, bj, bx = bi[perm], bj[perm], bx[perm]
                ii, jj, xx = bi.tolist(), bj.tolist(), bx.tolist()
                t0 = time.perf_counter()
                serial.apply_updates(w, a, ii, jj, xx, eta, ctx, gw_acc=gw_acc, ga_acc=ga_acc)
                t1 = time.perf_counter()
                compute_time[q - 1] += t1 - t0
                if log_chunks is not None:
                    logged += len(ii)
                    if max_log_records is not None and logged > max_log_records:
                        raise LogOverflowError(
                            f"update log exceeded {max_log_records} records"
                        )
                    log_chunks.append((t, r, np.asarray(ii), np.asarray(jj), eta))
                phase_barrier.wait(timeout=_BARRIER_TIMEOUT)
                wait_time[q - 1] += time.perf_counter() - t1
            epoch_end.wait(timeout=_BARRIER_TIMEOUT)
            epoch_start.wait(timeout=_BARRIER_TIMEOUT)
        if log_queue is not None:
            log_queue.put((q, log_chunks))
    except Exception as exc:  # noqa: BLE001 - forwarded to the coordinator
        if log_queue is not None:
            log_queue.put((q, exc))
        phase_barrier.abort()
        epoch_end.abort()
        epoch_start.abort()
        raise


def run_parallel(
    dataset: SparseDataset,
    config: TrainConfig,
    plan: PartitionPlan | None = None,
    test: SparseDataset | None = None,
    max_log_records: int | None = None,
) -> ParallelResult:
    """Run the block-rotating saddle-point solver with config.p workers."""
    if plan is None:
        plan = make_partition(dataset, config.p, config.strategy)
    if plan.p != config.p:
        raise ValueError("partition plan and config disagree on worker count")
    p = plan.p
    params = serial._params_from_config(dataset, config)
    ctx = serial.kernel_context(params, config.schedule)

    w = _shared_vector(dataset.d)
    a = _shared_vector(dataset.m)
    a_lo, a_hi = params.loss.alpha_box
    a[:] = min(max(0.0, a_lo), a_hi)
    gw_acc = ga_acc = None
    if config.schedule.kind == serial.ADAGRAD:
        gw_acc = _shared_vector(dataset.d)
        ga_acc = _shared_vector(dataset.m)

    compute_time = _shared_vector(p)
    wait_time = _shared_vector(p)
    phase_barrier = _CTX.Barrier(p)
    epoch_end = _CTX.Barrier(p + 1)
    epoch_start = _CTX.Barrier(p + 1)
    log_queue = _CTX.SimpleQueue() if config.log_updates else None

    workers = [
        _CTX.Process(
            target=_worker_loop,
            args=(
                q, plan, config, ctx, w, a, gw_acc, ga_acc,
                phase_barrier, epoch_end, epoch_start,
                compute_time, wait_time, log_queue, max_log_records,
            ),
            daemon=True,
        )
        for q in range(1, p + 1)
    ]
    for proc in workers:
        proc.start()

    wall = np.zeros(config.epochs)
    compute = np.zeros((config.epochs, p))
    exchange = np.zeros((config.epochs, p))
    w_sum = np.zeros(dataset.d)
    a_sum = np.zeros(dataset.m)
    trace = []
    try:
        t_mark = time.perf_counter()
        for t in range(1, config.epochs + 1):
            epoch_end.wait(timeout=_BARRIER_TIMEOUT)
            now = time.perf_counter()
            wall[t - 1] = now - t_mark
            compute[t - 1] = compute_time
            exchange[t - 1] = wait_time
            compute_time[:] = 0.0
            wait_time[:] = 0.0
            if config.eval_every:
                w_sum += w
                a_sum += a
                if t % config.eval_every == 0:
                    rec = serial.evaluate_epoch(params, _snapshot(w, a), w_sum, a_sum, t, test=test)
                    rec["wall_time_s"] = wall[t - 1]
                    trace.append(rec)
            t_mark = time.perf_counter()
            epoch_start.wait(timeout=_BARRIER_TIMEOUT)
    except multiprocessing.context.TimeoutError as exc:
        raise WorkerFailedError("worker barrier timed out") from exc
    except Exception as exc:
        if "BrokenBarrier" in type(exc).__name__:
            raise _worker_diagnostic(workers, log_queue) from exc
        raise

    log = None
    if log_queue is not None:
        per_worker = {}
        for _ in range(p):
            q, payload = log_queue.get()
            if isinstance(payload, Exception):
                raise WorkerFailedError(f"worker {q} failed") from payload
            per_worker[q] = payload
        log = _assemble_log(per_worker, config.epochs, p)
    for proc in workers:
        proc.join()
        if proc.exitcode != 0:
            raise WorkerFailedError(f"worker exited with code {proc.exitcode}")

    state = _snapshot(w, a, gw_acc, ga_acc)
    timings = EpochTimings(wall=wall, compute=compute, exchange=exchange)
    return ParallelResult(state=state, trace=trace, log=log, timings=timings)


def _snapshot(w, a, gw_acc=None, ga_acc=None) -> ModelState:
    return ModelState(
        w=np.array(w),
        alpha=np.array(a),
        gw_acc=None if gw_acc is None else np.array(gw_acc),
        ga_acc=None if ga_acc is None else np.array(ga_acc),
    )


def _worker_diagnostic(workers, log_queue) -> WorkerFailedError:
    if log_queue is not None and not log_queue.empty():
        q, payload = log_queue.get()
        if isinstance(payload, Exception):
            err = WorkerFailedError(f"worker {q} failed: {payload}")
            err.__cause__ = payload
            return err
    return WorkerFailedError("a worker aborted the run")


def _assemble_log(per_worker: dict, epochs: int, p: int) -> np.ndarray:
    """Merge per-worker chunks into total order: epoch, phase, worker rank."""
    keyed = {}
    for q, chunks in per_worker.items():
        for t, r, ii, jj, eta in chunks:
            keyed[(t, r, q)] = (ii, jj, eta)
    rows = []
    for t in range(1, epochs + 1):
        for r in range(1, p + 1):
            for q in range(1, p + 1):
                entry = keyed.get((t, r, q))
                if entry is None:
                    continue
                ii, jj, eta = entry
                chunk = np.empty(len(ii), dtype=LOG_DTYPE)
                chunk["t"] = t
                chunk["r"] = r
                chunk["q"] = q
                chunk["i"] = ii
                chunk["j"] = jj
                chunk["eta"] = eta
                rows.append(chunk)
    if not rows:
        return np.empty(0, dtype=LOG_DTYPE)
    return np.concatenate(rows)


def replay_log(dataset: SparseDataset, config: TrainConfig, log: np.ndarray) -> ModelState:
    """Re-apply a logged run serially, in log order.

    The contract is bit-exact equality with the parallel final state: the
    log totally orders all updates, and updates touching the same
    coordinate keep their relative order, so every coordinate sees the
    identical sequence of floating-point operations.
    """
    params = serial._params_from_config(dataset, config)
    state = serial.init_state(params, config.schedule)
    ctx = serial.kernel_context(params, config.schedule)
    for rec in log:
        i = int(rec["i"])
        j = int(rec["j"])
        if not dataset.has_entry(i, j):
            raise CorruptLogError(f"log references ({i}, {j}) which is not a stored nonzero")
        serial.apply_updates(
            state.w, state.alpha, [i], [j], [dataset.entry(i, j)],
            float(rec["eta"]), ctx, gw_acc=state.gw_acc, ga_acc=state.ga_acc,
        )
    return state


def save_update_log(path, log: np.ndarray) -> None:
    with open(path, "wb") as fh:
        fh.write(_LOG_HEADER.pack(_LOG_MAGIC, len(log)))
        fh.write(np.ascontiguousarray(log, dtype=LOG_DTYPE).tobytes())


def load_update_log(path) -> np.ndarray:
    with open(path, "rb") as fh:
        raw = fh.read(_LOG_HEADER.size)
        if len(raw) < _LOG_HEADER.size:
            raise CorruptLogError("truncated log header")
        magic, count = _LOG_HEADER.unpack(raw)
        if magic != _LOG_MAGIC:
            raise CorruptLogError("bad log magic")
        body = fh.read()
    if len(body) != count * LOG_DTYPE.itemsize:
        raise CorruptLogError("log payload size disagrees with header")
    return np.frombuffer(body, dtype=LOG_DTYPE)


def run_psgd(
    dataset: SparseDataset,
    config: TrainConfig,
    plan: PartitionPlan | None = None,
) -> tuple[np.ndarray, list]:
    """Shard-local SGD runs combined by uniform parameter averaging.

    Row blocks of the plan act as the shards.  Each worker keeps its own
    trajectory for the whole run; the reported (and final) model is the
    average of the worker copies, refreshed after every epoch.  The dual
    vector plays no role.  Workers are simulated in rank order, which is
    equivalent to a parallel execution because the trajectories never
    interact.
    """
    if plan is None:
        plan = make_partition(dataset, config.p, config.strategy)
    params = serial._params_from_config(dataset, config)
    shards = [b.tolist() for b in plan.row_blocks]
    locals_w = [np.zeros(dataset.d) for _ in range(plan.p)]
    accs = (
        [np.zeros(dataset.d) for _ in range(plan.p)]
        if config.schedule.kind == serial.ADAGRAD
        else None
    )
    w = np.zeros(dataset.d)
    trace = []
    for t in range(1, config.epochs + 1):
        eta = serial.epoch_eta(config.schedule, t)
        for q in range(1, plan.p + 1):
            rng = np.random.default_rng([config.seed, t, q])
            serial.sgd_epoch(
                locals_w[q - 1], params, eta, rng,
                acc=None if accs is None else accs[q - 1],
                eta0=config.schedule.eta0, eps=config.schedule.eps,
                rows=shards[q - 1],
            )
        w = np.mean(locals_w, axis=0)
        if config.eval_every and t % config.eval_every == 0:
            trace.append(
                {"epoch": t, "primal": models.primal_objective(params, w)}
            )
    return w, trace


def measure_epoch_times(
    dataset: SparseDataset,
    config: TrainConfig,
    plan: PartitionPlan | None = None,
    warmup: int = 1,
) -> EpochTimings:
    """Wall-time an instrumented run, discarding warmup epochs."""
    if warmup >= config.epochs:
        raise InsufficientSamplesError(
            f"warmup={warmup} leaves no measured epochs out of {config.epochs}"
        )
    result = run_parallel(dataset, config, plan=plan)
    tm = result.timings
    return EpochTimings(
        wall=tm.wall[warmup:],
        compute=tm.compute[warmup:],
        exchange=tm.exchange[warmup:],
    )
