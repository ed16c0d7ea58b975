"""Grid searches over coupling designs, with rate-loss tie-breaking."""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

from .de_engine import DELTA_CONV, MAX_ITERS, TOL, SingleTypeSystem, ThresholdResult, bp_threshold
from .ensembles import (
    CoupledEnsembleSpec,
    EnsembleError,
    SmoothingDistribution,
    TwoTypeSpec,
    build_protograph_chain,
    rate_loss_delta,
)
from .multitype import ProtographSystem, TwoTypeSystem

log = logging.getLogger(__name__)

SWEEP_TOL = 1e-4
WORKERS_ENV = "COUPLEDDE_WORKERS"


def worker_count(workers: int | None = None) -> int:
    if workers is not None:
        return max(1, int(workers))
    env = os.environ.get(WORKERS_ENV)
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def parallel_map(fn: Callable, tasks: Sequence, workers: int | None = None) -> list:
    """``map`` over independent tasks; results come back in task order."""
    n = worker_count(workers)
    if n <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(n, len(tasks))) as pool:
        return list(pool.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * n))))


@dataclass(frozen=True)
class SweepEntry:
    params: tuple
    threshold: float | None
    rate_loss: float | None
    status: str = "ok"


@dataclass(frozen=True)
class SweepResult:
    entries: tuple[SweepEntry, ...]
    best: SweepEntry
    reason: str
    coarse_best: SweepEntry | None = None
    final: ThresholdResult | None = None
    meta: dict = field(default_factory=dict)


def select_best(entries: Iterable[SweepEntry], tie_window: float) -> tuple[SweepEntry, str]:
    """Highest threshold; thresholds within ``tie_window`` of it count as equal.

    Equal thresholds are ranked by smaller rate loss, then by parameters.
    """
    ok = [e for e in entries if e.status == "ok" and e.threshold is not None]
    if not ok:
        raise EnsembleError("no successful sweep entries")
    top = max(e.threshold for e in ok)
    tied = [e for e in ok if e.threshold >= top - tie_window]
    if len(tied) == 1:
        return tied[0], "max threshold"

    def rank(e: SweepEntry):
        return (math.inf if e.rate_loss is None else e.rate_loss, e.params)

    best = min(tied, key=rank)
    if best.threshold == top:
        return best, f"max threshold ({len(tied)} within {tie_window:g})"
    return best, f"min rate loss among {len(tied)} thresholds within {tie_window:g} of max"


def _threshold_task(task) -> tuple[float | None, str]:
    kind, args, tol, delta_conv, max_iters = task
    try:
        if kind == "single":
            dv, dc, weights, L = args
            system = SingleTypeSystem(CoupledEnsembleSpec(dv, dc, SmoothingDistribution(weights), L))
        elif kind == "two-type":
            system = TwoTypeSystem(TwoTypeSpec(*args))
        elif kind == "protograph":
            system = ProtographSystem(build_protograph_chain(*args))
        else:
            raise ValueError(f"unknown system kind {kind!r}")
        return bp_threshold(system, tol, delta_conv, max_iters).threshold, "ok"
    except (EnsembleError, ArithmeticError, RuntimeError) as exc:
        return None, f"error: {exc}"


class _Sweep:
    """Shared bookkeeping: evaluate parameter points once, remember every entry."""

    def __init__(self, kind, make_args, rate_loss, tol, delta_conv, max_iters, workers):
        self.kind = kind
        self.make_args = make_args
        self.rate_loss = rate_loss
        self.tol = tol
        self.delta_conv = delta_conv
        self.max_iters = max_iters
        self.workers = workers
        self.entries: dict[tuple, SweepEntry] = {}

    def evaluate(self, points: Iterable[tuple]) -> None:
        todo = [p for p in dict.fromkeys(points) if p not in self.entries]
        tasks = [(self.kind, self.make_args(p), self.tol, self.delta_conv, self.max_iters) for p in todo]
        for p, (thr, status) in zip(todo, parallel_map(_threshold_task, tasks, self.workers)):
            self.entries[p] = SweepEntry(p, thr, self.rate_loss(p), status)
        log.info("%s sweep: %d points evaluated", self.kind, len(todo))

    def best(self, points: Iterable[tuple] | None = None) -> tuple[SweepEntry, str]:
        pool = self.entries.values() if points is None else [self.entries[p] for p in points]
        return select_best(pool, 2 * self.tol)

    def result(self, coarse_best: SweepEntry, final_tol: float | None, meta: dict) -> SweepResult:
        best, reason = self.best()
        final = None
        if final_tol is not None and best.threshold is not None:
            thr, _ = _threshold_task((self.kind, self.make_args(best.params), final_tol, self.delta_conv, self.max_iters))
            final = ThresholdResult(thr, final_tol, 0) if thr is not None else None
        entries = tuple(sorted(self.entries.values(), key=lambda e: e.params))
        return SweepResult(entries, best, reason, coarse_best, final, meta)


def _grid_count(step: float, span: float = 1.0) -> int:
    n = round(span / step)
    if n < 1 or abs(n * step - span) > 1e-9:
        raise EnsembleError(f"grid step {step} must divide {span}")
    return n


def _r(x: float) -> float:
    return round(x, 12)


def optimize_alpha(
    dv: int,
    dc: int | None = None,
    L: int = 100,
    grid_step: float = 0.005,
    tol: float = TOL,
    sweep_tol: float = SWEEP_TOL,
    refine: bool = True,
    delta_conv: float = DELTA_CONV,
    max_iters: int = MAX_ITERS,
    workers: int | None = None,
) -> SweepResult:
    """Best ``nu = [alpha, 1 - alpha]`` over ``alpha in [0, 1/2]`` (reversal covers the rest)."""
    dc = 2 * dv if dc is None else dc
    n = _grid_count(grid_step, 0.5)
    sweep = _Sweep(
        "single",
        lambda p: (dv, dc, (p[0], 1.0 - p[0]), L),
        lambda p: rate_loss_delta(dv, dc, (p[0], 1.0 - p[0])),
        sweep_tol,
        delta_conv,
        max_iters,
        workers,
    )
    coarse = [(_r(k * grid_step),) for k in range(n + 1)]
    sweep.evaluate(coarse)
    coarse_best, _ = sweep.best(coarse)
    if refine:
        fine = grid_step / 10
        centre = coarse_best.params[0]
        sweep.evaluate((_r(centre + j * fine),) for j in range(-10, 11) if 0.0 <= centre + j * fine <= 0.5 + 1e-12)
    meta = {"dv": dv, "dc": dc, "L": L, "grid_step": grid_step, "refined": refine, "sweep_tol": sweep_tol, "tol": tol}
    return sweep.result(coarse_best, tol, meta)


def optimize_nu3(
    dv: int,
    dc: int | None = None,
    L: int = 100,
    grid_step: float = 1 / 38,
    tol: float = TOL,
    sweep_tol: float = SWEEP_TOL,
    refine: bool = True,
    delta_conv: float = DELTA_CONV,
    max_iters: int = MAX_ITERS,
    workers: int | None = None,
) -> SweepResult:
    """Best ``nu = [nu1, nu2, 1 - nu1 - nu2]`` on a simplex grid.

    Only points with ``nu1 <= 1 - nu1 - nu2`` are evaluated; the reversed
    distribution has the same threshold and rate loss.
    """
    dc = 2 * dv if dc is None else dc
    N = _grid_count(grid_step)

    def args(p):
        return (dv, dc, SmoothingDistribution.from_pair(*p).weights, L)

    sweep = _Sweep(
        "single", args, lambda p: rate_loss_delta(dv, dc, SmoothingDistribution.from_pair(*p)), sweep_tol,
        delta_conv, max_iters, workers,
    )  # fmt: skip
    coarse = [(_r(i / N), _r(j / N)) for i in range(N + 1) for j in range(N + 1 - i) if i <= N - i - j]
    sweep.evaluate(coarse)
    coarse_best, _ = sweep.best(coarse)
    if refine:
        c1, c2 = coarse_best.params
        fine = 1.0 / (10 * N)
        pts = []
        for a in range(-5, 6):
            for b in range(-5, 6):
                n1, n2 = c1 + a * fine, c2 + b * fine
                n3 = 1.0 - n1 - n2
                if n1 >= -1e-12 and n2 >= -1e-12 and n3 >= -1e-12 and n1 <= n3 + 1e-12:
                    pts.append((_r(max(n1, 0.0)), _r(max(n2, 0.0))))
        sweep.evaluate(pts)
    meta = {"dv": dv, "dc": dc, "L": L, "grid_step": grid_step, "refined": refine, "sweep_tol": sweep_tol, "tol": tol}
    return sweep.result(coarse_best, tol, meta)


def _two_type_rep(a: int, b: int, n: int) -> tuple[int, int]:
    return min((a, b), (b, a), (n - a, n - b), (n - b, n - a))


def optimize_two_type(
    dv: int,
    L: int = 100,
    grid_step: float = 0.01,
    tol: float = TOL,
    sweep_tol: float = SWEEP_TOL,
    refine: bool = True,
    delta_conv: float = DELTA_CONV,
    max_iters: int = MAX_ITERS,
    workers: int | None = None,
) -> SweepResult:
    """Best ``(alpha_upper, alpha_lower)`` pair for the two-type ensemble.

    Swapping the two sets and reversing both distributions leave the threshold
    unchanged, so one representative per orbit is evaluated.
    """
    n = _grid_count(grid_step)
    sweep = _Sweep("two-type", lambda p: (dv, p[0], p[1], L), lambda p: None, sweep_tol, delta_conv, max_iters, workers)
    reps = sorted({_two_type_rep(a, b, n) for a in range(n + 1) for b in range(n + 1)})
    coarse = [(_r(a / n), _r(b / n)) for a, b in reps]
    sweep.evaluate(coarse)
    coarse_best, _ = sweep.best(coarse)
    if refine:
        c1, c2 = coarse_best.params
        fine = grid_step / 10
        sweep.evaluate(
            (_r(c1 + a * fine), _r(c2 + b * fine))
            for a in range(-5, 6)
            for b in range(-5, 6)
            if 0.0 <= c1 + a * fine <= 1.0 and 0.0 <= c2 + b * fine <= 1.0
        )
    meta = {"dv": dv, "L": L, "grid_step": grid_step, "refined": refine, "sweep_tol": sweep_tol, "tol": tol}
    return sweep.result(coarse_best, tol, meta)


def segment_representatives(dv: int) -> list[tuple[int, int]]:
    """One ``(b1, b2)`` per class under VN relabeling and chain reflection."""
    reps = {min((a, b), (b, a), (dv - a, dv - b), (dv - b, dv - a)) for a in range(dv + 1) for b in range(dv + 1)}
    return sorted(reps)


def protograph_search(
    dv_range: Iterable[int],
    L: int = 100,
    tol: float = SWEEP_TOL,
    final_tol: float | None = TOL,
    delta_conv: float = DELTA_CONV,
    max_iters: int = MAX_ITERS,
    workers: int | None = None,
) -> dict[int, SweepResult]:
    """Exhaustive search over elementary segments ``(dv, b1, b2)`` for each ``dv``."""
    results = {}
    for dv in dv_range:
        if not 1 <= dv <= 18:
            raise EnsembleError(f"protograph search supports 1 <= dv <= 18, got {dv}")
        sweep = _Sweep("protograph", lambda p, dv=dv: (dv, p[0], p[1], L), lambda p: None, tol, delta_conv, max_iters, workers)
        reps = segment_representatives(dv)
        sweep.evaluate(reps)
        best, _ = sweep.best()
        results[dv] = sweep.result(best, final_tol, {"dv": dv, "L": L, "sweep_tol": tol, "tol": final_tol})
    return results
