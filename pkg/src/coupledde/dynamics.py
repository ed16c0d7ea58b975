"""Decoding-wave speed and windowed-decoder density evolution."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numba
import numpy as np

from .de_engine import (
    DELTA_CONV,
    FAULT,
    MAX_ITERS,
    TOL,
    ComputationFault,
    _windowed,
    DERunReport,
    DESystem,
    ThresholdResult,
    bisect_feasibility,
    run_de,
)
from .ensembles import EnsembleError

log = logging.getLogger(__name__)

DISPLACEMENT = 10
EXTRA_BURN_IN = 5

# per-side phases of the front tracker
_BURN_IN, _MEASURING, _DONE, _FAILED = 0, 1, 2, 3


class NoWaveError(RuntimeError):
    """No decoding wave could be measured at this channel value."""


@dataclass(frozen=True)
class SpeedEstimate:
    """Wave speed ``v = D / T_D`` in positions per iteration."""

    v: float
    D: int
    T_D: int
    burn_in: int
    side: str = "left"

    def __post_init__(self) -> None:
        if self.T_D < 1:
            raise ValueError(f"T_D must be >= 1, got {self.T_D}")


@dataclass(frozen=True)
class WindowConfig:
    W_D: int
    I: int

    def __post_init__(self) -> None:
        if self.W_D < 1 or self.I < 1:
            raise EnsembleError(f"window size and iterations must be >= 1, got W_D={self.W_D}, I={self.I}")


def coupling_width(system: DESystem) -> int:
    spec = getattr(system, "spec", None)
    return getattr(spec, "w", 2)


def profile_weights(system: DESystem) -> np.ndarray:
    """Linear map from a state row to the scalar erasure profile used for front tracking."""
    n = system.state_shape[1]
    mult = getattr(system, "mult", None)
    if mult is not None:
        return mult / mult.sum()
    return np.full(n, 1.0 / n)


@numba.njit
def _front(p, level, lo, hi, step):
    """Distance travelled from the boundary by the ``level`` crossing, scanning ``lo -> hi``.

    The terminated neighbour outside the chain reads 0.  Returns -1 when no
    entry of the half reaches ``level``.
    """
    prev = 0.0
    k = 0
    z = lo
    while True:
        cur = p[z]
        if cur >= level:
            # slot k sits at distance k + 0.5 from the boundary; t = 0 gives 0
            return k - 0.5 + (level - prev) / (cur - prev)
        prev = cur
        k += 1
        if z == hi:
            return -1.0
        z += step


@numba.njit
def _track(kernel, params, pw, state, scratch, work, eps, L, delta, level, burn, delay, D, max_iters):
    """Return ``(t*_left, T_left, t*_right, T_right, reason)``; a T of -1 means no measurement.

    ``reason``: 0 both sides resolved, 1 chain converged, 2 stalled at a fixed
    point, 3 iteration cap, 4 non-finite state.
    """
    half = L // 2
    p = np.empty(L)
    ref_l = np.empty(L)
    ref_r = np.empty(L)
    phase = np.zeros(2, np.int64)
    tstar = np.full(2, -1, np.int64)
    tmeas = np.full(2, -1, np.int64)
    ready = np.full(2, -1, np.int64)
    src = state
    dst = scratch
    for t in range(1, max_iters + 1):
        kernel(params, src, dst, work, eps, 1, L)
        m = 0.0
        r = 0.0
        for k in range(dst.shape[0]):
            for c in range(dst.shape[1]):
                v = dst[k, c]
                if not np.isfinite(v):
                    return tstar[0], tmeas[0], tstar[1], tmeas[1], 4
                if v > m:
                    m = v
                d = abs(v - src[k, c])
                if d > r:
                    r = d
        src, dst = dst, src
        for z in range(L):
            s = 0.0
            for c in range(src.shape[1]):
                s += pw[c] * src[z, c]
            p[z] = s
        for side in range(2):
            if phase[side] == _BURN_IN:
                if side == 0:
                    f = _front(p, level, 0, half - 1, 1)
                else:
                    f = _front(p, level, L - 1, L - half, -1)
                if f < 0.0:
                    phase[side] = _FAILED
                    continue
                if ready[side] < 0 and f >= burn:
                    ready[side] = t + delay
                if ready[side] >= 0 and t >= ready[side]:
                    phase[side] = _MEASURING
                    tstar[side] = t
                    if side == 0:
                        ref_l[:] = p
                    else:
                        ref_r[:] = p
            elif phase[side] == _MEASURING:
                ok = True
                if side == 0:
                    for z in range(D, half):
                        if p[z] > ref_l[z - D]:
                            ok = False
                            break
                else:
                    for z in range(L - half, L - D):
                        if p[z] > ref_r[z + D]:
                            ok = False
                            break
                if ok:
                    phase[side] = _DONE
                    tmeas[side] = t - tstar[side]
        # a side still measuring cannot beat an already finished one once it is slower
        for side in range(2):
            other = 1 - side
            if phase[side] == _MEASURING and phase[other] == _DONE and t - tstar[side] >= tmeas[other]:
                phase[side] = _FAILED
        if phase[0] >= _DONE and phase[1] >= _DONE:
            return tstar[0], tmeas[0], tstar[1], tmeas[1], 0
        if m < delta:
            return tstar[0], tmeas[0], tstar[1], tmeas[1], 1
        if r == 0.0:
            return tstar[0], tmeas[0], tstar[1], tmeas[1], 2
    return tstar[0], tmeas[0], tstar[1], tmeas[1], 3


_REASONS = {1: "chain converged before a wave formed", 2: "DE stalled at a fixed point", 3: "iteration cap reached"}


def estimate_speed(
    system: DESystem,
    epsilon: float,
    D: int = DISPLACEMENT,
    burn_in: int | None = None,
    delay: int = 0,
    delta_conv: float = DELTA_CONV,
    max_iters: int = MAX_ITERS,
) -> SpeedEstimate:
    """Measure ``v = D / T_D`` for the faster of the two decoding waves.

    Each half-chain is tracked separately.  Its reference time ``t*`` is the
    first iteration at which its ``epsilon / 2`` crossing has moved
    ``burn_in`` positions (default ``w + 5``) in from the chain end, plus
    ``delay`` further iterations; ``T_D``
    is then the first ``T`` with ``x_z(t*+T) <= x_{z-D}(t*)`` for every
    position of that half (mirrored for the right half).
    """
    L = system.L
    w = coupling_width(system)
    if L < 4 * D + 2 * w:
        raise EnsembleError(f"speed estimation needs L >= 4D + 2w = {4 * D + 2 * w}, got L={L}")
    if not (0.0 < epsilon <= 1.0):
        raise EnsembleError(f"epsilon must lie in (0, 1], got {epsilon}")
    burn = w + EXTRA_BURN_IN if burn_in is None else burn_in
    state = system.initial_state(epsilon)
    t_l, T_l, t_r, T_r, reason = _track(
        system.kernel,
        system.params,
        profile_weights(system),
        state,
        state.copy(),
        np.zeros(system.work_shape),
        float(epsilon),
        L,
        delta_conv,
        epsilon / 2.0,
        float(burn),
        int(delay),
        D,
        max_iters,
    )
    if reason == 4:
        raise ComputationFault(f"non-finite DE value while tracking {system!r} at epsilon={epsilon}")
    candidates = [(T, t, side) for T, t, side in ((T_l, t_l, "left"), (T_r, t_r, "right")) if T > 0]
    if not candidates:
        raise NoWaveError(f"no decoding wave for {system!r} at epsilon={epsilon}: {_REASONS.get(reason, 'no front')}")
    T, t, side = min(candidates)
    return SpeedEstimate(v=D / T, D=D, T_D=int(T), burn_in=int(t), side=side)


@dataclass(frozen=True)
class SpeedPoint:
    param: float
    epsilon: float
    v: float | None
    status: str


def speed_contours(
    family: Callable[[float], DESystem],
    params: Iterable[float],
    epsilons: Iterable[float],
    D: int = DISPLACEMENT,
    max_iters: int = MAX_ITERS,
    workers: int | None = None,
) -> list[SpeedPoint]:
    """Wave speed on a ``param x epsilon`` grid; points without a wave keep ``v = None``."""
    from .optimize import parallel_map

    params = list(params)
    epsilons = list(epsilons)
    if not params or not epsilons:
        raise EnsembleError("speed grids must be non-empty")
    tasks = [(family, a, e, D, max_iters) for a in params for e in epsilons]
    return parallel_map(_speed_task, tasks, workers)


def _speed_task(task) -> SpeedPoint:
    family, a, eps, D, max_iters = task
    try:
        est = estimate_speed(family(a), eps, D=D, max_iters=max_iters)
    except NoWaveError:
        return SpeedPoint(a, eps, None, "no-wave")
    return SpeedPoint(a, eps, est.v, "ok")


def windowed_decode(
    system: DESystem, epsilon: float, cfg: WindowConfig, delta_conv: float = DELTA_CONV
) -> DERunReport:
    """Sliding-window DE: for ``c = 1..L`` run ``I`` updates of positions ``c..c+W_D-1``.

    Positions outside the window keep their committed values; the window is
    truncated at ``L``.  Success means every erasure probability is below
    ``delta_conv`` after the last window.
    """
    if cfg.W_D > system.L:
        raise EnsembleError(f"window size {cfg.W_D} exceeds L={system.L}")
    state = system.initial_state(epsilon)
    status, m = _windowed(
        system.kernel,
        system.params,
        state,
        state.copy(),
        np.zeros(system.work_shape),
        float(epsilon),
        system.L,
        cfg.W_D,
        cfg.I,
    )
    if status == FAULT:
        raise ComputationFault(f"non-finite windowed DE value for {system!r} at epsilon={epsilon}")
    return DERunReport(
        converged=m < delta_conv,
        iterations=system.L * cfg.I,
        final_profile=system.profile(state, epsilon),
        max_residual=float(m),
        final_state=state,
    )


def windowed_threshold(
    system: DESystem, cfg: WindowConfig, tol: float = TOL, delta_conv: float = DELTA_CONV
) -> ThresholdResult:
    return bisect_feasibility(lambda eps: windowed_decode(system, eps, cfg, delta_conv).converged, tol)


def wave_snapshot(system: DESystem, epsilon: float, iterations: int) -> np.ndarray:
    """Position profile after a fixed number of full BP iterations."""
    report = run_de(system, epsilon, delta_conv=0.0, max_iters=iterations)
    return system.position_profile(report.final_state)


def frontier_positions(profiles: Sequence[np.ndarray], level: float) -> np.ndarray:
    """Left-half ``level`` crossing distance for a sequence of position profiles."""
    L = len(profiles[0])
    return np.array([_front(np.asarray(p, dtype=np.float64), level, 0, L // 2 - 1, 1) for p in profiles])
