"""Density evolution on the BEC for coupled ensembles, and BP-threshold bisection.

Every system keeps its state as a 2-D float array ``(slots, components)``;
slot ``k`` holds spatial position ``z = k + 1``.  A system supplies a numba
kernel ``kernel(params, src, dst, work, eps, lo, hi)`` that writes the updated
state for positions ``lo..hi`` (1-based, inclusive) into ``dst`` and leaves the
other slots of ``dst`` untouched.  The drivers below are shared by all systems.
"""

from __future__ import annotations

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Callable, TextIO

import numba
import numpy as np

from .ensembles import CoupledEnsembleSpec, EnsembleError

log = logging.getLogger(__name__)

DELTA_CONV = 1e-10
MAX_ITERS = 1_000_000
TOL = 1e-5

# status codes returned by the compiled loops
RUNNING, CONVERGED, STALLED, FAULT = 0, 1, 2, 3


class ComputationFault(RuntimeError):
    """Non-finite values appeared in a DE state; the maps preserve [0, 1], so this is a bug."""


@numba.njit(inline="always")
def ipow(x, n):
    r = 1.0
    while n > 0:
        if n & 1:
            r *= x
        x *= x
        n >>= 1
    return r


@numba.njit
def _iterate(kernel, params, state, scratch, work, eps, n_pos, delta, n_iters):
    """Run up to ``n_iters`` full updates; return ``(status, iters, max, residual, state)``."""
    src = state
    dst = scratch
    m = 0.0
    r = 0.0
    for t in range(1, n_iters + 1):
        kernel(params, src, dst, work, eps, 1, n_pos)
        m = 0.0
        r = 0.0
        for k in range(dst.shape[0]):
            for c in range(dst.shape[1]):
                v = dst[k, c]
                if not np.isfinite(v):
                    return FAULT, t, v, v, dst
                if v > m:
                    m = v
                d = abs(v - src[k, c])
                if d > r:
                    r = d
        src, dst = dst, src
        if m < delta:
            return CONVERGED, t, m, r, src
        if r == 0.0:
            return STALLED, t, m, r, src
    return RUNNING, n_iters, m, r, src


@numba.njit
def _windowed(kernel, params, state, scratch, work, eps, n_pos, window, iters):
    """Sliding-window schedule; ``state`` is overwritten with the committed vector."""
    for c in range(1, n_pos + 1):
        hi = min(c + window - 1, n_pos)
        scratch[:, :] = state
        for _ in range(iters):
            kernel(params, state, scratch, work, eps, c, hi)
            r = 0.0
            for k in range(c - 1, hi):
                for j in range(state.shape[1]):
                    d = abs(scratch[k, j] - state[k, j])
                    if d > r:
                        r = d
                    state[k, j] = scratch[k, j]
            if r == 0.0:
                break
    m = 0.0
    for k in range(state.shape[0]):
        for j in range(state.shape[1]):
            v = state[k, j]
            if not np.isfinite(v):
                return FAULT, v
            if v > m:
                m = v
    return RUNNING, m


class DESystem(ABC):
    """A monotone DE recursion over ``L`` spatial positions."""

    L: int
    kernel: Callable
    params: tuple

    @property
    @abstractmethod
    def state_shape(self) -> tuple[int, int]: ...

    @property
    def work_shape(self) -> tuple[int, int]:
        return self.state_shape

    def initial_state(self, epsilon: float) -> np.ndarray:
        """Channel value on every message of positions ``1..L``, zero on terminated slots."""
        state = np.zeros(self.state_shape)
        state[: self.L] = epsilon
        self.mask_unused(state)
        return state

    def mask_unused(self, state: np.ndarray) -> None:
        """Zero state entries that do not correspond to real edges."""

    def position_profile(self, state: np.ndarray) -> np.ndarray:
        """Per-position erasure probability ``x_z`` for ``z = 1..L``."""
        return state[: self.L].mean(axis=1)

    def residual(self, state: np.ndarray) -> float:
        """Worst-position erasure probability."""
        return float(state.max())

    def step(self, state: np.ndarray, epsilon: float, lo: int = 1, hi: int | None = None) -> np.ndarray:
        """One update of positions ``lo..hi``; other positions are copied unchanged."""
        if state.shape != self.state_shape:
            raise EnsembleError(f"state shape {state.shape} does not match system shape {self.state_shape}")
        hi = self.L if hi is None else hi
        src = np.ascontiguousarray(state, dtype=np.float64)
        dst = src.copy()
        self.kernel(self.params, src, dst, np.zeros(self.work_shape), float(epsilon), lo, hi)
        return dst

    def profile(self, state: np.ndarray, epsilon: float):
        return ErasureProfile(self.position_profile(state), epsilon)


@numba.njit
def _single_kernel(params, src, dst, work, eps, lo, hi):
    nu, dv, dc, L = params
    w = nu.shape[0]
    c_hi = min(hi + w - 1, L + w - 1)
    # work[zp - 1, 0]: probability that a CN at position zp sends a known message
    for zp in range(lo, c_hi + 1):
        s = 0.0
        for j in range(w):
            k = zp - j
            if 1 <= k <= L:
                s += nu[j] * src[k - 1, 0]
        work[zp - 1, 0] = ipow(1.0 - s, dc - 1)
    for z in range(lo, hi + 1):
        s = 0.0
        for i in range(w):
            s += nu[i] * work[z + i - 1, 0]
        dst[z - 1, 0] = eps * ipow(1.0 - s, dv - 1)


class SingleTypeSystem(DESystem):
    """The random ``(dv, dc, nu, L)`` ensemble; slots ``L+1..L+w-1`` stay zero."""

    kernel = staticmethod(_single_kernel)

    def __init__(self, spec: CoupledEnsembleSpec):
        self.spec = spec
        self.L = spec.L
        self.params = (spec.nu.as_array(), spec.dv, spec.dc, spec.L)

    @property
    def state_shape(self) -> tuple[int, int]:
        return (self.L + self.spec.w - 1, 1)

    def __repr__(self) -> str:
        return f"SingleTypeSystem({self.spec})"


@dataclass(frozen=True)
class ErasureProfile:
    """Erasure probabilities ``x_z`` over the stored positions, plus the channel value."""

    values: np.ndarray
    epsilon: float

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 1:
            raise EnsembleError("profile values must be one-dimensional")
        if np.any(~np.isfinite(values)) or values.min(initial=0.0) < 0.0 or values.max(initial=0.0) > 1.0:
            raise EnsembleError("profile entries must lie in [0, 1]")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def initial(cls, spec: CoupledEnsembleSpec, epsilon: float) -> "ErasureProfile":
        values = np.zeros(spec.L + spec.w - 1)
        values[: spec.L] = epsilon
        return cls(values, epsilon)


@dataclass(frozen=True)
class DERunReport:
    converged: bool
    iterations: int
    final_profile: object
    max_residual: float
    stalled: bool = False
    final_state: np.ndarray | None = field(default=None, repr=False, compare=False)


@dataclass(frozen=True)
class ThresholdResult:
    threshold: float
    bracket_width: float
    runs: int
    probes: tuple[tuple[float, bool], ...] = field(default=(), repr=False)


def de_step(profile: ErasureProfile, spec: CoupledEnsembleSpec) -> ErasureProfile:
    """One DE iteration of the random ensemble; positions beyond ``L`` stay zero."""
    expected = spec.L + spec.w - 1
    if profile.values.shape != (expected,):
        raise EnsembleError(f"profile length {profile.values.shape[0]} != L + w - 1 = {expected}")
    system = SingleTypeSystem(spec)
    state = profile.values.reshape(-1, 1)
    out = system.step(state, profile.epsilon)
    out[spec.L :] = 0.0
    return ErasureProfile(out[:, 0], profile.epsilon)


def _profile_for(system: DESystem, state: np.ndarray, epsilon: float):
    if isinstance(system, SingleTypeSystem):
        return ErasureProfile(state[:, 0], epsilon)
    return system.profile(state, epsilon)


def run_de(
    system: DESystem | CoupledEnsembleSpec,
    epsilon: float,
    delta_conv: float = DELTA_CONV,
    max_iters: int = MAX_ITERS,
    trace: TextIO | None = None,
    trace_every: int = 0,
) -> DERunReport:
    """Iterate from the channel-initialized state until ``max x < delta_conv``.

    A run also stops, unconverged, once an update leaves the state bitwise
    unchanged: the map is deterministic, so a fixed point never converges.
    With ``trace`` set, ``t,z,x`` CSV rows of the position profile are written
    every ``trace_every`` iterations (and for ``t = 0``).
    """
    if isinstance(system, CoupledEnsembleSpec):
        system = SingleTypeSystem(system)
    if not (0.0 <= epsilon <= 1.0):
        raise EnsembleError(f"epsilon must lie in [0, 1], got {epsilon}")
    state = system.initial_state(epsilon)
    scratch = state.copy()
    work = np.zeros(system.work_shape)
    chunk = trace_every if (trace is not None and trace_every > 0) else max_iters
    if trace is not None:
        trace.write("t,z,x\n")
        _write_trace(trace, 0, system.position_profile(state))
    done = 0
    status, m, r = RUNNING, float(state.max()), 0.0
    while done < max_iters:
        n = min(chunk, max_iters - done)
        status, it, m, r, final = _iterate(
            system.kernel, system.params, state, scratch, work, float(epsilon), system.L, delta_conv, n
        )
        if final is not state:
            state, scratch = final, state
        done += it
        if trace is not None:
            _write_trace(trace, done, system.position_profile(state))
        if status != RUNNING:
            break
    if status == FAULT:
        raise ComputationFault(f"non-finite DE value at iteration {done} for {system!r}, epsilon={epsilon}")
    return DERunReport(
        converged=status == CONVERGED,
        iterations=done,
        final_profile=_profile_for(system, state, epsilon),
        max_residual=float(m),
        stalled=status == STALLED,
        final_state=state,
    )


def _write_trace(out: TextIO, t: int, profile: np.ndarray) -> None:
    out.writelines(f"{t},{z},{x:.12g}\n" for z, x in enumerate(profile, start=1))


def bisect_feasibility(
    feasible: Callable[[float], bool], tol: float = TOL, lo: float = 0.0, hi: float = 1.0
) -> ThresholdResult:
    """Bisection for the supremum of a monotone (feasible-below) predicate on ``[lo, hi]``.

    ``lo`` is assumed feasible and ``hi`` infeasible; neither endpoint is probed.
    """
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol}")
    probes = []
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        ok = bool(feasible(mid))
        probes.append((mid, ok))
        if ok:
            lo = mid
        else:
            hi = mid
    return ThresholdResult(0.5 * (lo + hi), hi - lo, len(probes), tuple(probes))


def bp_threshold(
    system: DESystem | CoupledEnsembleSpec,
    tol: float = TOL,
    delta_conv: float = DELTA_CONV,
    max_iters: int = MAX_ITERS,
) -> ThresholdResult:
    """Largest channel erasure probability for which full BP DE drives the chain to zero."""
    if isinstance(system, CoupledEnsembleSpec):
        system = SingleTypeSystem(system)
    result = bisect_feasibility(lambda eps: run_de(system, eps, delta_conv, max_iters).converged, tol)
    log.debug("threshold %r -> %.6f after %d runs", system, result.threshold, result.runs)
    return result
