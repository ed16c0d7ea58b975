"""Multi-type DE: the two-type random ensemble and edge-bundle DE on protograph chains."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import TextIO

import numba
import numpy as np

from .de_engine import (
    DELTA_CONV,
    MAX_ITERS,
    TOL,
    DESystem,
    ThresholdResult,
    bp_threshold,
    ipow,
)
from .ensembles import EnsembleError, ProtographChain, TwoTypeSpec


def _as_unit_array(values, name: str) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    if np.any(~np.isfinite(arr)) or (arr.size and (arr.min() < 0.0 or arr.max() > 1.0)):
        raise EnsembleError(f"{name} entries must lie in [0, 1]")
    arr.setflags(write=False)
    return arr


# --- two-type random ensemble ---------------------------------------------------


@numba.njit
def _two_type_kernel(params, src, dst, work, eps, lo, hi):
    dv, au, al, L = params
    # work[z - 1]: (upper, lower) known-probability of CN messages at position z, z = lo..hi+1
    for z in range(lo, min(hi + 1, L + 1) + 1):
        xu0 = src[z - 1, 0] if z <= L else 0.0
        xl0 = src[z - 1, 1] if z <= L else 0.0
        xu1 = src[z - 2, 0] if z >= 2 else 0.0
        xl1 = src[z - 2, 1] if z >= 2 else 0.0
        a = 1.0 - (au * xu0 + (1.0 - au) * xu1)
        b = 1.0 - (al * xl0 + (1.0 - al) * xl1)
        work[z - 1, 0] = ipow(a, dv - 1) * ipow(b, dv)
        work[z - 1, 1] = ipow(a, dv) * ipow(b, dv - 1)
    for z in range(lo, hi + 1):
        dst[z - 1, 0] = eps * ipow(1.0 - (au * work[z - 1, 0] + (1.0 - au) * work[z, 0]), dv - 1)
        dst[z - 1, 1] = eps * ipow(1.0 - (al * work[z - 1, 1] + (1.0 - al) * work[z, 1]), dv - 1)


class TwoTypeSystem(DESystem):
    """Upper and lower VN sets per position, each with its own ``w = 2`` smoothing.

    The terminating check nodes at position ``L + 1`` are evaluated like any
    other, with erasure 0 on the missing position ``L + 1`` messages.
    """

    kernel = staticmethod(_two_type_kernel)

    def __init__(self, spec: TwoTypeSpec):
        self.spec = spec
        self.L = spec.L
        self.params = (spec.dv, spec.alpha_upper, spec.alpha_lower, spec.L)

    @property
    def state_shape(self) -> tuple[int, int]:
        return (self.L, 2)

    @property
    def work_shape(self) -> tuple[int, int]:
        return (self.L + 1, 2)

    def profile(self, state: np.ndarray, epsilon: float) -> "TwoTypeProfile":
        return TwoTypeProfile(state[:, 0], state[:, 1], epsilon)

    def __repr__(self) -> str:
        return f"TwoTypeSystem({self.spec})"


@dataclass(frozen=True)
class TwoTypeProfile:
    """VN->CN erasure probabilities of the upper and lower sets, positions ``1..L``.

    ``y_upper``/``y_lower`` hold the CN-side known-message probabilities of the
    step that produced this profile (positions ``1..L+1``), when available.
    """

    upper: np.ndarray
    lower: np.ndarray
    epsilon: float
    y_upper: np.ndarray | None = None
    y_lower: np.ndarray | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "upper", _as_unit_array(self.upper, "upper"))
        object.__setattr__(self, "lower", _as_unit_array(self.lower, "lower"))
        if self.upper.shape != self.lower.shape or self.upper.ndim != 1:
            raise EnsembleError("upper and lower profiles must be 1-D with equal lengths")

    @classmethod
    def initial(cls, spec: TwoTypeSpec, epsilon: float) -> "TwoTypeProfile":
        return cls(np.full(spec.L, epsilon), np.full(spec.L, epsilon), epsilon)


def two_type_step(profile: TwoTypeProfile, spec: TwoTypeSpec) -> TwoTypeProfile:
    if profile.upper.shape != (spec.L,):
        raise EnsembleError(f"profile length {profile.upper.shape[0]} != L = {spec.L}")
    system = TwoTypeSystem(spec)
    src = np.ascontiguousarray(np.stack([profile.upper, profile.lower], axis=1))
    dst = src.copy()
    work = np.zeros(system.work_shape)
    system.kernel(system.params, src, dst, work, float(profile.epsilon), 1, spec.L)
    return TwoTypeProfile(dst[:, 0], dst[:, 1], profile.epsilon, work[:, 0].copy(), work[:, 1].copy())


def two_type_threshold(
    spec: TwoTypeSpec, tol: float = TOL, delta_conv: float = DELTA_CONV, max_iters: int = MAX_ITERS
) -> ThresholdResult:
    return bp_threshold(TwoTypeSystem(spec), tol, delta_conv, max_iters)


# --- protograph chains ----------------------------------------------------------

# Component order of a segment's bundles: v1->c(z), v2->c(z), v1->c(z+1), v2->c(z+1).
BUNDLE_NAMES = ("v1->c(z)", "v2->c(z)", "v1->c(z+1)", "v2->c(z+1)")


@numba.njit
def _check_side(src, m, cn, L, k_out, out_seg):
    """Erasure probability CN ``c(cn)`` sends back along bundle ``k_out`` of segment ``out_seg``."""
    p = 1.0
    for k in range(4):
        seg = cn if k < 2 else cn - 1
        if seg < 1 or seg > L or m[k] == 0:
            continue
        e = m[k] - 1 if (k == k_out and seg == out_seg) else m[k]
        p *= ipow(1.0 - src[seg - 1, k], e)
    return 1.0 - p


@numba.njit
def _proto_kernel(params, src, dst, work, eps, lo, hi):
    m, L = params
    for z in range(lo, hi + 1):
        for k in range(4):
            if m[k] == 0:
                work[z - 1, k] = 0.0
            else:
                cn = z if k < 2 else z + 1
                work[z - 1, k] = _check_side(src, m, cn, L, k, z)
    for z in range(lo, hi + 1):
        for k in range(4):
            if m[k] == 0:
                dst[z - 1, k] = 0.0
                continue
            other = (k + 2) % 4
            p = eps * ipow(work[z - 1, k], m[k] - 1)
            if m[other] > 0:
                p *= ipow(work[z - 1, other], m[other])
            dst[z - 1, k] = p


class ProtographSystem(DESystem):
    """Multi-edge-type DE on a coupled protograph chain.

    Parallel edges of a bundle carry identical messages, so the state holds one
    VN->CN erasure probability per bundle.  Bundles of multiplicity zero are
    held at zero and never enter an update.
    """

    kernel = staticmethod(_proto_kernel)

    def __init__(self, chain: ProtographChain):
        self.chain = chain
        self.L = chain.L
        self.mult = np.array(chain.multiplicities, dtype=np.int64)
        self.params = (self.mult, chain.L)

    @property
    def state_shape(self) -> tuple[int, int]:
        return (self.L, 4)

    def mask_unused(self, state: np.ndarray) -> None:
        state[:, self.mult == 0] = 0.0

    def position_profile(self, state: np.ndarray) -> np.ndarray:
        """Edge-weighted mean VN->CN erasure probability per segment."""
        return state[: self.L] @ self.mult / (2.0 * self.chain.dv)

    def profile(self, state: np.ndarray, epsilon: float) -> "BundleProfile":
        return BundleProfile(state.copy(), np.full_like(state, np.nan), epsilon)

    def __repr__(self) -> str:
        c = self.chain
        return f"ProtographSystem(dv={c.dv}, b1={c.b1}, b2={c.b2}, L={c.L})"


@dataclass(frozen=True)
class BundleProfile:
    """Per-bundle erasure probabilities, shape ``(L, 4)`` in :data:`BUNDLE_NAMES` order.

    ``vn_to_cn`` is the DE state; ``cn_to_vn`` holds the check-side erasures
    that produced it (NaN where unknown, e.g. for the initial profile).
    """

    vn_to_cn: np.ndarray
    cn_to_vn: np.ndarray
    epsilon: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "vn_to_cn", _as_unit_array(self.vn_to_cn, "vn_to_cn"))
        cn = np.array(self.cn_to_vn, dtype=np.float64)
        cn.setflags(write=False)
        object.__setattr__(self, "cn_to_vn", cn)
        if self.vn_to_cn.ndim != 2 or self.vn_to_cn.shape[1] != 4:
            raise EnsembleError("bundle profile must have shape (L, 4)")

    @classmethod
    def initial(cls, chain: ProtographChain, epsilon: float) -> "BundleProfile":
        system = ProtographSystem(chain)
        state = system.initial_state(epsilon)
        return cls(state, np.full_like(state, np.nan), epsilon)

    def to_csv(self, out: TextIO, chain: ProtographChain) -> None:
        """One row per present bundle: ``z,bundle,multiplicity,vn_to_cn,cn_to_vn``."""
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["z", "bundle", "multiplicity", "vn_to_cn", "cn_to_vn"])
        for z in range(self.vn_to_cn.shape[0]):
            for k, name in enumerate(BUNDLE_NAMES):
                if chain.multiplicities[k] == 0:
                    continue
                writer.writerow(
                    [z + 1, name, chain.multiplicities[k], f"{self.vn_to_cn[z, k]:.12g}", f"{self.cn_to_vn[z, k]:.12g}"]
                )


def protograph_step(profile: BundleProfile, chain: ProtographChain) -> BundleProfile:
    if profile.vn_to_cn.shape != (chain.L, 4):
        raise EnsembleError(f"bundle profile shape {profile.vn_to_cn.shape} != ({chain.L}, 4)")
    system = ProtographSystem(chain)
    src = np.ascontiguousarray(profile.vn_to_cn, dtype=np.float64)
    dst = src.copy()
    work = np.zeros(system.work_shape)
    system.kernel(system.params, src, dst, work, float(profile.epsilon), 1, chain.L)
    cn = work.copy()
    cn[:, system.mult == 0] = np.nan
    return BundleProfile(dst, cn, profile.epsilon)


def protograph_threshold(
    chain: ProtographChain, tol: float = TOL, delta_conv: float = DELTA_CONV, max_iters: int = MAX_ITERS
) -> ThresholdResult:
    return bp_threshold(ProtographSystem(chain), tol, delta_conv, max_iters)
