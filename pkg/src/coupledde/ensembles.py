"""Ensemble parameter types, rate arithmetic and protograph chain construction."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

# VN-type labels used in protograph bundles
V1, V2 = "v1", "v2"

_SUM_TOL = 1e-12


class EnsembleError(ValueError):
    """Raised for parameter combinations that do not describe a valid ensemble."""


@dataclass(frozen=True)
class SmoothingDistribution:
    """Probability vector spreading a variable node's edges over ``w`` positions.

    Zero entries are allowed, so ``[0, 1]`` describes the uncoupled ensemble.
    """

    weights: tuple[float, ...]

    def __post_init__(self) -> None:
        weights = tuple(float(v) for v in self.weights)
        object.__setattr__(self, "weights", weights)
        if len(weights) < 2:
            raise EnsembleError(f"smoothing distribution needs w >= 2 entries, got {len(weights)}")
        if any(not math.isfinite(v) or v < 0.0 for v in weights):
            raise EnsembleError(f"smoothing weights must be finite and >= 0, got {weights}")
        if abs(math.fsum(weights) - 1.0) > _SUM_TOL:
            raise EnsembleError(f"smoothing weights must sum to 1, got sum {math.fsum(weights)!r}")

    @classmethod
    def from_alpha(cls, alpha: float) -> "SmoothingDistribution":
        """The ``w = 2`` family ``[alpha, 1 - alpha]``."""
        return cls((alpha, 1.0 - alpha))

    @classmethod
    def from_pair(cls, nu1: float, nu2: float) -> "SmoothingDistribution":
        """The ``w = 3`` family ``[nu1, nu2, 1 - nu1 - nu2]``."""
        rest = 1.0 - nu1 - nu2
        if -_SUM_TOL < rest < 0.0:
            rest = 0.0
        return cls((nu1, nu2, rest))

    @classmethod
    def uniform(cls, w: int) -> "SmoothingDistribution":
        return cls((1.0 / w,) * w)

    @classmethod
    def normalized(cls, weights: Iterable[float]) -> "SmoothingDistribution":
        """Rescale nonnegative weights to sum to one (for rounded user input)."""
        arr = [float(v) for v in weights]
        total = math.fsum(arr)
        if total <= 0.0:
            raise EnsembleError("smoothing weights must have a positive sum")
        return cls(tuple(v / total for v in arr))

    @property
    def w(self) -> int:
        return len(self.weights)

    def reversed(self) -> "SmoothingDistribution":
        return SmoothingDistribution(self.weights[::-1])

    def as_array(self) -> np.ndarray:
        return np.asarray(self.weights, dtype=np.float64)


@dataclass(frozen=True)
class CoupledEnsembleSpec:
    """Random ``(dv, dc, nu, L)`` ensemble; the lifting size is always asymptotic."""

    dv: int
    dc: int
    nu: SmoothingDistribution
    L: int

    def __post_init__(self) -> None:
        if not isinstance(self.nu, SmoothingDistribution):
            object.__setattr__(self, "nu", SmoothingDistribution(tuple(self.nu)))
        _check_int("dv", self.dv, 2)
        _check_int("dc", self.dc, 2)
        _check_int("L", self.L, 2)
        if self.dc <= self.dv:
            raise EnsembleError(f"need dv < dc, got dv={self.dv}, dc={self.dc}")
        if self.L < self.nu.w:
            raise EnsembleError(f"need L >= w, got L={self.L}, w={self.nu.w}")

    @property
    def w(self) -> int:
        return self.nu.w

    def with_nu(self, nu: SmoothingDistribution) -> "CoupledEnsembleSpec":
        return CoupledEnsembleSpec(self.dv, self.dc, nu, self.L)


@dataclass(frozen=True)
class TwoTypeSpec:
    """Two VN sets per position with ``w = 2`` smoothing ``[a, 1-a]`` each; ``dc = 2 dv``."""

    dv: int
    alpha_upper: float
    alpha_lower: float
    L: int

    def __post_init__(self) -> None:
        _check_int("dv", self.dv, 2)
        _check_int("L", self.L, 2)
        for name in ("alpha_upper", "alpha_lower"):
            value = getattr(self, name)
            if not (0.0 <= value <= 1.0):
                raise EnsembleError(f"{name} must lie in [0, 1], got {value}")
            object.__setattr__(self, name, float(value))

    @property
    def dc(self) -> int:
        return 2 * self.dv


@dataclass(frozen=True)
class EdgeBundle:
    """Parallel edges between one VN and one CN of the coupled protograph."""

    vn_position: int
    vn_type: str
    cn_position: int
    multiplicity: int


@dataclass(frozen=True)
class ProtographChain:
    """Chain of ``L`` elementary segments ``(dv, b1, b2)``.

    Segment ``z`` holds VNs ``v1(z)``, ``v2(z)`` and check node ``c(z)``;
    ``v1`` sends ``b1`` edges to ``c(z)`` and ``dv - b1`` to ``c(z+1)``, and
    likewise for ``v2`` with ``b2``.  The last check node ``c(L+1)`` terminates
    the chain.
    """

    dv: int
    b1: int
    b2: int
    L: int
    bundles: tuple[EdgeBundle, ...] = field(repr=False, compare=False, default=())

    def __post_init__(self) -> None:
        _check_int("dv", self.dv, 1)
        _check_int("L", self.L, 2)
        for name in ("b1", "b2"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
                raise EnsembleError(f"{name} must be an integer, got {value!r}")
            if not (0 <= value <= self.dv):
                raise EnsembleError(f"{name} must lie in [0, dv={self.dv}], got {value}")
        if not self.bundles:
            object.__setattr__(self, "bundles", tuple(_chain_bundles(self.dv, self.b1, self.b2, self.L)))

    @property
    def multiplicities(self) -> tuple[int, int, int, int]:
        """``(v1->c(z), v2->c(z), v1->c(z+1), v2->c(z+1))`` edge counts per segment."""
        return (self.b1, self.b2, self.dv - self.b1, self.dv - self.b2)

    @property
    def n_variable_nodes(self) -> int:
        return 2 * self.L

    @property
    def n_check_nodes(self) -> int:
        return self.L + 1

    @property
    def design_rate(self) -> float:
        return 1.0 - self.n_check_nodes / self.n_variable_nodes

    def check_degree(self, position: int) -> int:
        return sum(b.multiplicity for b in self.bundles if b.cn_position == position)

    def bundles_into(self, position: int) -> list[EdgeBundle]:
        return [b for b in self.bundles if b.cn_position == position]


def _check_int(name: str, value, minimum: int) -> None:
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
        raise EnsembleError(f"{name} must be an integer, got {value!r}")
    if value < minimum:
        raise EnsembleError(f"{name} must be >= {minimum}, got {value}")


def _chain_bundles(dv: int, b1: int, b2: int, L: int):
    for z in range(1, L + 1):
        for vn_type, b in ((V1, b1), (V2, b2)):
            if b > 0:
                yield EdgeBundle(z, vn_type, z, b)
            if dv - b > 0:
                yield EdgeBundle(z, vn_type, z + 1, dv - b)


def build_protograph_chain(dv: int, b1: int, b2: int, L: int) -> ProtographChain:
    """Coupled chain of ``L`` copies of the elementary segment ``(dv, b1, b2)``.

    Bundles of multiplicity zero are omitted.
    """
    return ProtographChain(dv, b1, b2, L)


def rate_loss_delta(dv: int, dc: int, nu: SmoothingDistribution | Iterable[float]) -> float:
    """Termination rate loss ``Delta``; the design rate is ``1 - dv/dc - Delta/L``."""
    if not isinstance(nu, SmoothingDistribution):
        nu = SmoothingDistribution(tuple(nu))
    weights = nu.weights
    w = len(weights)
    total = 0.0
    for k in range(w - 1):
        head = math.fsum(weights[: k + 1])
        tail = math.fsum(weights[k + 1 :])
        total += head**dc + tail**dc
    return dv / dc * (w - 1 - total)


def design_rate(spec: CoupledEnsembleSpec) -> float:
    return 1.0 - spec.dv / spec.dc - rate_loss_delta(spec.dv, spec.dc, spec.nu) / spec.L


# --- flat key-value config schema -------------------------------------------

CONFIG_KEYS = ("dv", "dc", "nu", "L", "b1", "b2", "alpha_upper", "alpha_lower")


def _fmt(x: float) -> str:
    return repr(float(x))  # shortest round-trip repr, >= 12 significant digits when needed


def spec_to_config(spec: CoupledEnsembleSpec | TwoTypeSpec | ProtographChain) -> dict[str, str]:
    """Serialize a spec to the flat ``key -> string`` schema."""
    if isinstance(spec, CoupledEnsembleSpec):
        return {
            "dv": str(spec.dv),
            "dc": str(spec.dc),
            "nu": ",".join(_fmt(v) for v in spec.nu.weights),
            "L": str(spec.L),
        }
    if isinstance(spec, TwoTypeSpec):
        return {
            "dv": str(spec.dv),
            "alpha_upper": _fmt(spec.alpha_upper),
            "alpha_lower": _fmt(spec.alpha_lower),
            "L": str(spec.L),
        }
    if isinstance(spec, ProtographChain):
        return {"dv": str(spec.dv), "b1": str(spec.b1), "b2": str(spec.b2), "L": str(spec.L)}
    raise TypeError(f"cannot serialize {type(spec).__name__}")


def spec_from_config(config: Mapping[str, str]) -> CoupledEnsembleSpec | TwoTypeSpec | ProtographChain:
    """Inverse of :func:`spec_to_config`; the present keys decide the spec kind."""
    try:
        dv = int(config["dv"])
        L = int(config["L"])
        if "b1" in config or "b2" in config:
            return ProtographChain(dv, int(config["b1"]), int(config["b2"]), L)
        if "alpha_upper" in config or "alpha_lower" in config:
            return TwoTypeSpec(dv, float(config["alpha_upper"]), float(config["alpha_lower"]), L)
        nu = SmoothingDistribution(tuple(float(v) for v in str(config["nu"]).split(",")))
        return CoupledEnsembleSpec(dv, int(config["dc"]), nu, L)
    except KeyError as exc:
        raise EnsembleError(f"missing config key {exc.args[0]!r}") from None
    except ValueError as exc:
        if isinstance(exc, EnsembleError):
            raise
        raise EnsembleError(f"malformed config value: {exc}") from None


def read_config_file(path: str | Path) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    config: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise EnsembleError(f"{path}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = line.split("=", 1)
        config[key.strip()] = value.strip()
    return config


def write_config_file(path: str | Path, config: Mapping[str, str]) -> None:
    Path(path).write_text("".join(f"{k} = {v}\n" for k, v in config.items()))
