"""Command-line front end.

Every command accepts ``--config FILE`` (flat ``key = value`` lines, keys
named like the long flags with dashes or underscores); flags override the
file.  Exit codes: 0 success, 1 reproduced table out of tolerance, 2 invalid
configuration, 3 computation fault.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .de_engine import DELTA_CONV, MAX_ITERS, TOL, ComputationFault, SingleTypeSystem, bp_threshold, run_de
from .dynamics import DISPLACEMENT, NoWaveError, WindowConfig, estimate_speed, speed_contours, windowed_decode, windowed_threshold
from .ensembles import (
    CoupledEnsembleSpec,
    EnsembleError,
    SmoothingDistribution,
    TwoTypeSpec,
    build_protograph_chain,
    design_rate,
    rate_loss_delta,
    read_config_file,
)
from .multitype import ProtographSystem, TwoTypeSystem
from .optimize import SWEEP_TOL, optimize_alpha, optimize_nu3, optimize_two_type, protograph_search
from .reports import fmt_value, reproduce_table, sweep_rows, sweep_summary, table_rows, to_csv, to_json

EXIT_OK, EXIT_TABLE, EXIT_CONFIG, EXIT_FAULT = 0, 1, 2, 3

COMMANDS = (
    "threshold",
    "rate-loss",
    "speed",
    "contours",
    "windowed",
    "optimize-alpha",
    "optimize-nu3",
    "optimize-two-type",
    "proto-search",
    "reproduce-table",
)

DEFAULTS: dict[str, Any] = {
    "L": 100,
    "tol": TOL,
    "delta_conv": DELTA_CONV,
    "max_iters": MAX_ITERS,
    "D": DISPLACEMENT,
    "format": "json",
    "sweep_tol": SWEEP_TOL,
}

# key -> parser for values read from a config file
_TYPES: dict[str, Any] = {
    "dv": int,
    "dc": int,
    "L": int,
    "b1": int,
    "b2": int,
    "alpha": float,
    "alpha_upper": float,
    "alpha_lower": float,
    "epsilon": float,
    "tol": float,
    "sweep_tol": float,
    "delta_conv": float,
    "max_iters": int,
    "D": int,
    "W_D": int,
    "I": int,
    "grid_step": float,
    "dv_min": int,
    "dv_max": int,
    "workers": int,
    "nu": str,
    "alphas": str,
    "epsilons": str,
    "family": str,
    "table": str,
    "rows": str,
    "out": str,
    "format": str,
    "no_refine": lambda s: str(s).lower() in ("1", "true", "yes", "on"),
}


class ConfigError(ValueError):
    pass


def _positive(kind):
    def parse(text: str):
        try:
            value = kind(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
        if value <= 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {text!r}")
        return value

    return parse


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="coupledde", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True
    S = argparse.SUPPRESS

    common = argparse.ArgumentParser(add_help=False, argument_default=S)
    common.add_argument("--config", help="flat key = value file; flags override it")
    common.add_argument("--out", help="output file (default: stdout)")
    common.add_argument("--format", choices=("json", "csv"))
    common.add_argument("--tol", type=_positive(float), help=f"bisection tolerance (default {TOL})")
    common.add_argument("--delta-conv", dest="delta_conv", type=_positive(float))
    common.add_argument("--max-iters", dest="max_iters", type=_positive(int))
    common.add_argument("--workers", type=_positive(int), help="parallel workers (env COUPLEDDE_WORKERS)")

    ens = argparse.ArgumentParser(add_help=False, argument_default=S)
    ens.add_argument("--dv", type=_positive(int))
    ens.add_argument("--dc", type=_positive(int))
    ens.add_argument("--nu", help="comma-separated smoothing weights, e.g. 0.359,0.641")
    ens.add_argument("--alpha", type=float, help="shorthand for --nu alpha,1-alpha")
    ens.add_argument("--L", type=_positive(int))
    ens.add_argument("--b1", type=int)
    ens.add_argument("--b2", type=int)
    ens.add_argument("--alpha-upper", dest="alpha_upper", type=float)
    ens.add_argument("--alpha-lower", dest="alpha_lower", type=float)

    def add(name, help_, parents=(common, ens)):
        return sub.add_parser(name, help=help_, parents=list(parents), argument_default=S)

    add("threshold", "BP threshold of a random, two-type or protograph ensemble")
    add("rate-loss", "rate loss and design rate of a random ensemble")
    p = add("speed", "decoding-wave speed at one channel value")
    p.add_argument("--epsilon", type=float)
    p.add_argument("--D", type=_positive(int))
    p = add("contours", "wave speed over an (alpha, epsilon) grid")
    p.add_argument("--alphas", help="list a,b,c or range start:stop:step")
    p.add_argument("--epsilons", help="list a,b,c or range start:stop:step")
    p.add_argument("--D", type=_positive(int))
    p = add("windowed", "windowed-decoding threshold, or success at --epsilon")
    p.add_argument("--W-D", dest="W_D", type=_positive(int))
    p.add_argument("--I", type=_positive(int))
    p.add_argument("--epsilon", type=float)
    for name in ("optimize-alpha", "optimize-nu3", "optimize-two-type"):
        p = add(name, f"grid search ({name.split('-', 1)[1]})")
        p.add_argument("--grid-step", dest="grid_step", type=_positive(float))
        p.add_argument("--sweep-tol", dest="sweep_tol", type=_positive(float))
        p.add_argument("--no-refine", dest="no_refine", action="store_true")
    p = add("proto-search", "exhaustive elementary-segment search")
    p.add_argument("--dv-min", dest="dv_min", type=_positive(int))
    p.add_argument("--dv-max", dest="dv_max", type=_positive(int))
    p.add_argument("--sweep-tol", dest="sweep_tol", type=_positive(float))
    p = add("reproduce-table", "recompute a published table and report deviations", parents=(common,))
    p.add_argument("--table", choices=("I", "II", "III", "IV"))
    p.add_argument("--rows", help="restrict rows: dv list (I-III) or dv:b1:b2 list (IV)")
    p.add_argument("--L", type=_positive(int))
    return parser


def resolve_config(args: argparse.Namespace) -> dict[str, Any]:
    """Defaults, then config file, then explicit flags."""
    config = dict(DEFAULTS)
    flags = {k: v for k, v in vars(args).items() if k not in ("config", "verbose")}
    if getattr(args, "config", None):
        try:
            raw = read_config_file(args.config)
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from None
        for key, text in raw.items():
            name = key.replace("-", "_")
            if name not in _TYPES:
                raise ConfigError(f"unknown config key {key!r} in {args.config}")
            try:
                config[name] = _TYPES[name](text)
            except ValueError:
                raise ConfigError(f"config key {key!r}: malformed value {text!r}") from None
    config.update(flags)
    for key in ("tol", "delta_conv", "max_iters", "D", "sweep_tol"):
        if config[key] <= 0:
            raise ConfigError(f"{key} must be positive, got {config[key]}")
    return config


def _require(config: dict, *keys: str) -> None:
    missing = [k for k in keys if config.get(k) is None]
    if missing:
        flags = ", ".join("--" + k.replace("_", "-") for k in missing)
        raise ConfigError(f"{config['command']}: missing required {flags}")


def _float_list(text: str, name: str) -> list[float]:
    try:
        if ":" in text:
            start, stop, step = (float(t) for t in text.split(":"))
            n = int(round((stop - start) / step))
            return [round(start + k * step, 12) for k in range(n + 1)]
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise ConfigError(f"--{name}: malformed number list {text!r}") from None


def _nu(config: dict) -> SmoothingDistribution:
    if config.get("nu") is not None:
        weights = _float_list(str(config["nu"]), "nu")
        if abs(sum(weights) - 1.0) > 1e-3:
            raise ConfigError(f"--nu weights must sum to 1, got {sum(weights)}")
        return SmoothingDistribution.normalized(weights)
    if config.get("alpha") is not None:
        return SmoothingDistribution.from_alpha(config["alpha"])
    raise ConfigError(f"{config['command']}: missing required --nu (or --alpha)")


def make_system(config: dict):
    """Random, two-type or protograph system, decided by which keys are present."""
    _require(config, "dv")
    dv, L = config["dv"], config["L"]
    if config.get("b1") is not None or config.get("b2") is not None:
        _require(config, "b1", "b2")
        chain = build_protograph_chain(dv, config["b1"], config["b2"], L)
        return ProtographSystem(chain), {"dv": dv, "b1": chain.b1, "b2": chain.b2, "L": L}
    if config.get("alpha_upper") is not None or config.get("alpha_lower") is not None:
        _require(config, "alpha_upper", "alpha_lower")
        spec = TwoTypeSpec(dv, config["alpha_upper"], config["alpha_lower"], L)
        return TwoTypeSystem(spec), {"dv": dv, "alpha_upper": spec.alpha_upper, "alpha_lower": spec.alpha_lower, "L": L}
    spec = CoupledEnsembleSpec(dv, config.get("dc") or 2 * dv, _nu(config), L)
    return SingleTypeSystem(spec), {"dv": spec.dv, "dc": spec.dc, "nu": list(spec.nu.weights), "L": L}


def _alpha_family(dv: int, dc: int, L: int):
    from functools import partial

    return partial(_alpha_system, dv, dc, L)


def _alpha_system(dv: int, dc: int, L: int, alpha: float) -> SingleTypeSystem:
    return SingleTypeSystem(CoupledEnsembleSpec(dv, dc, SmoothingDistribution.from_alpha(alpha), L))


def run_command(config: dict) -> tuple[int, str]:
    """Execute a resolved config; returns ``(exit status, output text)``."""
    cmd = config["command"]
    fmt = config["format"]
    num = {k: config[k] for k in ("tol", "delta_conv", "max_iters")}

    if cmd == "threshold":
        system, params = make_system(config)
        res = bp_threshold(system, **num)
        payload = {"parameters": params, "threshold": res.threshold, "bracket_width": res.bracket_width, "runs": res.runs}
        if fmt == "csv":
            return EXIT_OK, to_csv(["threshold", "bracket_width", "runs"], [[fmt_value(res.threshold), f"{res.bracket_width:.3g}", res.runs]], config)
        return EXIT_OK, to_json(payload, config)

    if cmd == "rate-loss":
        _require(config, "dv")
        nu = _nu(config)
        dc = config.get("dc") or 2 * config["dv"]
        delta = rate_loss_delta(config["dv"], dc, nu)
        rate = design_rate(CoupledEnsembleSpec(config["dv"], dc, nu, max(config["L"], nu.w)))
        if fmt == "csv":
            return EXIT_OK, to_csv(["delta", "design_rate"], [[fmt_value(delta, "delta"), f"{rate:.6g}"]], config)
        return EXIT_OK, to_json({"delta": delta, "design_rate": rate, "nu": list(nu.weights)}, config)

    if cmd == "speed":
        _require(config, "epsilon")
        system, params = make_system(config)
        try:
            est = estimate_speed(system, config["epsilon"], D=config["D"], delta_conv=config["delta_conv"], max_iters=config["max_iters"])
        except NoWaveError as exc:
            payload = {"parameters": params, "status": "no-wave", "detail": str(exc)}
            return EXIT_OK, to_json(payload, config)
        payload = {"parameters": params, "status": "ok", "v": est.v, "D": est.D, "T_D": est.T_D, "burn_in": est.burn_in, "side": est.side}
        if fmt == "csv":
            return EXIT_OK, to_csv(["param", "epsilon", "value", "status"], [[config.get("alpha", ""), config["epsilon"], fmt_value(est.v), "ok"]], config)
        return EXIT_OK, to_json(payload, config)

    if cmd == "contours":
        _require(config, "dv", "alphas", "epsilons")
        dv = config["dv"]
        dc = config.get("dc") or 2 * dv
        points = speed_contours(
            _alpha_family(dv, dc, config["L"]),
            _float_list(config["alphas"], "alphas"),
            _float_list(config["epsilons"], "epsilons"),
            D=config["D"],
            max_iters=config["max_iters"],
            workers=config.get("workers"),
        )
        rows = [[f"{p.param:.12g}", f"{p.epsilon:.12g}", fmt_value(p.v), p.status] for p in points]
        if fmt == "json":
            return EXIT_OK, to_json({"points": [dict(zip(("param", "epsilon", "value", "status"), (p.param, p.epsilon, p.v, p.status))) for p in points]}, config)
        return EXIT_OK, to_csv(["param", "epsilon", "value", "status"], rows, config)

    if cmd == "windowed":
        _require(config, "W_D", "I")
        system, params = make_system(config)
        cfg = WindowConfig(config["W_D"], config["I"])
        if config.get("epsilon") is not None:
            rep = windowed_decode(system, config["epsilon"], cfg, config["delta_conv"])
            payload = {"parameters": params, "epsilon": config["epsilon"], "success": rep.converged, "max_erasure": rep.max_residual}
            return EXIT_OK, to_json(payload, config)
        res = windowed_threshold(system, cfg, config["tol"], config["delta_conv"])
        if fmt == "csv":
            row = [params.get("nu", ""), fmt_value(res.threshold), fmt_value(res.threshold), "ok"]
            return EXIT_OK, to_csv(["param", "epsilon", "value", "status"], [row], config)
        return EXIT_OK, to_json({"parameters": params, "window": {"W_D": cfg.W_D, "I": cfg.I}, "threshold": res.threshold}, config)

    if cmd in ("optimize-alpha", "optimize-nu3", "optimize-two-type"):
        _require(config, "dv")
        kw = dict(
            L=config["L"],
            tol=config["tol"],
            sweep_tol=config["sweep_tol"],
            refine=not config.get("no_refine", False),
            delta_conv=config["delta_conv"],
            max_iters=config["max_iters"],
            workers=config.get("workers"),
        )
        if config.get("grid_step") is not None:
            kw["grid_step"] = config["grid_step"]
        if cmd == "optimize-alpha":
            result, names = optimize_alpha(config["dv"], config.get("dc"), **kw), ["alpha"]
        elif cmd == "optimize-nu3":
            result, names = optimize_nu3(config["dv"], config.get("dc"), **kw), ["nu1", "nu2"]
        else:
            result, names = optimize_two_type(config["dv"], **kw), ["alpha_upper", "alpha_lower"]
        return EXIT_OK, _sweep_output(result, names, config)

    if cmd == "proto-search":
        lo = config.get("dv_min") or config.get("dv")
        hi = config.get("dv_max") or lo
        if lo is None:
            raise ConfigError("proto-search: missing required --dv-min (or --dv)")
        results = protograph_search(
            range(lo, hi + 1),
            L=config["L"],
            tol=config["sweep_tol"],
            final_tol=config["tol"],
            delta_conv=config["delta_conv"],
            max_iters=config["max_iters"],
            workers=config.get("workers"),
        )
        if fmt == "csv":
            rows = [[dv, *e.params, fmt_value(e.threshold), e.status] for dv, r in results.items() for e in r.entries]
            return EXIT_OK, to_csv(["dv", "b1", "b2", "threshold", "status"], rows, config)
        payload = {str(dv): sweep_summary(r, ["b1", "b2"]) for dv, r in results.items()}
        return EXIT_OK, to_json({"search": payload}, config)

    if cmd == "reproduce-table":
        _require(config, "table")
        rows = _table_rows(config)
        cells = reproduce_table(config["table"], rows=rows, L=config["L"], workers=config.get("workers"), **num)
        status = EXIT_OK if all(c.ok for c in cells) else EXIT_TABLE
        header, body = table_rows(cells)
        if fmt == "json":
            return status, to_json({"table": config["table"], "cells": [dict(zip(header, r)) for r in body]}, config)
        return status, to_csv(header, body, config)

    raise ConfigError(f"unknown command {cmd!r}; choose one of {', '.join(COMMANDS)}")


def _table_rows(config: dict):
    text = config.get("rows")
    if not text:
        return None
    try:
        if config["table"] == "IV":
            return [tuple(int(v) for v in item.split(":")) for item in text.split(",")]
        return [int(v) for v in text.split(",")]
    except ValueError:
        raise ConfigError(f"--rows: malformed row list {text!r}") from None


def _sweep_output(result, names, config) -> str:
    if config["format"] == "csv":
        header, rows = sweep_rows(result, names)
        return to_csv(header, rows, config)
    return to_json(sweep_summary(result, names), config)


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        config = resolve_config(args)
        status, text = run_command(config)
    except (ConfigError, EnsembleError) as exc:
        print(f"coupledde: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ComputationFault as exc:
        print(f"coupledde: computation fault: {exc}", file=sys.stderr)
        return EXIT_FAULT
    out = config.get("out")
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)
    return status


if __name__ == "__main__":
    sys.exit(main())
