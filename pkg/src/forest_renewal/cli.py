"""Command line front end: analyze, simulate, verify, convergence.

Every output file carries the config digest, the tool version and the seed,
and contains no timestamps, so reruns with the same inputs are byte-identical.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .config import ConfigError, HistorySpec, ModelConfig, load_config
from .diagnostics import (Tolerances, check_attractor_box, check_classification, check_envelope,
                          check_positivity, check_squeeze, check_ultimate_bound, check_volterra,
                          convergence_study, envelope_for, history_max, majorant_domination,
                          monotone_pair_battery, ordered_pairs, random_history, run_parallel)
from .equilibrium import Case, UnsupportedRegimeError, classify
from .model import ModelError, weighted_norm
from .solver import SolverConfig, StepSizeError, solve_ivp

log = logging.getLogger("forest_renewal")

DEFAULT_SCENARIOS = ({"constant": 0.1}, {"constant": 1.0},
                     {"oscillation": (1.0, 0.5, 1.0)})


def _meta(conf: ModelConfig, command: str, seed: int) -> dict:
    return {"tool": "forest-renewal", "version": __version__, "command": command,
            "config": conf.source, "config_sha256": conf.digest, "seed": seed}


def _clean(obj):
    """JSON-safe copy: numpy scalars to floats, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if hasattr(obj, "value") and isinstance(getattr(obj, "value"), str):
        return obj.value
    return obj


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(_clean(payload), indent=2, sort_keys=True) + "\n")


def _write_table(path: Path, meta: dict, header: list, columns: list) -> None:
    with open(path, "w", newline="") as fh:
        for k in sorted(meta):
            fh.write(f"# {k}={meta[k]}\n")
        w = csv.writer(fh)
        w.writerow(header)
        for row in zip(*columns):
            w.writerow([f"{v:.11e}" for v in row])


def _parse_tols(items) -> dict:
    out = {}
    for item in items or []:
        key, sep, val = item.partition("=")
        if not sep:
            raise ValueError(f"--tol expects KEY=VALUE, got {item!r}")
        try:
            out[key.strip()] = float(val)
        except ValueError:
            raise ValueError(f"--tol {key}: {val!r} is not a number") from None
    return out


def _solver_config(conf: ModelConfig, args, tols: dict, h=None, T=None) -> SolverConfig:
    """Solver settings: command line over config file; ``trunc_tol`` may come from --tol."""
    h = args.h if args.h is not None else (h or conf.solver.h)
    T = args.T if args.T is not None else (T or conf.solver.T)
    trunc = tols.pop("trunc_tol", conf.solver.trunc_tol)
    Tolerances().override(**tols)  # reject unknown keys early
    return SolverConfig(h=h, T=T, trunc_tol=trunc)


def _check_step(params, h: float) -> None:
    c = 0.5 * h * params.beta_at_xm
    if c >= 1:
        raise StepSizeError(f"(h/2) beta(x_m) = {c:.4g} >= 1; the step must satisfy h < "
                            f"{2 / params.beta_at_xm:.4g}")


# --- commands ---------------------------------------------------------------
def cmd_analyze(conf: ModelConfig, args, out: Path) -> int:
    p = conf.params
    phi = conf.history.build(conf.solver.h if args.h is None else args.h)
    rep = classify(p, (weighted_norm(phi, p.rho), weighted_norm(phi, p.mu)))
    _write_json(out / "analysis.json", {"meta": _meta(conf, "analyze", args.seed), "report": rep.to_dict()})
    bits = [f"case={rep.case.value}", f"R0={rep.R0:.10g}"]
    if rep.b_star is not None:
        bits.append(f"b_star={rep.b_star:.10g}")
    if rep.theta2 is not None:
        bits.append(f"theta2={rep.theta2:.10g}")
    print(" ".join(bits))
    return 0


def cmd_simulate(conf: ModelConfig, args, out: Path, tols: dict) -> int:
    p = conf.params
    cfg = _solver_config(conf, args, tols)
    _check_step(p, cfg.h)
    phi = conf.history.build(cfg.h)
    path = solve_ivp(p, phi, cfg)
    meta = _meta(conf, "simulate", args.seed) | {"h": cfg.h, "T": cfg.T}
    _write_table(out / "path.csv", meta, ["t", "b", "P", "residual"],
                 [path.t, path.b, path.P, path.residual])
    summary = {"meta": meta, "b_T": float(path.b[-1]), "b_0": float(path.b[0]),
               "clamped": path.clamped, "max_residual": path.max_residual}
    if p.beta_at_xm < p.mu:
        try:
            env = envelope_for(p, phi)
        except UnsupportedRegimeError as exc:
            summary["envelope"] = f"not available: {exc}"
        else:
            _write_table(out / "envelope.csv", meta, ["t", "b_envelope", "b_bound"],
                         [path.t, env.b_envelope(path.t), np.full_like(path.t, env.b_bound)])
            summary["envelope"] = env.to_dict()
    _write_json(out / "simulate.json", summary)
    print(f"b(T={cfg.T:g}) = {path.b[-1]:.10g}  clamped={path.clamped}")
    return 0


def run_verify(conf: ModelConfig, cfg: SolverConfig, tol: Tolerances, seed: int,
               workers: Optional[int] = None, solver=solve_ivp) -> tuple:
    """The default certification battery; returns (report, list of results)."""
    p = conf.params
    _check_step(p, cfg.h)
    rep = classify(p)
    specs = [conf.history] + list(conf.verify.scenarios)
    if not conf.verify.scenarios:
        for d in DEFAULT_SCENARIOS:
            kind, val = next(iter(d.items()))
            specs.append(HistorySpec(conf.history.S, kind, val))
    histories = [s.build(cfg.h) for s in specs]
    paths = run_parallel(lambda phi: solver(p, phi, cfg), histories, workers)

    results = []
    for i, (phi, path) in enumerate(zip(histories, paths)):
        tag = f"#{i}"
        env = None
        if p.beta_at_xm < p.mu:
            try:
                env = envelope_for(p, phi)
            except UnsupportedRegimeError:
                env = None
        batch = []
        if env is not None:
            batch.append(check_envelope(path, env, tol=tol))
        batch.append(check_ultimate_bound(path, env, tol=tol))
        batch.append(check_attractor_box(path, rep.theta2 if rep.case is Case.ConvergentA else None,
                                         rep.b_star, tol=tol))
        seg = path.b[int(tol.burn_in * (len(path.b) - 1)):]
        if rep.case is not Case.UnboundedB:
            floor = tol.extinct * max(1.0, history_max(phi))
            batch.append(check_squeeze(float(seg.min()), float(seg.max()), p, rep.b_star, tol=tol,
                                       zero_floor=floor))
        batch.append(check_positivity(path, p))
        batch.append(check_volterra(path, p, phi, cfg.trunc_tol, tol=tol))
        results += [replace(r, check=f"{r.check}{tag}") for r in batch]
    # the classification battery reuses the same scenarios
    results += [replace(check_classification(path, rep, tol), check=f"classification#{i}")
                for i, path in enumerate(paths)]

    rng = np.random.default_rng(seed)
    pair_cfg = replace(cfg, T=conf.verify.pair_T)
    scale = rep.b_star or 1.0
    pairs = ordered_pairs(rng, conf.verify.pairs, conf.history.S, cfg.h, scale)
    results.append(monotone_pair_battery(p, pairs, pair_cfg, tol, workers, solver))
    scen = [random_history(rng, conf.history.S, cfg.h, scale)
            for _ in range(conf.verify.majorant_scenarios)]
    results.append(majorant_domination(p, scen, pair_cfg, tol, workers, solver))
    return rep, results


def cmd_verify(conf: ModelConfig, args, out: Path, tols: dict, solver=solve_ivp) -> int:
    cfg = _solver_config(conf, args, tols)
    tol = Tolerances().override(**tols)
    rep, results = run_verify(conf, cfg, tol, args.seed, args.workers, solver)
    n_fail = sum(r.failed for r in results)
    n_skip = sum(r.verdict == "skipped" for r in results)
    payload = {"meta": _meta(conf, "verify", args.seed) | {"h": cfg.h, "T": cfg.T},
               "tolerances": tol.__dict__, "case": rep.case.value,
               "checks": [r.to_dict() for r in results],
               "summary": {"total": len(results), "failed": n_fail, "skipped": n_skip}}
    _write_json(out / "verify.json", payload)
    for r in results:
        extra = f"  ({r.reason})" if r.reason else ""
        if r.failed:
            w = r.witness
            extra += f"  witness t={w.t:.6g} lhs={w.lhs:.6g} rhs={w.rhs:.6g}"
        print(f"{r.verdict.upper():7s} {r.check}{extra}")
    print(f"{len(results)} checks, {n_fail} failed, {n_skip} skipped")
    return 1 if n_fail else 0


def cmd_convergence(conf: ModelConfig, args, out: Path, tols: dict) -> int:
    # the reference solve runs at h / (8 * 2^(levels-1)), so keep the defaults modest
    cfg = _solver_config(conf, args, tols, h=0.08, T=10.0)
    _check_step(conf.params, cfg.h)
    if args.levels < 3:
        raise ValueError("--levels must be at least 3")
    rows = convergence_study(conf.params, conf.history.build, cfg, levels=args.levels)
    meta = _meta(conf, "convergence", args.seed) | {"T": cfg.T}
    with open(out / "convergence.csv", "w", newline="") as fh:
        for k in sorted(meta):
            fh.write(f"# {k}={meta[k]}\n")
        w = csv.writer(fh)
        w.writerow(["h", "error", "ratio"])
        for r in rows:
            w.writerow([f"{r.h:.11e}", f"{r.error:.11e}", "" if r.ratio is None else f"{r.ratio:.6f}"])
    for r in rows:
        print(f"h={r.h:<10.6g} error={r.error:.4e} ratio={'n/a' if r.ratio is None else f'{r.ratio:.3f}'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="forest-renewal", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, helptext in [("analyze", "reproduction numbers, equilibrium and case"),
                           ("simulate", "solve the initial value problem and write the path"),
                           ("verify", "run the certification battery"),
                           ("convergence", "self-convergence study of the time stepper")]:
        sp = sub.add_parser(name, help=helptext)
        sp.add_argument("--config", required=True, help="TOML model file")
        sp.add_argument("--h", type=float, default=None,
                        help="time step (overrides [solver].h; convergence: coarsest step, default 0.08)")
        sp.add_argument("--T", type=float, default=None,
                        help="horizon (overrides [solver].T; convergence default 10)")
        sp.add_argument("--out", default=".", help="output directory")
        sp.add_argument("--seed", type=int, default=0, help="seed for generated scenarios")
        sp.add_argument("--tol", action="append", default=[], metavar="KEY=VALUE",
                        help="tolerance override, repeatable (see diagnostics.Tolerances)")
        if name == "verify":
            sp.add_argument("--workers", type=int, default=1, help="threads for scenario batteries")
        if name == "convergence":
            sp.add_argument("--levels", type=int, default=4, help="number of halvings of h")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    try:
        conf = load_config(args.config)
        tols = _parse_tols(args.tol)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "analyze":
            return cmd_analyze(conf, args, out)
        if args.command == "simulate":
            return cmd_simulate(conf, args, out, tols)
        if args.command == "verify":
            return cmd_verify(conf, args, out, tols)
        return cmd_convergence(conf, args, out, tols)
    except (ConfigError, StepSizeError, ModelError, KeyError, ValueError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
