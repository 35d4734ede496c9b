"""Command-line front end.

Exit codes: 0 success, 1 failed criterion or diagnostic, 2 usage or
configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import warnings

import numpy as np

from . import io
from .acceptance import CRITERIA, run_criteria
from .config import OUT_DIR_ENV, RunConfig, load_config
from .errors import ConfigError, GalerkinOFBError, NotFound, UncertifiedDesign
from .fitting import fit_loglog_slope
from .sensors import (SensorPartition, check_partition, exhaustive_split_table,
                      minimal_sensor_lines, volume_threshold)
from .simulation import decay_fit, simulate_scenario
from .spectral import Rectangle, bly_lower_bound, enumerate_modes, weyl_ratio
from .synthesis import SWEEP_COLUMNS, design_controller, scaling_sweep

log = logging.getLogger("galerkin_ofb")

KIND_NAMES = {"open": "open_loop", "state": "state_feedback", "output": "output_feedback"}
SPECTRUM_COLUMNS = ["n", "jx", "ky", "lambda", "bly_bound", "weyl_ratio", "trace_norm_sq"]


class UsageError(Exception):
    pass


def _domain(cfg):
    return Rectangle(cfg.width, cfg.height, cfg.controlled_edge)


def _out_dir(cfg):
    os.makedirs(cfg.out_dir, exist_ok=True)
    return cfg.out_dir


def spectrum_rows(cfg):
    basis = enumerate_modes(_domain(cfg), cfg.M_modes)
    area = basis.domain.area
    tn = basis.trace_norm_sq
    return [{"n": n + 1, "jx": int(basis.jx[n]), "ky": int(basis.ky[n]), "lambda": float(basis.lam[n]),
             "bly_bound": bly_lower_bound(n + 1, 2, area), "weyl_ratio": weyl_ratio(basis, n + 1),
             "trace_norm_sq": float(tn[n])} for n in range(basis.count)]


def cmd_spectrum(cfg, args):
    rows = spectrum_rows(cfg)
    path = os.path.join(_out_dir(cfg), "spectrum.csv")
    io.write_table(path, SPECTRUM_COLUMNS, rows)
    r = rows[0]
    print(f"{len(rows)} modes written to {path}")
    print(f"first mode: (jx, ky) = ({r['jx']}, {r['ky']}), lambda = {r['lambda']:.10g}, "
          f"BLY bound = {r['bly_bound']:.10g}")
    return 0


def _parse_sweep(text):
    try:
        a, b = (int(v) for v in text.split(":"))
    except ValueError:
        raise UsageError(f"--sweep expects A:B with integers, got {text!r}") from None
    if a < 1 or b < a:
        raise UsageError(f"--sweep range must satisfy 1 <= A <= B, got {text!r}")
    return a, b


def cmd_design(cfg, args):
    if args.sweep:
        a, b = _parse_sweep(args.sweep)
        rows = scaling_sweep(range(a, b + 1), cfg.m, cfg.tail_count, _domain(cfg))
        path = os.path.join(_out_dir(cfg), f"sweep_{a}_{b}.csv")
        io.write_table(path, list(SWEEP_COLUMNS), rows)
        print(f"sweep N={a}..{b} at m={cfg.m} written to {path}")
        status = 0
        for col in ("norm_K", "zeta_sum", "zeta_weighted_sum", "pinv_norm_IBK"):
            try:
                fit = fit_loglog_slope(rows, "N", col)
                print(f"slope {col}: {fit.slope:+.4f} +- {fit.stderr:.4f}")
            except GalerkinOFBError as exc:
                print(f"slope {col}: unavailable ({exc})")
                status = 1
        if any(r["error"] for r in rows):
            print("some sweep rows failed; see the error column")
            status = 1
        return status
    d = design_controller(_domain(cfg), cfg.N, cfg.m, cfg.tail_count)
    with np.printoptions(precision=6, linewidth=120):
        print(f"N = {d.N}, m = {d.m}")
        print("K =")
        print(d.K)
    print(f"margin = {d.margin:.6g}")
    print(f"certified = {d.certified}")
    for key, val in d.diagnostics.items():
        print(f"  {key} = {val:.6g}" if isinstance(val, float) else f"  {key} = {val}")
    if not d.certified:
        print("design is NOT certified" + ("" if args.allow_uncertified else
                                           " (pass --allow-uncertified to accept)"))
    return 0 if d.certified or args.allow_uncertified else 1


def cmd_sensors(cfg, args):
    if cfg.L is None or cfg.L <= 0:
        raise ConfigError("[model] L must be positive for sensor placement")
    dom = _domain(cfg)
    choice = minimal_sensor_lines(cfg.L, dom)
    chk = check_partition(choice.partition, cfg.L)
    print(f"volume threshold (d=2, L={cfg.L:g}) = {volume_threshold(2, cfg.L):.6g}")
    print(f"minimal lines M = {choice.M}, split (M1, M2) = {choice.split}")
    print(f"vertical lines   = {list(choice.partition.vertical_lines)}")
    print(f"horizontal lines = {list(choice.partition.horizontal_lines)}")
    print(f"decay margin = {chk.margin:.6g}")
    table = exhaustive_split_table(choice.M + 1, dom)
    rows = [{"M1": s[0], "M2": s[1], "M": sum(s), "rhs": v, "satisfied": cfg.L < v}
            for s, v in sorted(table.items(), key=lambda kv: (sum(kv[0]), -kv[0][0]))]
    path = os.path.join(_out_dir(cfg), "sensors.csv")
    io.write_table(path, ["M", "M1", "M2", "rhs", "satisfied"], rows)
    configured = SensorPartition(dom, cfg.vertical_lines, cfg.horizontal_lines)
    cc = check_partition(configured, cfg.L)
    print(f"configured partition: condition {'satisfied' if cc.satisfied else 'NOT satisfied'} "
          f"(margin {cc.margin:.6g})")
    return 0


def _envelope_violations(kind, cfg, traj):
    """Violations of the applicable decay envelope, or None when none applies."""
    if kind == "state_feedback" and cfg.nonlinearity == "zero":
        env = np.exp(-(2 * cfg.m - 1) * traj.t) * traj.norm_p[0] ** 2
        return int(np.sum(traj.norm_p**2 > env * (1 + 1e-9)))
    if kind == "output_feedback" and cfg.L is not None:
        part = SensorPartition(_domain(cfg), cfg.vertical_lines, cfg.horizontal_lines)
        if not check_partition(part, cfg.L).satisfied:
            return None
        lam1 = part.first_eigenvalues
        env = traj.patch_norms[0] * np.exp(np.outer(traj.t, cfg.L - lam1))
        return int(np.sum(traj.patch_norms > env * (1 + 1e-9)))
    return None


def cmd_simulate(cfg, args):
    kind = KIND_NAMES[args.kind]
    traj = simulate_scenario(kind, cfg, keep_states=args.dump)
    out = _out_dir(cfg)
    path = os.path.join(out, f"trajectory_{args.kind}.csv")
    io.write_trajectory_csv(traj, path)
    if args.dump:
        io.write_state_dump(os.path.join(out, f"state_{args.kind}.bin"), traj.t, traj.states,
                            cfg.M_modes)
    summary = {"kind": kind, "samples": len(traj), "truncated": traj.truncated,
               "t_final": float(traj.t[-1]), "norm_z_final": float(traj.norm_z[-1]),
               "norm_z_ratio": float(traj.norm_z[-1] / traj.norm_z[0]) if traj.norm_z[0] else None}
    for col in ("norm_p", "norm_eps", "norm_z"):
        vals = getattr(traj, col)
        if np.all(vals == 0):
            continue
        try:
            fit = decay_fit(traj.t, vals)
            summary[f"rate_{col}"] = fit.rate
            summary[f"r2_{col}"] = fit.r_squared
        except GalerkinOFBError:
            summary[f"rate_{col}"] = None
    viol = _envelope_violations(kind, cfg, traj)
    summary["envelope_violations"] = viol
    summary["metadata"] = traj.metadata
    with open(os.path.join(out, f"summary_{args.kind}.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")
    print(f"trajectory written to {path}")
    for key in ("norm_z_ratio", "rate_norm_z", "rate_norm_eps", "envelope_violations"):
        if key in summary:
            print(f"{key} = {summary[key]}")
    if traj.truncated:
        print(f"integration TRUNCATED: {traj.metadata.get('failure')}")
        return 1
    if viol:
        return 1
    return 0


def cmd_verify(cfg, args):
    numbers = None
    if args.only:
        known = {c[0] for c in CRITERIA}
        try:
            numbers = [int(v) for v in args.only.split(",")]
        except ValueError:
            raise UsageError("--only expects a comma-separated list of criterion numbers") from None
        if not set(numbers) <= known:
            raise UsageError(f"unknown criteria {sorted(set(numbers) - known)}")
    results = run_criteria(numbers, seed=args.seed if args.seed is not None else cfg.seed)
    failed = [r.number for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} criteria passed"
          + (f"; failed: {failed}" if failed else ""))
    return 1 if failed else 0


COMMANDS = {"spectrum": cmd_spectrum, "design": cmd_design, "sensors": cmd_sensors,
            "simulate": cmd_simulate, "verify": cmd_verify}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="INI run configuration (defaults if omitted)")
    common.add_argument("--out", metavar="DIR", help="output directory (overrides config and environment)")
    common.add_argument("--seed", type=int, help="random seed (overrides config)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="galerkin-ofb", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("spectrum", parents=[common], help="eigenvalue table with bounds")
    p = sub.add_parser("design", parents=[common], help="controller gain and stability margin")
    p.add_argument("--sweep", metavar="A:B", help="scaling sweep over N = A..B")
    p.add_argument("--allow-uncertified", action="store_true",
                   help="exit 0 even when the design is not certified")
    sub.add_parser("sensors", parents=[common], help="minimal measurement-line placement")
    p = sub.add_parser("simulate", parents=[common], help="run one scenario")
    p.add_argument("--kind", choices=sorted(KIND_NAMES), default="output")
    p.add_argument("--dump", action="store_true", help="also write the full modal state as binary")
    p = sub.add_parser("verify", parents=[common], help="run the acceptance suite")
    p.add_argument("--only", metavar="LIST", help="comma-separated criterion numbers")
    return parser


def _resolve_config(args):
    cfg = load_config(args.config) if args.config else RunConfig()
    if not args.config and os.environ.get(OUT_DIR_ENV):
        cfg.out_dir = os.environ[OUT_DIR_ENV]
    if args.out:
        cfg.out_dir = args.out
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    warnings.simplefilter("default", UncertifiedDesign)
    try:
        cfg = _resolve_config(args)
        return COMMANDS[args.command](cfg, args)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NotFound as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except GalerkinOFBError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
