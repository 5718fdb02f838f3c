"""Command-line front end: ``orbitlab <command> --config cfg.json --out result.csv``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure, 4 failed
``--assert`` check.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, acceptance
from . import orbit_count as oc
from . import ruelle_bounds as rb
from . import thurston_coding as tc
from .potential import PotentialError, bundled_example, load_potential
from .pressure import FD_STEP_FIRST, FD_STEP_SECOND, build_profile, find_root, general_pressure
from .sft_core import SftError, check, load_sft

SCHEMA_VERSION = 1
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_ASSERT = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


class AssertionFailed(RuntimeError):
    pass


def fmt(x) -> str:
    return f"{x:.17g}" if isinstance(x, float) else str(x)


def _resolve(base: Path, ref):
    return ref if isinstance(ref, dict) else base / ref


def load_config(path) -> tuple:
    path = Path(path)
    try:
        cfg = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    version = cfg.get("schema", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema version {version}")
    return cfg, path.parent


def system_from(cfg: dict, base: Path):
    """(sft, potential) from ``example`` or from ``sft`` + ``potential`` entries."""
    try:
        if "example" in cfg:
            return bundled_example(cfg["example"])
        if "sft" not in cfg or "potential" not in cfg:
            raise ConfigError("config needs 'example' or both 'sft' and 'potential'")
        sft = check(load_sft(_resolve(base, cfg["sft"])))
        return sft, load_potential(sft, _resolve(base, cfg["potential"]))
    except FileNotFoundError as exc:
        raise ConfigError(f"missing file: {exc.filename}") from None
    except (SftError, PotentialError, KeyError, json.JSONDecodeError) as exc:
        raise ConfigError(str(exc)) from None


def _grid(spec, name: str) -> list:
    if isinstance(spec, list):
        vals = [float(v) for v in spec]
    elif isinstance(spec, dict):
        try:
            if "step" in spec:
                count = int(round((spec["stop"] - spec["start"]) / spec["step"])) + 1
                vals = [spec["start"] + i * spec["step"] for i in range(max(count, 0))]
            else:
                vals = list(np.linspace(spec["start"], spec["stop"], int(spec["num"])))
        except KeyError as exc:
            raise ConfigError(f"grid {name!r} lacks {exc.args[0]!r}") from None
    else:
        raise ConfigError(f"grid {name!r} must be a list or a start/stop spec")
    if not vals:
        raise ConfigError(f"grid {name!r} is empty")
    return [float(v) for v in vals]


def _positive(cfg: dict, key: str, default):
    value = cfg.get(key, default)
    if not isinstance(value, (int, float)) or not value > 0:
        raise ConfigError(f"{key} must be positive")
    return value


def write_rows(path: Path, header: list, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])


def write_summary(out: Path, summary: dict) -> Path:
    path = out.with_suffix(".summary.json")
    path.write_text(json.dumps(summary, indent=1, sort_keys=True, default=_jsonable) + "\n")
    return path


def _jsonable(x):
    if isinstance(x, complex):
        return [x.real, x.imag]
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, tuple):
        return list(x)
    raise TypeError(f"not serializable: {type(x).__name__}")


def _meta(cmd: str, args, extra: dict | None = None) -> dict:
    meta = {"command": cmd, "version": __version__, "threads": args.threads, "schema": SCHEMA_VERSION}
    meta.update(extra or {})
    return meta


def cmd_pressure(cfg, base, args) -> dict:
    sft, p = system_from(cfg, base)
    ts = _grid(cfg.get("t", {"start": -3.0, "stop": 3.0, "num": 41}), "t")
    rows = []
    for t in ts:
        h1, h2 = FD_STEP_FIRST, FD_STEP_SECOND
        pt = general_pressure(sft, p, t)
        d1 = (general_pressure(sft, p, t + h1) - general_pressure(sft, p, t - h1)) / (2 * h1)
        d2 = (general_pressure(sft, p, t + h2) - 2 * pt + general_pressure(sft, p, t - h2)) / h2 ** 2
        rows.append((t, pt, d1, d2))
    write_rows(args.out, ["t", "P", "dP_fd", "d2P_fd"], rows)
    summary = _meta("pressure", args, {"points": len(rows)})
    if cfg.get("profile", True):
        prof = build_profile(sft, p)
        summary["profile"] = prof.summary()
        if args.check:
            _require(abs(prof.drift.gibbs - prof.drift.fd) <= 1e-6, "drift routes disagree")
            _require(abs(prof.variance.gibbs - prof.variance.fd) <= 1e-6, "variance routes disagree")
    return summary


def cmd_profile(cfg, base, args) -> dict:
    sft, p = system_from(cfg, base)
    prof = build_profile(sft, p, int(cfg.get("n_drift", 16)), tuple(cfg.get("variance_ns", (12, 16, 20))))
    summary = _meta("profile", args, {"profile": prof.summary()})
    lines = [f"{k} = {fmt(v)}" for k, v in sorted(prof.summary().items()) if not isinstance(v, dict)]
    args.out.parent.mkdir(parents=True, exist_ok=True)
    args.out.write_text("\n".join(lines) + "\n")
    return summary


def _schedule(cfg: dict) -> oc.IntervalSchedule:
    spec = cfg.get("schedule", {"kind": "constant", "c": 1.0})
    try:
        return oc.IntervalSchedule(spec.get("kind", "constant"), float(spec.get("c", 1.0)),
                                   float(spec.get("gamma", 0.0)), float(spec.get("p", 0.0)))
    except (ValueError, AttributeError) as exc:
        raise ConfigError(f"schedule: {exc}") from None


def cmd_count(cfg, base, args) -> dict:
    sft, p = system_from(cfg, base)
    schedule = _schedule(cfg)
    n_min, n_max = int(cfg.get("n_min", 16)), int(cfg.get("n_max", 24))
    if n_min < 1 or n_max < n_min:
        raise ConfigError("need 1 <= n_min <= n_max")
    eps = cfg.get("epsilon")
    mollifier = oc.Mollifier(float(eps)) if eps is not None else None
    cap = int(cfg.get("cap", 2 ** 26))
    prof = build_profile(sft, p)
    report = oc.count_report(sft, p, prof, schedule, mollifier, range(n_min, n_max + 1), cap, args.threads)
    report.write_csv(args.out)
    band = oc.ratio_band_check(report, tuple(cfg.get("band", (0.5, 2.0))))
    summary = _meta("count", args, {"report": report.metadata, "band": band,
                                    "runtime": sum(r.runtime for r in report.rows)})
    if args.check:
        _require(band["in_band"], "ratio outside band")
    return summary


def cmd_verify_ruelle(cfg, base, args) -> dict:
    sft, p = system_from(cfg, base)
    s0 = find_root(sft, p)
    eps = _positive(cfg, "epsilon", 0.1)
    b0 = _positive(cfg, "b0", 1.0)
    coarse, fine = rb.default_grids(s0, float(cfg.get("a0_factor", 2.0)), b0, int(cfg.get("n_max", 10)))
    summary = _meta("verify-ruelle", args, {"s0": s0, "epsilon": eps, "fits": {}})
    header = ["param", "re_s", "im_s", "lhs", "rhs_without_C", "ratio"]
    stable = True
    for fn in (rb.fit_cylinder_bound, rb.fit_remainder_bound, rb.fit_partition_bound):
        fits = {"coarse": fn(sft, p, eps, coarse, b0=b0), "fine": fn(sft, p, eps, fine, b0=b0)}
        bound = fits["fine"].bound_id
        write_rows(args.out.with_name(f"{args.out.stem}_{bound}.csv"), header,
                   [(r["param"], r["s"].real, r["s"].imag, r["lhs"], r["rhs_without_C"], r["ratio"])
                    for r in fits["fine"].rows])
        factor = fits["fine"].fitted_C / fits["coarse"].fitted_C
        ok = 0.5 <= factor <= 2.0
        stable &= ok
        summary["fits"][bound] = {"fitted_C": fits["fine"].fitted_C, "coarse_C": fits["coarse"].fitted_C,
                                  "refinement_factor": factor, "stable": ok, "margin": fits["fine"].margin}
    grid = [complex(a, b) for a in (-s0, 0.0, s0) for b in (b0, 2 * b0, 5 * b0)]
    rep = [(n, s, rb.verify_representation(sft, p, s, n)) for s in grid
           for n in range(1, int(cfg.get("n_representation", 12)) + 1)]
    tel = [(n, s, rb.telescope(sft, p, s, n)) for s in grid for n in range(2, int(cfg.get("n_telescope", 10)) + 1)]
    write_rows(args.out, ["check", "n", "re_s", "im_s", "rel_err"],
               [("representation", n, s.real, s.imag, r.rel_err) for n, s, r in rep]
               + [("telescope", n, s.real, s.imag, t.rel_err) for n, s, t in tel])
    worst_rep = max(r.rel_err for _, _, r in rep)
    worst_tel = max(t.rel_err for _, _, t in tel)
    summary.update({"representation_max_rel_err": worst_rep, "telescope_max_rel_err": worst_tel})
    if args.check:
        _require(worst_rep <= 1e-9 and worst_tel <= 1e-9, "identity check above 1e-9")
        _require(stable, "fitted constant unstable under refinement")
    return summary


def cmd_spectrum_scan(cfg, base, args) -> dict:
    sft, p = system_from(cfg, base)
    ts = _grid(cfg.get("t", {"start": -8.0, "stop": 8.0, "step": 0.25}), "t")
    s0 = float(cfg["s0"]) if "s0" in cfg else find_root(sft, p)
    scan = acceptance.spectrum_scan(sft, p, s0, ts)
    write_rows(args.out, ["t", "re_s", "radius"], [(t, -s0, r) for t, r in scan])
    delta = _positive(cfg, "delta", 1e-3)
    off = [r for t, r in scan if t != 0.0]
    summary = _meta("spectrum-scan", args, {"s0": s0, "max_radius_off_zero": max(off) if off else None,
                                            "min_radius": min(r for _, r in scan)})
    if args.check:
        _require(bool(off) and max(off) <= 1 - delta, f"radius above 1 - {delta} off t = 0")
    return summary


def cmd_thurston(cfg, base, args) -> dict:
    try:
        if "data" in cfg:
            data = tc.load_subdivision(_resolve(base, cfg["data"]))
        else:
            data = tc.bundled_subdivision(cfg.get("bundled", "lattes_pillow"))
    except FileNotFoundError as exc:
        raise ConfigError(f"missing file: {exc.filename}") from None
    problems = tc.validate(data)
    if problems:
        raise ConfigError("; ".join(problems))
    rep = tc.analyze(data, int(cfg.get("n_max", 8)))
    write_rows(args.out, ["n", "im_s", "abs_Pi", "root_Pi", "abs_I", "abs_total"],
               [(r["n"], r["im"], r["abs_Pi"], r["root_Pi"], r["abs_I"], r["abs_total"]) for r in rep.decay.rows])
    summary = _meta("thurston", args, rep.summary())
    if args.check:
        res = acceptance.thurston(data=data)
        _require(res.passed, res.line())
    return summary


def cmd_acceptance(cfg, base, args) -> dict:
    numbers = args.criterion or sorted(acceptance.CRITERIA)
    results = []
    for k in numbers:
        kw = {"threads": args.threads} if k in (8, 9) else {}
        res = acceptance.run(k, **kw)
        print(res.line(), flush=True)
        results.append(res)
    summary = _meta("acceptance", args, {
        "criteria": {str(r.number): {"passed": r.passed, "seconds": r.seconds,
                                     "checks": [c.__dict__ for c in r.checks]} for r in results}})
    if args.check:
        _require(all(r.passed for r in results), "acceptance criteria failed")
    return summary


def _require(ok: bool, message: str) -> None:
    if not ok:
        raise AssertionFailed(message)


COMMANDS = {
    "pressure": cmd_pressure, "profile": cmd_profile, "count": cmd_count,
    "verify-ruelle": cmd_verify_ruelle, "spectrum-scan": cmd_spectrum_scan, "thurston": cmd_thurston,
    "acceptance": cmd_acceptance,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="orbitlab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        cmd = sub.add_parser(name)
        cmd.add_argument("--config", type=Path, required=name not in ("acceptance", "thurston"))
        cmd.add_argument("--out", type=Path, default=Path(f"{name}.csv"))
        cmd.add_argument("--assert", dest="check", action="store_true", help="exit 4 when a check fails")
        cmd.add_argument("--threads", type=int, default=None)
        if name == "acceptance":
            cmd.add_argument("--criterion", type=int, action="append", help="criterion number (repeatable)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    start = time.perf_counter()
    try:
        cfg, base = load_config(args.config) if args.config else ({}, Path.cwd())
        # flag beats config beats available parallelism
        args.threads = int(args.threads or cfg.get("threads") or os.cpu_count() or 1)
        if args.threads < 1:
            raise ConfigError("threads must be >= 1")
        summary = COMMANDS[args.command](cfg, base, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except AssertionFailed as exc:
        print(f"assertion failed: {exc}", file=sys.stderr)
        return EXIT_ASSERT
    except (ArithmeticError, ValueError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    summary["wall_seconds"] = time.perf_counter() - start
    if args.command != "acceptance" or args.config:
        write_summary(args.out, summary)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
