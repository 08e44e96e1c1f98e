"""``tripletsim`` command line.

Exit codes: 0 success, 1 usage or config error, 2 runtime failure. Failures
print a single JSON line ``{"error": ..., "kind": ...}`` on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=False, ensure_ascii=False) + "\n"


def _emit(payload: dict, out: str | None, default_name: str) -> None:
    text = _dump(payload)
    if out:
        path = Path(out)
        if path.is_dir() or out.endswith(("/", "\\")):
            path.mkdir(parents=True, exist_ok=True)
            path = path / default_name
        path.write_bytes(text.encode("utf-8"))
    sys.stdout.write(text)


def _envelope(command: str, resolved, result) -> dict:
    return {"tripletsim_version": __version__, "command": command, "config": resolved, "result": result}


def _load(args):
    from .config import load_config

    return load_config(args.config, seed=args.seed)


# -- subcommands ------------------------------------------------------------


def cmd_budget(args) -> int:
    from .budget import budget_report

    cfg = _load(args)
    seed = args.seed if args.seed is not None else cfg.experiment.seed
    report = budget_report(cfg.budget, cfg.measurements, samples=args.samples, seed=seed)
    _emit(_envelope("budget", cfg.resolved, report.to_json()), args.out, "budget.json")
    return 0


def _temperatures(args) -> list[float]:
    if args.temp_c is not None:
        return [args.temp_c]
    if args.t_step <= 0 or args.t_stop < args.t_start:
        raise UsageError("temperature range needs t_stop >= t_start and t_step > 0")
    n = int(np.floor((args.t_stop - args.t_start) / args.t_step + 1e-9)) + 1
    return [round(args.t_start + k * args.t_step, 9) for k in range(n)]


def cmd_phasematch(args) -> int:
    from .phasematch import min_phasematch_temperature, ppktp_output_wavelength, solve_pair_wavelengths

    cfg = _load(args)
    crystal = cfg.crystal
    if args.pump_nm is not None:
        pump = args.pump_nm
    elif args.ppktp_temp_c is not None:
        if cfg.calibration is None:
            raise UsageError("--ppktp-temp-c needs crystal.ppktp_calibration in the config")
        pump = ppktp_output_wavelength(cfg.calibration, args.ppktp_temp_c)
    else:
        raise UsageError("give --pump-nm or --ppktp-temp-c")
    temps = _temperatures(args)

    if args.temp_c is not None:
        pair = solve_pair_wavelengths(crystal.at(args.temp_c), pump)
        try:
            t_min = min_phasematch_temperature(crystal, pump).temperature
        except ValueError:
            t_min = None
        result = {
            "pump_nm": pump,
            "temperature_c": args.temp_c,
            "poling_period_um": crystal.poling_period_um,
            "min_phasematch_temperature_c": t_min,
            "phase_matched": pair is not None,
            "status": "phase matched" if pair else "no phase matching",
            "signal_nm": pair[0] if pair else None,
            "idler_nm": pair[1] if pair else None,
        }
        _emit(_envelope("phasematch", cfg.resolved, result), args.out, "phasematch.json")
        return 0

    lines = ["temperature_C,signal_nm,idler_nm"]
    for t in temps:
        pair = solve_pair_wavelengths(crystal.at(t), pump)
        if pair is not None:
            lines.append(f"{t!r},{pair[0]!r},{pair[1]!r}")
    data = ("\n".join(lines) + "\n").encode("utf-8")
    if args.out:
        path = Path(args.out)
        if path.is_dir():
            path = path / "tuning_curve.csv"
        path.write_bytes(data)
    else:
        sys.stdout.write(data.decode("utf-8"))
    return 0


def cmd_simulate(args) -> int:
    from .detection import scan_delay, simulate
    from .histogram import write_histogram_csv

    cfg = _load(args)
    exp = cfg.experiment
    changes = {}
    if args.mode:
        changes["mode"] = args.mode
    if args.duration_s is not None:
        changes["duration_s"] = args.duration_s
    if args.delay_ns is not None:
        changes["d2_d3_delay_ns"] = args.delay_ns
    if changes:
        try:
            exp = exp.with_(**changes)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    resolved = cfg.resolved
    resolved["simulation"].update({k: v for k, v in changes.items()})
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)

    if args.scan:
        delays = [float(x) for x in args.scan.split(",")]
        try:
            results = scan_delay(exp, delays, workers=args.workers)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    else:
        results = [simulate(exp, workers=args.workers)]
    summary = []
    for k, r in enumerate(results):
        stem = args.prefix if len(results) == 1 else f"{args.prefix}_{k:02d}"
        write_histogram_csv(r.histogram, out / f"{stem}.csv")
        payload = _envelope("simulate", resolved, r.to_json())
        (out / f"{stem}.json").write_bytes(_dump(payload).encode("utf-8"))
        summary.append({"csv": f"{stem}.csv", **r.to_json()})
    sys.stdout.write(_dump(_envelope("simulate", resolved, summary if args.scan else summary[0])))
    return 0


def cmd_analyze(args) -> int:
    from .histogram import analyze_peak, read_histogram_csv

    resolved = None
    duration = args.duration_s
    if args.config:
        cfg = _load(args)
        resolved = cfg.resolved
        if duration is None:
            duration = cfg.experiment.duration_s
    if duration is None:
        sidecar = Path(args.csv).with_suffix(".json")
        if sidecar.is_file():
            duration = json.loads(sidecar.read_text(encoding="utf-8"))["result"]["duration_s"]
        else:
            raise UsageError("duration unknown: pass --duration-s or --config, or keep the JSON sidecar")
    h = read_histogram_csv(args.csv, duration, args.bin_width_ns)
    report = analyze_peak(h, args.window)
    result = {"csv": str(args.csv), "duration_s": duration, **report.to_json()}
    _emit(_envelope("analyze", resolved, result), args.out, "analysis.json")
    return 0


def cmd_fock(args) -> int:
    from .fock import CascadeParams, apply_first_order_cascade, evolve_exact, triplet_probability

    params = CascadeParams(args.lambda1, args.lambda2, complex(args.alpha_re, args.alpha_im))
    state = evolve_exact(params, args.n_max) if args.exact else apply_first_order_cascade(params)
    resolved = {"lambda1": args.lambda1, "lambda2": args.lambda2, "alpha": [args.alpha_re, args.alpha_im],
                "n_max": args.n_max, "exact": args.exact}
    result = {"state": state.to_json(), "triplet_probability_first_order": triplet_probability(params)}
    _emit(_envelope("fock", resolved, result), args.out, "fock.json")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="tripletsim", description="Cascaded down-conversion photon-triplet simulator.")
    p.add_argument("--version", action="version", version=f"tripletsim {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", default="paper_table1", help="config path or bundled name")
        sp.add_argument("--seed", type=int, help="override the config seed")
        sp.add_argument("--out", help="output file or directory")
        sp.add_argument("--workers", type=int, default=1, help="worker threads (results do not depend on it)")

    b = sub.add_parser("budget", help="rate and dark-count budget with uncertainties")
    common(b)
    b.add_argument("--samples", type=int, default=100_000)
    b.set_defaults(func=cmd_budget)

    pm = sub.add_parser("phasematch", help="PPLN signal/idler wavelengths versus temperature")
    common(pm)
    pm.add_argument("--pump-nm", type=float)
    pm.add_argument("--ppktp-temp-c", type=float, help="derive the pump from the PPKTP calibration")
    pm.add_argument("--temp-c", type=float, help="single temperature (JSON output)")
    pm.add_argument("--t-start", type=float, default=40.0)
    pm.add_argument("--t-stop", type=float, default=90.0)
    pm.add_argument("--t-step", type=float, default=1.0)
    pm.set_defaults(func=cmd_phasematch)

    s = sub.add_parser("simulate", help="Monte Carlo of the detection chain")
    common(s)
    s.add_argument("--mode", choices=("event", "aggregated"))
    s.add_argument("--duration-s", type=float)
    s.add_argument("--delay-ns", type=float, help="D2-D3 delay offset")
    s.add_argument("--scan", help="comma-separated D2-D3 delays in ns")
    s.add_argument("--prefix", default="histogram", help="output file stem")
    s.set_defaults(func=cmd_simulate)

    a = sub.add_parser("analyze", help="peak analysis of a histogram CSV")
    common(a)
    a.set_defaults(config=None)
    a.add_argument("csv")
    a.add_argument("--duration-s", type=float)
    a.add_argument("--bin-width-ns", type=float)
    a.add_argument("--window", type=int, default=3)
    a.set_defaults(func=cmd_analyze)

    f = sub.add_parser("fock", help="cascade state amplitudes")
    common(f, config=False)
    f.add_argument("--lambda1", type=float, default=1e-3)
    f.add_argument("--lambda2", type=float, default=1e-2)
    f.add_argument("--alpha-re", type=float, default=1.0)
    f.add_argument("--alpha-im", type=float, default=0.0)
    f.add_argument("--n-max", type=int, default=3)
    f.add_argument("--exact", action="store_true", help="full evolution instead of first order")
    f.set_defaults(func=cmd_fock)
    return p


def _fail(kind: str, exc: BaseException, code: int) -> int:
    msg = str(exc) or type(exc).__name__
    sys.stderr.write(json.dumps({"error": " ".join(msg.split()), "kind": kind}) + "\n")
    return code


def main(argv=None) -> int:
    from .config import ConfigError

    try:
        args = build_parser().parse_args(argv)
        if getattr(args, "workers", 1) < 1:
            raise UsageError("--workers must be at least 1")
        return args.func(args)
    except UsageError as exc:
        return _fail("usage", exc, 1)
    except ConfigError as exc:
        return _fail("config", exc, 1)
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except Exception as exc:  # noqa: BLE001 - every failure becomes one JSON line
        return _fail("runtime", exc, 2)


if __name__ == "__main__":
    sys.exit(main())
