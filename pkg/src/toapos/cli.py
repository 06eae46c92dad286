"""Command-line front end.

Commands
--------
simulate   one campaign, per-point and summary CSV
sweep      threshold-parameter grid over a shared point set
report     side-by-side statistics of the four reference detectors
defaults   print the default configuration document
"""

from __future__ import annotations

import argparse
import csv
import itertools
import logging
import math
import sys
from pathlib import Path

from .config import ConfigError, RunConfig, load_config
from .firstpath import ThresholdSpec
from .scenario import evaluate_campaign, measure_campaign

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DEGENERATE = 3

AXIS_ALIASES = {
    "delta": "delta_db", "delta_db": "delta_db",
    "a": "a", "b": "b",
    "l": "l_strongest", "L": "l_strongest", "l_strongest": "l_strongest",
    "gamma": "gamma",
}
METHOD_AXES = {"m1": {"delta_db"}, "m2": {"a", "b"}, "m3": {"l_strongest", "gamma"}}

POINT_COLUMNS = ["point_id", "true_x", "true_y", "est_x", "est_y", "error_m",
                 "n_detected", "status", "chosen_subset", "residual"]
SUMMARY_COLUMNS = ["mean_m", "std_m", "p95_m", "n_points", "n_unavailable"]

log = logging.getLogger("toapos")


def _fmt(x) -> str:
    if x is None:
        return ""
    x = float(x)
    return "" if math.isnan(x) else f"{x:.6f}"


def parse_axis(text: str, method: str) -> tuple:
    """``name=start:stop:step`` -> (canonical name, list of values), stop inclusive."""
    try:
        name, rng = text.split("=", 1)
        start, stop, step = (float(v) for v in rng.split(":"))
    except ValueError:
        raise ConfigError("axis", f"expected name=start:stop:step, got {text!r}") from None
    canon = AXIS_ALIASES.get(name.strip())
    if canon is None or canon not in METHOD_AXES[method]:
        raise ConfigError("axis", f"{name!r} is not a parameter of method {method}")
    if not step > 0:
        raise ConfigError("axis", f"step must be > 0, got {step}")
    if stop < start:
        raise ConfigError("axis", f"stop {stop} is below start {start}")
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    values = [start + i * step for i in range(n)]
    if canon == "l_strongest":
        values = [int(round(v)) for v in values]
    return canon, values


def _write_csv(path: Path, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def write_points_csv(path, results, measurements):
    rows = []
    for res, m in zip(results, measurements):
        fix = res.fix
        detected = [r for r in res.ranges if r.detected]
        subset = ";".join(str(detected[k - 1].bs_index) for k in fix.chosen_subset)
        rows.append([res.point_id, _fmt(res.true_pos[0]), _fmt(res.true_pos[1]),
                     _fmt(fix.position[0]), _fmt(fix.position[1]), _fmt(res.error_m),
                     res.n_detected, fix.status.value, subset, _fmt(fix.residual)])
    _write_csv(Path(path), POINT_COLUMNS, rows)


def write_summary_csv(path, stats):
    _write_csv(Path(path), SUMMARY_COLUMNS,
               [[_fmt(stats.mean_m), _fmt(stats.std_m), _fmt(stats.p95_m),
                 stats.n_points, stats.n_unavailable]])


def write_pdp_csv(path, measurements):
    rows = []
    for m in measurements:
        for b, pdp in zip(m.bs_indices, m.pdps):
            rows.extend([m.point.point_id, b, n, repr(float(v))] for n, v in enumerate(pdp.z))
    _write_csv(Path(path), ["point_id", "bs_index", "tap", "z"], rows)


def summary_line(stats) -> str:
    return (f"mean_m={_fmt(stats.mean_m)} std_m={_fmt(stats.std_m)} p95_m={_fmt(stats.p95_m)} "
            f"n_points={stats.n_points} n_unavailable={stats.n_unavailable}")


def _config_from_args(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    changes = {}
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    if getattr(args, "points", None) is not None:
        changes["n_points"] = args.points
    if getattr(args, "out", None) is not None:
        changes["out_dir"] = args.out
    if getattr(args, "workers", None) is not None:
        changes["workers"] = args.workers
    return cfg.replace(**changes) if changes else cfg


def cmd_simulate(cfg: RunConfig, dump_pdp: bool = False) -> int:
    ms = measure_campaign(cfg)
    results, stats = evaluate_campaign(ms, cfg.threshold, cfg)
    out = Path(cfg.out_dir)
    write_points_csv(out / "points.csv", results, ms)
    write_summary_csv(out / "summary.csv", stats)
    if dump_pdp:
        write_pdp_csv(out / "pdp.csv", ms)
    print(summary_line(stats))
    return EXIT_DEGENERATE if stats.n_unavailable == stats.n_points else EXIT_OK


def sweep_specs(base: ThresholdSpec, method: str, axes: list) -> list:
    """Grid of threshold specs in row-major order of ``axes``.

    Parameters not on an axis come from ``base`` when it uses the same
    method, otherwise from the method defaults.
    """
    fixed = base.params() if base.method == method else ThresholdSpec(method=method).params()
    names = [a[0] for a in axes]
    return [(combo, ThresholdSpec(method=method, **{**fixed, **dict(zip(names, combo))}))
            for combo in itertools.product(*(a[1] for a in axes))]


def cmd_sweep(cfg: RunConfig, method: str, axes: list, out_name: str = None) -> int:
    try:
        specs = sweep_specs(cfg.threshold, method, axes)
    except ValueError as exc:
        raise ConfigError("axis", str(exc)) from None
    ms = measure_campaign(cfg)
    rows = []
    all_bad = True
    for combo, spec in specs:
        _, st = evaluate_campaign(ms, spec, cfg)
        all_bad &= st.n_unavailable == st.n_points
        rows.append([_fmt(v) if isinstance(v, float) else v for v in combo]
                    + [_fmt(st.mean_m), _fmt(st.std_m), _fmt(st.p95_m), st.n_unavailable])
        log.info("%s %s p95=%.1f", method, spec.params(), st.p95_m)
    header = [a[0] for a in axes] + ["mean_m", "std_m", "p95_m", "n_unavailable"]
    path = Path(cfg.out_dir) / (out_name or f"sweep_{method}.csv")
    _write_csv(path, header, rows)
    print(f"wrote {len(rows)} rows to {path}")
    return EXIT_DEGENERATE if all_bad else EXIT_OK


def report_specs(cfg: RunConfig) -> list:
    r = cfg.report
    return [
        ("M1 delta=0", ThresholdSpec("m1", delta_db=0.0)),
        (f"M1 delta={r.delta_opt_db:g}", ThresholdSpec("m1", delta_db=r.delta_opt_db)),
        (f"M2 (a,b)=({r.m2_ab[0]:g},{r.m2_ab[1]:g})", ThresholdSpec("m2", a=r.m2_ab[0], b=r.m2_ab[1])),
        (f"M3 (L,g)=({r.m3_l_gamma[0]:g},{r.m3_l_gamma[1]:g})",
         ThresholdSpec("m3", l_strongest=int(r.m3_l_gamma[0]), gamma=r.m3_l_gamma[1])),
    ]


def report_table(cfg: RunConfig, measurements=None) -> list:
    """``[(label, ErrorStats), ...]`` for the four reference detectors on one point set."""
    ms = measurements if measurements is not None else measure_campaign(cfg)
    return [(label, evaluate_campaign(ms, spec, cfg)[1]) for label, spec in report_specs(cfg)]


def format_table(table) -> str:
    width = max(len(label) for label, _ in table) + 2
    lines = ["".ljust(12) + "".join(label.rjust(width) for label, _ in table)]
    for name, attr in (("Mean [m]", "mean_m"), ("Std [m]", "std_m"), ("95 perc. [m]", "p95_m")):
        lines.append(name.ljust(12) + "".join(f"{getattr(st, attr):{width}.1f}" for _, st in table))
    lines.append("Unavail.".ljust(12) + "".join(f"{st.n_unavailable:{width}d}" for _, st in table))
    return "\n".join(lines)


def cmd_report(cfg: RunConfig) -> int:
    table = report_table(cfg)
    print(format_table(table))
    rows = [[label, _fmt(st.mean_m), _fmt(st.std_m), _fmt(st.p95_m), st.n_points, st.n_unavailable]
            for label, st in table]
    _write_csv(Path(cfg.out_dir) / "report.csv", ["config"] + SUMMARY_COLUMNS, rows)
    return EXIT_DEGENERATE if all(st.n_unavailable == st.n_points for _, st in table) else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="toapos", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON configuration document (defaults if omitted)")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--points", type=int)
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--workers", type=int)

    sim = sub.add_parser("simulate", help="run one campaign")
    common(sim)
    sim.add_argument("--dump-pdp", action="store_true", help="also write every averaged profile")

    sw = sub.add_parser("sweep", help="threshold parameter sweep")
    common(sw)
    sw.add_argument("--method", required=True, choices=["m1", "m2", "m3"])
    sw.add_argument("--axis1", required=True, help="name=start:stop:step")
    sw.add_argument("--axis2", help="name=start:stop:step")

    rep = sub.add_parser("report", help="compare the reference detectors")
    common(rep)

    sub.add_parser("defaults", help="print the default configuration")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "defaults":
        print(RunConfig().dumps())
        return EXIT_OK
    try:
        cfg = _config_from_args(args)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.command == "simulate":
            return cmd_simulate(cfg, dump_pdp=args.dump_pdp)
        if args.command == "sweep":
            axes = [parse_axis(args.axis1, args.method)]
            if args.axis2:
                axes.append(parse_axis(args.axis2, args.method))
                if axes[0][0] == axes[1][0]:
                    raise ConfigError("axis2", "must name a different parameter than axis1")
            return cmd_sweep(cfg, args.method, axes)
        return cmd_report(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

if __name__ == "__main__":
    sys.exit(main())
