"""Command-line front end.

Subcommands: ``simulate``, ``sweep-alpha``, ``sweep-steps``, ``verify``, ``print-config``.

Exit codes: 0 success, 1 validation or usage error (including a grid that starts on a
coefficient pole), 2 numerical divergence, 3 verify failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

from . import __version__
from .config import ExperimentConfig, dump_config, load_config, parse_config
from .errors import ConfigError, DomainError
from .experiment import ExperimentResult, run_experiment
from .integrator import MAX_WORKERS_ENV
from .report import (write_csv, write_gnuplot_script, write_json_report, write_sidecar,
                     write_summary)
from .sde import Family
from .verify import CHECKS, run_checks

log = logging.getLogger("flowsde")

EXIT_OK, EXIT_INVALID, EXIT_DIVERGED, EXIT_VERIFY = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _float_list(text: str) -> list[float]:
    try:
        vals = [float(v) for v in text.replace(" ", "").split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    return vals


def _int_list(text: str) -> list[int]:
    try:
        vals = [int(v) for v in text.replace(" ", "").split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    return vals


def _add_run_options(p: argparse.ArgumentParser):
    p.add_argument("config", nargs="?", help="YAML/JSON config file (defaults when omitted)")
    p.add_argument("-o", "--output", help="output path (overrides output.path)")
    p.add_argument("--family", help="diffusion family override")
    p.add_argument("--alpha", type=float, help="diffusion scale override")
    p.add_argument("--steps", type=int, help="number of Euler-Maruyama steps override")
    p.add_argument("--t-start", type=float, help="start time override")
    p.add_argument("--trials", type=int, help="number of trials override")
    p.add_argument("--trajectories", type=int, help="trajectories per trial override")
    p.add_argument("--seed", type=int, help="seed override")
    p.add_argument("--workers", type=int, default=None,
                   help=f"worker threads (default: CPU count, capped by ${MAX_WORKERS_ENV})")
    p.add_argument("--gnuplot-script", action="store_true", help="also write a gnuplot script per report")
    p.add_argument("--figure", action="store_true", help="also render PNG figures with matplotlib")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="flowsde", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"flowsde {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="run one experiment and write its marginal report")
    _add_run_options(p)

    p = sub.add_parser("sweep-alpha", help="one report per diffusion scale plus a KL summary")
    _add_run_options(p)
    p.add_argument("--alphas", type=_float_list, required=True, help="comma-separated scales, e.g. 0,0.5,1")
    p.add_argument("--decorrelate", action="store_true", help="use seed + index per point instead of one shared seed")

    p = sub.add_parser("sweep-steps", help="one report per step count and family plus a summary")
    _add_run_options(p)
    p.add_argument("--step-counts", "--steps-list", dest="step_counts", type=_int_list, required=True,
                   help="comma-separated step counts, e.g. 50,100,500")
    p.add_argument("--families", default=None,
                   help="comma-separated families (default: the config's family)")
    p.add_argument("--decorrelate", action="store_true", help="use seed + index per point instead of one shared seed")

    p = sub.add_parser("verify", help="run the exact-identity checks")
    p.add_argument("--list", action="store_true", help="list check names without running them")
    p.add_argument("--perturb", type=float, default=0.0, metavar="DELTA",
                   help="shift alpha by DELTA in the singular-SDE check (sensitivity test)")
    p.add_argument("--check", action="append", help="run only the named check (repeatable)")

    p = sub.add_parser("print-config", help="print a config with every default filled in")
    p.add_argument("config", nargs="?", help="config to complete with defaults")
    return parser


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    data = cfg.to_dict()
    overrides = {
        ("sampler", "family"): args.family,
        ("sampler", "alpha"): args.alpha,
        ("sampler", "t_start"): args.t_start,
        ("simulation", "num_steps"): args.steps,
        ("simulation", "trials"): args.trials,
        ("simulation", "trajectories_per_trial"): args.trajectories,
        ("simulation", "seed"): args.seed,
        ("output", "path"): args.output,
    }
    for (section, key), value in overrides.items():
        if value is not None:
            data[section][key] = value
    if args.family is not None and not args.family.lower().startswith("custom"):
        data["sampler"]["n"] = data["sampler"]["m"] = None
    return parse_config(data)


def _emit(result: ExperimentResult, path: Path, args, title: str) -> None:
    cfg, report = result.config, result.report
    if cfg.output.format == "json":
        write_json_report(cfg, report, path)
    else:
        write_csv(report, path)
        write_sidecar(cfg, report, path)
        if args.gnuplot_script:
            write_gnuplot_script(path, title)
    if args.figure:
        from .plotting import plot_report
        plot_report(report, path.with_suffix(".png"), title)


def _title(cfg: ExperimentConfig) -> str:
    s = cfg.diffusion_schedule()
    return f"{s.label()} alpha={s.alpha_scale:g} N={cfg.num_steps}"


def _run(cfg: ExperimentConfig, args) -> ExperimentResult:
    t0 = time.perf_counter()
    res = run_experiment(cfg, workers=args.workers)
    log.info("%s: %.2fs", _title(cfg), time.perf_counter() - t0)
    if res.diverged:
        print(f"warning: {_title(cfg)} diverged (|x| > {cfg.divergence_bound:g} first at t={res.diverged_at:.6g})",
              file=sys.stderr)
    return res


def cmd_simulate(args) -> int:
    cfg = _load(args)
    res = _run(cfg, args)
    path = Path(cfg.output.path)
    _emit(res, path, args, _title(cfg))
    print(f"wrote {path}")
    return EXIT_DIVERGED if res.diverged else EXIT_OK


def _point_path(base: Path, tag: str) -> Path:
    return base.with_name(f"{base.stem}_{tag}{base.suffix or '.csv'}")


def cmd_sweep_alpha(args) -> int:
    if not args.alphas:
        raise UsageError("--alphas must list at least one value")
    base_cfg = _load(args)
    base = Path(base_cfg.output.path)
    rows, reports, diverged = [], {}, False
    for i, alpha in enumerate(args.alphas):
        seed = (base_cfg.seed + i) % 2 ** 64 if args.decorrelate else base_cfg.seed
        cfg = base_cfg.with_overrides(alpha=alpha, seed=seed)
        res = _run(cfg, args)
        diverged |= res.diverged
        _emit(res, _point_path(base, f"alpha{alpha:g}"), args, _title(cfg))
        t0 = res.report.at(0.0)
        rows.append((alpha, t0["kl"], t0["mean_err"], t0["var_err"], t0["var_std"]))
        reports[f"alpha={alpha:g}"] = res.report
    summary = write_summary(("alpha", "kl_t0", "mean_err_t0", "var_err_t0", "var_std_t0"), rows,
                            _point_path(base, "summary"))
    if args.figure:
        from .plotting import plot_reports
        plot_reports(reports, summary.with_suffix(".png"),
                     f"{base_cfg.diffusion_schedule().label()} N={base_cfg.num_steps}")
    print(f"wrote {summary}")
    return EXIT_DIVERGED if diverged else EXIT_OK


def cmd_sweep_steps(args) -> int:
    if not args.step_counts:
        raise UsageError("--step-counts must list at least one value")
    base_cfg = _load(args)
    families = ([f for f in args.families.split(",") if f] if args.families else [base_cfg.family])
    if not families:
        raise UsageError("--families must list at least one family")
    base = Path(base_cfg.output.path)
    rows, diverged = [], False
    for fam in families:
        try:
            fam_name = Family.parse(fam).value
        except ValueError as exc:
            raise ConfigError("sampler.family", str(exc)) from None
        reports = {}
        for i, steps in enumerate(args.step_counts):
            seed = (base_cfg.seed + i) % 2 ** 64 if args.decorrelate else base_cfg.seed
            over = dict(family=fam_name, num_steps=steps, seed=seed)
            if fam_name != Family.CUSTOM.value:
                over.update(n=None, m=None)
            cfg = base_cfg.with_overrides(**over)
            res = _run(cfg, args)
            diverged |= res.diverged
            label = cfg.diffusion_schedule().label()
            _emit(res, _point_path(base, f"{label}_N{steps}"), args, _title(cfg))
            t0 = res.report.at(0.0)
            rows.append((f"{steps:d}", label, t0["var_err"], t0["var_std"], t0["kl"]))
            reports[f"N={steps}"] = res.report
        if args.figure:
            from .plotting import plot_reports
            plot_reports(reports, _point_path(base, f"{fam_name}_steps").with_suffix(".png"),
                         f"{fam_name} alpha={base_cfg.alpha:g}")
    summary = write_summary(("num_steps", "family", "var_err_t0", "var_std_t0", "kl_t0"), rows,
                            _point_path(base, "summary"))
    print(f"wrote {summary}")
    return EXIT_DIVERGED if diverged else EXIT_OK


def cmd_verify(args) -> int:
    if args.list:
        for c in CHECKS:
            print(f"{c.name}\t{c.description}")
        return EXIT_OK
    known = {c.name for c in CHECKS}
    if args.check:
        unknown = [n for n in args.check if n not in known]
        if unknown:
            raise UsageError(f"unknown check(s): {', '.join(unknown)}")
    t0 = time.perf_counter()
    results = run_checks(args.check, perturb=args.perturb)
    width = max(len(r.name) for r in results)
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{status}  {r.name:<{width}}  max_dev={r.max_deviation:.3e}  tol={r.tol:.0e}")
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed}/{len(results)} checks passed in {time.perf_counter() - t0:.2f}s")
    return EXIT_VERIFY if failed else EXIT_OK


def cmd_print_config(args) -> int:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    sys.stdout.write(dump_config(cfg))
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "sweep-alpha": cmd_sweep_alpha,
    "sweep-steps": cmd_sweep_steps,
    "verify": cmd_verify,
    "print-config": cmd_print_config,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"flowsde {args.command}: usage error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ConfigError as exc:
        print(f"flowsde {args.command}: invalid config: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except DomainError as exc:
        print(f"flowsde {args.command}: pole/domain error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except FileNotFoundError as exc:
        print(f"flowsde {args.command}: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
