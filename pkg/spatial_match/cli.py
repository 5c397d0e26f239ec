"""
Command-line front end: ``spatial-match simulate | sweep | verify | schema``.

Exit codes: 0 success, 1 configuration error, 2 runtime error, 3 failed check.
"""

import argparse
import csv
import json
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from pydantic import ValidationError

from . import __version__
from .config import config_hash, load_config_file, load_summary_schema, resolve_config, schema_shape
from .engines import run_model
from .errors import CheckFailedError, ConfigError, SpatialMatchError
from .experiments import capacity_plan, fit_sweep, geometric_m_grid, sweep
from .models import ModelKind, RunManifest, RunSummary, SimConfig, SweepPoint, SweepSpec
from .observability import LoggingHook
from .parallel import resolve_threads
from .suites import SUITES, run_suite

logger = logging.getLogger("spatial_match")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2
EXIT_CHECK = 3

SWEEP_COLUMNS = ["scale_param", "value", "mean_cost", "stderr", "per_level_json"]

# (flag, config key, type)
OVERRIDE_FLAGS = [
    ("--model", "model", str),
    ("--d", "d", int),
    ("--N", "N", int),
    ("--M", "M", int),
    ("--m", "m", int),
    ("--n", "n", int),
    ("--policy", "policy", str),
    ("--init", "init", str),
    ("--seed", "seed", int),
    ("--reps", "replications", int),
    ("--warmup", "warmup", int),
    ("--beta", "beta_override", float),
    ("--l0", "ell0_override", int),
    ("--norm", "norm", str),
]


class _Parser(argparse.ArgumentParser):
    """ArgumentParser whose usage errors are configuration errors."""

    def error(self, message: str) -> None:
        raise ConfigError(message)


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _add_overrides(parser: argparse.ArgumentParser) -> None:
    for flag, key, kind in OVERRIDE_FLAGS:
        parser.add_argument(flag, dest=key, type=kind, default=None)
    parser.add_argument("--balanced-slack", action="store_true", help="scale threshold slack with supply per leaf")
    parser.add_argument("--threads", type=int, default=None, help="worker processes (env SPATIAL_MATCH_THREADS)")
    parser.add_argument("--out-dir", default="out", help="directory for summary.json and manifest.json")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="spatial-match", description="Spatial matching simulations and scaling experiments.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log run details to stderr")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest="command", parser_class=_Parser)
    commands.required = True

    simulate = commands.add_parser("simulate", help="run one engine invocation")
    simulate.add_argument("--config", default=None, help="YAML config file or bundled recipe name")
    simulate.add_argument("--periods-csv", action="store_true", help="also write per-match distances to periods.csv")
    _add_overrides(simulate)

    sweep_cmd = commands.add_parser("sweep", help="run a grid sweep and fit its scaling exponent")
    sweep_cmd.add_argument("config", help="YAML config file with a sweep section, or a bundled recipe name")
    _add_overrides(sweep_cmd)

    verify = commands.add_parser("verify", help="run an acceptance suite")
    verify.add_argument("suite", help=f"one of {', '.join(SUITES)}")
    verify.add_argument("--scale", type=float, default=1.0, help="shrink replications and horizons")
    verify.add_argument("--seed", type=int, default=0)
    verify.add_argument("--threads", type=int, default=None)

    schema = commands.add_parser("schema", help="print the JSON schema of summary.json")
    schema.add_argument("--out", default=None, help="write the schema to this file")
    schema.add_argument("--check", action="store_true", help="compare with the committed schema instead of printing")
    return parser


def _overrides(args: argparse.Namespace) -> Dict[str, Any]:
    values = {key: getattr(args, key) for _, key, _ in OVERRIDE_FLAGS}
    values["balanced_slack"] = True if args.balanced_slack else None
    return values


def _write_json(path: Path, text: str) -> None:
    path.write_text(text + "\n", encoding="utf-8")


def _write_manifest(
    out_dir: Path,
    command: str,
    cfg: SimConfig,
    digest: str,
    started: str,
    outputs: List[str],
    spec: Optional[SweepSpec] = None
) -> None:
    manifest = RunManifest(
        command=command,
        config_hash=digest,
        seed=cfg.seed,
        version=__version__,
        started_at=started,
        finished_at=_now(),
        outputs=outputs + ["manifest.json"],
        config=cfg.model_dump(mode="json"),
        sweep=spec.model_dump(mode="json") if spec is not None else None,
    )
    _write_json(out_dir / "manifest.json", manifest.model_dump_json(indent=2))


def write_sweep_csv(path: Path, points: Sequence[SweepPoint]) -> None:
    """Write sweep rows with CRLF line endings and minimal quoting."""
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\r\n", quoting=csv.QUOTE_MINIMAL)
        writer.writerow(SWEEP_COLUMNS)
        for point in points:
            report = point.report
            per_level = json.dumps([s.model_dump() for s in report.per_level], separators=(",", ":"))
            writer.writerow([
                point.param,
                point.value,
                repr(report.mean_cost),
                "" if report.stderr is None else repr(report.stderr),
                per_level,
            ])


def cmd_simulate(args: argparse.Namespace) -> int:
    started = _now()
    raw = load_config_file(args.config) if args.config else {}
    overrides = _overrides(args)
    if args.periods_csv:
        overrides["keep_samples"] = True
    cfg, _ = resolve_config(raw, overrides)
    threads = resolve_threads(args.threads)
    digest = config_hash(cfg)

    report = run_model(cfg, hook=LoggingHook(verbose=args.verbose), threads=threads)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = ["summary.json"]
    summary = RunSummary(command="simulate", config_hash=digest, mean_cost=report.mean_cost, report=report)
    _write_json(out_dir / "summary.json", summary.model_dump_json(indent=2))
    if args.periods_csv:
        with (out_dir / "periods.csv").open("w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle, lineterminator="\r\n")
            writer.writerow(["sample", "distance"])
            for i, value in enumerate(report.raw_samples or [], 1):
                writer.writerow([i, repr(value)])
        outputs.append("periods.csv")
    _write_manifest(out_dir, "simulate", cfg, digest, started, outputs)
    print(summary.model_dump_json(indent=2))
    return EXIT_OK


def _capacity_sweep(cfg: SimConfig, spec: SweepSpec, threads: int):
    grid = spec.capacity
    plan = capacity_plan(
        d=cfg.d,
        n_grid=spec.grid,
        m_grid_factory=lambda n: geometric_m_grid(n, cfg.d, points=grid.points, spread=grid.spread),
        reps=cfg.replications,
        seed=cfg.seed,
        horizon_per_m=grid.horizon_per_m,
        threads=threads,
        policy=cfg.policy,
        beta=cfg.beta_override,
        balanced_slack=cfg.balanced_slack,
    )
    points = [SweepPoint(param="n", value=p.n, report=p.report) for p in plan.points]
    return points, plan


def cmd_sweep(args: argparse.Namespace) -> int:
    started = _now()
    cfg, spec = resolve_config(load_config_file(args.config), _overrides(args))
    if spec is None:
        raise ConfigError(f"config {args.config} has no sweep section", field="sweep")
    threads = resolve_threads(args.threads)
    digest = config_hash(cfg, {"sweep": spec.model_dump(mode="json")})

    plan = None
    if cfg.model == ModelKind.CAPACITY and spec.param == "n":
        points, plan = _capacity_sweep(cfg, spec, threads)
        fit = plan.fit
    else:
        points = sweep(cfg, spec.param, spec.grid, ties=spec.ties, threads=threads)
        fit = None
        if len(points) >= 3:
            fit = fit_sweep(points, bootstrap_seed=cfg.seed)
        else:
            logger.warning("sweep has %d points; no scaling fit", len(points))

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_sweep_csv(out_dir / "sweep.csv", points)
    summary = RunSummary(
        command="sweep",
        config_hash=digest,
        sweep_param=spec.param,
        sweep=points,
        fit=fit,
        capacity=plan,
    )
    _write_json(out_dir / "summary.json", summary.model_dump_json(indent=2))
    _write_manifest(out_dir, "sweep", cfg, digest, started, ["sweep.csv", "summary.json"], spec=spec)
    if fit is not None:
        print(fit.model_dump_json(indent=2))
    if plan is not None and plan.boundary_flags:
        print(f"warning: optimum on grid edge for n in {plan.boundary_flags}; widen the m grid", file=sys.stderr)
    return EXIT_OK


def cmd_verify(args: argparse.Namespace) -> int:
    threads = resolve_threads(args.threads)
    results = run_suite(args.suite, scale=args.scale, threads=threads, seed=args.seed)
    for result in results:
        status = "PASS" if result.passed else "FAIL"
        print(f"[{status}] {result.criterion} ({result.seconds:.1f}s): {result.detail}")
    failed = [r.criterion for r in results if not r.passed]
    if failed:
        raise CheckFailedError(f"failed: {', '.join(failed)}", criterion=failed[0])
    print(f"suite {args.suite}: all {len(results)} checks passed")
    return EXIT_OK


def cmd_schema(args: argparse.Namespace) -> int:
    generated = RunSummary.model_json_schema()
    if args.check:
        if schema_shape(generated) != schema_shape(load_summary_schema()):
            raise CheckFailedError("summary.json schema differs from the committed summary.v1.json", criterion="schema")
        print("schema matches summary.v1.json")
        return EXIT_OK
    text = json.dumps(generated, indent=2, sort_keys=True)
    if args.out:
        _write_json(Path(args.out), text)
    else:
        print(text)
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "verify": cmd_verify,
    "schema": cmd_schema,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run the command line and return its exit code."""
    try:
        args = build_parser().parse_args(argv)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
        stream=sys.stderr,
    )
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, ValidationError) as exc:
        field = getattr(exc, "field", None)
        suffix = f" (field: {field})" if field else ""
        print(f"config error: {exc}{suffix}", file=sys.stderr)
        return EXIT_CONFIG
    except CheckFailedError as exc:
        print(f"check failed: {exc.criterion}: {exc}", file=sys.stderr)
        return EXIT_CHECK
    except SpatialMatchError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:
        logger.exception("unexpected failure")
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
