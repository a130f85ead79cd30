"""Command-line entry point: ``css-lnl {run,sweep,selfcheck}``."""
from __future__ import annotations

import argparse
import csv
import logging
import os
import shutil
import sys
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .config import RunConfig, config_from_dict, dump_config, parse_config
from .errors import ConfigError, CSSError
from .metrics import emit
from .selection import canonical_scheme, write_partition_csv
from .training import err_slope, run_experiment

log = logging.getLogger("css_lnl")

LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
EXIT_OK, EXIT_FAILED, EXIT_USAGE = 0, 1, 2
INCOMPLETE_MARKER = "INCOMPLETE"
COMPARISON_COLUMNS = ["cell", "noise_rate", "scheme", "prompt_tuning", "seed", "final_test_acc",
                      "final_test_error", "last_test_acc", "last_auc", "last_n_err_in_C", "err_slope_5_30", "seconds"]


def setup_logging() -> None:
    name = os.environ.get("CSS_LOG_LEVEL", "error").strip().lower()
    if name not in LOG_LEVELS:
        raise ConfigError(f"CSS_LOG_LEVEL: must be one of {', '.join(LOG_LEVELS)}, got {name!r}")
    logging.basicConfig(level=LOG_LEVELS[name], format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def load_config(args) -> RunConfig:
    """Config file (or defaults) with command-line overrides applied, validated before any work."""
    cfg = parse_config(args.config) if args.config else RunConfig()
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "scheme", None):
        overrides["scheme"] = canonical_scheme(args.scheme)
    if getattr(args, "no_prompt_tuning", False):
        overrides["prompt_tuning"] = False
    return config_from_dict(overrides, cfg) if overrides else cfg


def _prepare_out_dir(out: Path, force: bool) -> None:
    if out.exists() and any(out.iterdir()):
        if not force:
            raise ConfigError(f"--out: directory {out} is not empty (use --force to replace it)")


def _staging_dir(out: Path) -> Path:
    out.parent.mkdir(parents=True, exist_ok=True)
    return Path(tempfile.mkdtemp(prefix=f".{out.name}.", suffix=".partial", dir=out.parent))


def _publish(staging: Path, out: Path) -> None:
    if out.exists():
        shutil.rmtree(out)
    os.replace(staging, out)


def write_run_outputs(result, out: Path) -> None:
    cfg = result.config
    emit(result.reports, out, result.summary, result.roc_curves)
    (out / "config.toml").write_text(dump_config(cfg))
    for epoch, part in sorted(result.partitions.items()):
        write_partition_csv(part, part.scores, result.state.train, out / f"partition_epoch_{epoch}.csv")


def execute_run(cfg: RunConfig, out: Path, force: bool = False) -> dict:
    """Run one experiment into ``out``. Outputs appear only if the run succeeds."""
    _prepare_out_dir(out, force)
    staging = _staging_dir(out)
    (staging / INCOMPLETE_MARKER).write_text("run in progress or failed\n")
    try:
        t0 = time.perf_counter()
        result = run_experiment(cfg)
        result.summary["seconds"] = time.perf_counter() - t0 if cfg.record_seconds else 0.0
        result.summary["err_slope_5_30"] = err_slope(result.reports)
        write_run_outputs(result, staging)
        (staging / INCOMPLETE_MARKER).unlink()
        _publish(staging, out)
    except BaseException:
        shutil.rmtree(staging, ignore_errors=True)
        raise
    return result.summary


def cmd_run(args) -> int:
    cfg = load_config(args)
    out = Path(args.out)
    summary = execute_run(cfg, out, args.force)
    print(f"final_test_acc={summary['final_test_acc']:.4f} last_auc={summary['last_auc']:.4f} "
          f"last_n_err_in_C={summary['last_n_err_in_C']} -> {out}")
    return EXIT_OK


def _parse_list(text: str, kind):
    try:
        return [kind(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse list {text!r}") from None


def sweep_cells(base: RunConfig, noise_rates, schemes, prompts, seeds) -> list[tuple[str, RunConfig]]:
    cells = []
    for rate in noise_rates:
        for scheme in schemes:
            scheme = canonical_scheme(scheme)
            # prompt tuning is meaningless without the auxiliary scorer
            prompt_values = prompts if scheme != "gmm1d_loss_only" else [base.prompt_tuning]
            for prompt in prompt_values:
                for seed in seeds:
                    cfg = config_from_dict({"noise_rate": rate, "scheme": scheme, "prompt_tuning": prompt,
                                            "seed": seed}, base)
                    tag = "on" if prompt else "off"
                    name = f"noise{rate:g}_{scheme}_prompt-{tag}_seed{seed}"
                    cells.append((name, cfg))
    return cells


def _run_cell(item):
    name, cfg, out, force = item
    try:
        summary = execute_run(cfg, out, force)
    except (CSSError, OSError, FloatingPointError, ValueError, RuntimeError) as exc:
        return name, cfg, None, f"{type(exc).__name__}: {exc}"
    return name, cfg, summary, None


def comparison_row(name: str, cfg: RunConfig, summary: dict) -> list:
    return [name, cfg.noise_rate, cfg.scheme, int(cfg.prompt_tuning), cfg.seed, summary["final_test_acc"],
            summary["final_test_error"], summary["last_test_acc"], summary["last_auc"],
            summary["last_n_err_in_C"], summary["err_slope_5_30"], summary["seconds"]]


def cmd_sweep(args) -> int:
    base = load_config(args)
    root = Path(args.out)
    rates = _parse_list(args.noise_rates, float) if args.noise_rates else [base.noise_rate]
    schemes = _parse_list(args.schemes, str) if args.schemes else [base.scheme]
    seeds = _parse_list(args.seeds, int) if args.seeds else [base.seed]
    prompts = {"on": [True], "off": [False], "both": [True, False]}.get(args.prompt, [base.prompt_tuning])
    cells = sweep_cells(base, rates, schemes, prompts, seeds)
    root.mkdir(parents=True, exist_ok=True)
    items = [(name, cfg, root / name, args.force) for name, cfg in cells]
    if args.parallel > 1:
        with ProcessPoolExecutor(max_workers=args.parallel) as pool:
            results = list(pool.map(_run_cell, items))
    else:
        results = [_run_cell(it) for it in items]
    failures = [(n, err) for n, _, _, err in results if err]
    with open(root / "comparison.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COMPARISON_COLUMNS)
        for name, cfg, summary, err in results:
            if summary is not None:
                w.writerow([f"{v:.6g}" if isinstance(v, float) else v for v in comparison_row(name, cfg, summary)])
    for name, err in failures:
        print(f"cell {name} failed: {err}", file=sys.stderr)
    print(f"{len(results) - len(failures)}/{len(results)} cells completed -> {root / 'comparison.csv'}")
    return EXIT_FAILED if failures else EXIT_OK


def cmd_selfcheck(args) -> int:
    from .selfcheck import CHECKS, run_all
    names = _parse_list(args.only, str) if args.only else None
    for n in names or []:
        if n not in CHECKS:
            raise ConfigError(f"--only: unknown check {n!r}; choose from {', '.join(CHECKS)}")
    results = run_all(names)
    for r in results:
        print(r.line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAILED


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="css-lnl", description="Collaborative sample selection for noisy labels.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_required=True):
        sp.add_argument("--config", help="flat TOML config file; missing keys take defaults")
        sp.add_argument("--out", required=out_required, help="output directory")
        sp.add_argument("--seed", type=int, help="override the config seed")
        sp.add_argument("--scheme", choices=["gmm2d", "gmm1d", "weighted1d"], help="selection scheme")
        sp.add_argument("--no-prompt-tuning", action="store_true", help="freeze the auxiliary context vectors")
        sp.add_argument("--force", action="store_true", help="replace a non-empty output directory")

    run = sub.add_parser("run", help="run one seeded experiment")
    common(run)
    run.set_defaults(func=cmd_run)

    sweep = sub.add_parser("sweep", help="grid over noise rates x schemes x prompt on/off x seeds")
    common(sweep)
    sweep.add_argument("--noise-rates", help="comma-separated noise rates, e.g. 0.5,0.9")
    sweep.add_argument("--schemes", help="comma-separated schemes, e.g. gmm2d,gmm1d")
    sweep.add_argument("--seeds", help="comma-separated seeds, e.g. 0,1,2")
    sweep.add_argument("--prompt", choices=["on", "off", "both"], help="prompt tuning setting(s) to sweep")
    sweep.add_argument("--parallel", type=int, default=1, metavar="K", help="run K cells concurrently")
    sweep.set_defaults(func=cmd_sweep)

    check = sub.add_parser("selfcheck", help="fast invariant checks")
    check.add_argument("--only", help="comma-separated subset of em,gradients,auc,noise")
    check.set_defaults(func=cmd_selfcheck)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        setup_logging()
        if getattr(args, "parallel", 1) < 1:
            raise ConfigError("--parallel: must be >= 1")
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CSSError, OSError, FloatingPointError, ValueError, RuntimeError) as exc:
        print(f"run failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
