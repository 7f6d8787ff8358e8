"""Command-line entry point: train / ablate / verify.

Exit code contract: 0 success, 1 usage error (bad flags, unreadable or
invalid config), 2 runtime failure (aborted training run, failed
verification check).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import yaml

from .dro_core import LambdaMode
from .synthetic import TaskConfig, make_heavy_tail_task
from .toy_model import ReferenceParams, init_params
from .trainer import (
    ConfigError,
    NonFiniteLossError,
    TrainConfig,
    evaluate_final_metrics,
    load_train_config,
    train,
    train_config_from_dict,
    write_log_csv,
)
from .verify import run_verification

__all__ = ["main", "cmd_train", "cmd_ablate", "cmd_verify", "AblationSpec"]

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2

ABLATION_SUMMARY_HEADER = (
    "parameter,value,seed,final_p90_adv_loss,final_mean_adv_loss,final_utility_loss,status"
)

_ABLATION_PARAMETERS = ("epsilon", "lambda_treatment")


@dataclass
class AblationSpec:
    """One swept parameter, its value grid, the seed list, and the base run."""

    parameter: str
    values: List[Union[float, str]]
    seeds: List[int]
    base_config: TrainConfig
    base_task: TaskConfig

    def __post_init__(self) -> None:
        if self.parameter not in _ABLATION_PARAMETERS:
            raise ConfigError(
                f"ablation parameter must be one of {_ABLATION_PARAMETERS}, got {self.parameter!r}"
            )
        if not self.values:
            raise ConfigError("ablation values list must be nonempty")
        if not self.seeds:
            raise ConfigError("ablation seeds list must be nonempty")


def load_ablation_spec(path: Path) -> AblationSpec:
    try:
        doc = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read ablation spec {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"ablation spec parse failure in {path}: {exc}") from exc
    if not isinstance(doc, dict) or "ablation" not in doc or "base" not in doc:
        raise ConfigError(f"{path}: ablation spec needs 'ablation' and 'base' sections")
    ab = doc["ablation"]
    base_cfg, base_task = train_config_from_dict(doc["base"])
    return AblationSpec(
        parameter=str(ab.get("parameter", "")),
        values=list(ab.get("values", [])),
        seeds=[int(s) for s in ab.get("seeds", [])],
        base_config=base_cfg,
        base_task=base_task,
    )


def _run_to_artifacts(
    cfg: TrainConfig, task: TaskConfig, out_dir: Path, log_name: str
) -> Tuple[dict, float]:
    """Train on the seeded synthetic task, write the log, return metrics."""
    adv_data, util_data = make_heavy_tail_task(task, cfg.vocab_size, cfg.embed_dim, cfg.seed)
    t0 = time.perf_counter()
    params, records = train(adv_data, util_data, cfg, out_dir=out_dir)
    wall = time.perf_counter() - t0
    write_log_csv(records, out_dir / log_name)
    ref = ReferenceParams.freeze(init_params(cfg.vocab_size, cfg.embed_dim, seed=cfg.seed))
    metrics = evaluate_final_metrics(params, ref, adv_data, util_data, cfg)
    metrics["final_lambda"] = records[-1].lam
    metrics["steps"] = len(records)
    return metrics, wall


def cmd_train(config_path: Path, out_dir: Path) -> int:
    try:
        cfg, task = load_train_config(config_path)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        metrics, wall = _run_to_artifacts(cfg, task, out_dir, "log.csv")
    except NonFiniteLossError as exc:
        print(f"error: training aborted: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    summary = dict(metrics)
    summary["wall_time_s"] = wall
    (out_dir / "summary.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="ascii"
    )
    print(f"wrote {out_dir / 'log.csv'}, {out_dir / 'final_params.ckpt'}, {out_dir / 'summary.json'}")
    return EXIT_OK


def _apply_override(cfg: TrainConfig, parameter: str, value) -> TrainConfig:
    if parameter == "epsilon":
        return dataclasses.replace(cfg, dro=dataclasses.replace(cfg.dro, epsilon=float(value)))
    lam_mode = LambdaMode(str(value))
    return dataclasses.replace(cfg, dro=dataclasses.replace(cfg.dro, lambda_mode=lam_mode))


def _ablation_job(args) -> dict:
    parameter, value, seed, cfg, task, out_dir_str = args
    out_dir = Path(out_dir_str)
    row = {
        "parameter": parameter,
        "value": value,
        "seed": seed,
        "final_p90_adv_loss": float("nan"),
        "final_mean_adv_loss": float("nan"),
        "final_utility_loss": float("nan"),
        "status": "ok",
    }
    try:
        metrics, _ = _run_to_artifacts(cfg, task, out_dir, f"log_{value}_{seed}.csv")
        row.update(
            {
                "final_p90_adv_loss": metrics["final_p90_adv_loss"],
                "final_mean_adv_loss": metrics["final_mean_adv_loss"],
                "final_utility_loss": metrics["final_utility_loss"],
            }
        )
    except (NonFiniteLossError, ValueError) as exc:
        row["status"] = f"failed: {exc}"
    return row


def cmd_ablate(spec_path: Path, out_dir: Path, parallel: int = 1) -> int:
    try:
        spec = load_ablation_spec(spec_path)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out_dir.mkdir(parents=True, exist_ok=True)

    jobs = []
    for value in sorted(spec.values, key=lambda v: (isinstance(v, str), v)):
        for seed in sorted(spec.seeds):
            cfg = _apply_override(spec.base_config, spec.parameter, value)
            cfg = dataclasses.replace(cfg, seed=int(seed))
            jobs.append((spec.parameter, value, int(seed), cfg, spec.base_task, str(out_dir)))

    if parallel > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            rows = list(pool.map(_ablation_job, jobs))
    else:
        rows = [_ablation_job(job) for job in jobs]

    lines = [ABLATION_SUMMARY_HEADER]
    for row in rows:
        lines.append(
            ",".join(
                [
                    str(row["parameter"]),
                    str(row["value"]),
                    str(row["seed"]),
                    repr(float(row["final_p90_adv_loss"])),
                    repr(float(row["final_mean_adv_loss"])),
                    repr(float(row["final_utility_loss"])),
                    str(row["status"]).replace(",", ";"),
                ]
            )
        )
    (out_dir / "ablation_summary.csv").write_text("\n".join(lines) + "\n", encoding="ascii")
    n_failed = sum(1 for r in rows if r["status"] != "ok")
    print(f"{len(rows)} runs, {n_failed} failed; summary at {out_dir / 'ablation_summary.csv'}")
    return EXIT_OK if n_failed == 0 else EXIT_RUNTIME


def cmd_verify(trials: int, seed: int, derivative_fn=None) -> int:
    if trials < 1:
        print("error: --trials must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    results = run_verification(trials=trials, seed=seed, derivative_fn=derivative_fn)
    width = max(len(r.name) for r in results)
    print(f"{'check'.ljust(width)}  status  worst      detail")
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{r.name.ljust(width)}  {status}    {r.worst:<9.2e}  {r.detail}")
    gap = max(r.worst for r in results if r.name.startswith("duality"))
    print(f"max observed duality gap: {gap:.2e}")
    failed = [r for r in results if not r.passed]
    if failed:
        print(
            "FAILED checks: " + ", ".join(f"{r.name} ({r.detail})" for r in failed),
            file=sys.stderr,
        )
        return EXIT_RUNTIME
    print("all checks passed")
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    # usage problems exit 1 (argparse defaults to 2, which we reserve for
    # runtime failures)
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="drotrain",
        description="Distributionally robust adversarial training at desk scale.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run one training job from a YAML config")
    p_train.add_argument("--config", required=True, type=Path, help="YAML config path")
    p_train.add_argument("--out", required=True, type=Path, help="output directory")

    p_ablate = sub.add_parser(
        "ablate",
        help="sweep epsilon or the dual-variable treatment over seeds",
        epilog=(
            "writes log_<value>_<seed>.csv per run and ablation_summary.csv with columns "
            f"`{ABLATION_SUMMARY_HEADER}` (status is `ok` or `failed: <reason>`; a failed "
            "run does not abort the sweep; missing utility metrics are written as nan)"
        ),
    )
    p_ablate.add_argument("--spec", required=True, type=Path, help="YAML ablation spec path")
    p_ablate.add_argument("--out", required=True, type=Path, help="output directory")
    p_ablate.add_argument(
        "--parallel", type=int, default=1, help="number of concurrent runs (default 1)"
    )

    p_verify = sub.add_parser(
        "verify",
        help="run the oracle suite (duality certificate, bisection, gradients, invariants)",
    )
    p_verify.add_argument("--trials", type=int, default=50, help="instances per check")
    p_verify.add_argument("--seed", type=int, default=0, help="base seed for the suite")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "train":
            return cmd_train(args.config, args.out)
        if args.command == "ablate":
            if args.parallel < 1:
                print("error: --parallel must be >= 1", file=sys.stderr)
                return EXIT_USAGE
            return cmd_ablate(args.spec, args.out, parallel=args.parallel)
        if args.command == "verify":
            return cmd_verify(args.trials, args.seed)
        parser.error(f"unknown command {args.command!r}")
    except KeyboardInterrupt:
        return EXIT_RUNTIME
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
