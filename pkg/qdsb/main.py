"""Command-line entry point: gen, train, sweep, verify and plot."""

import argparse
import sys
from pathlib import Path
from typing import Any, Dict, List, NoReturn, Optional, Sequence

from pydantic import ValidationError

from qdsb import __version__
from qdsb.core.config import load_config_file, settings
from qdsb.core.exceptions import (
    EXIT_FAILURE,
    EXIT_OK,
    EXIT_USAGE,
    ConfigurationError,
    QdsbError,
    VerificationError,
)
from qdsb.core.logging import get_logger, setup_logging
from qdsb.schemas.training import RunManifest, TrainConfig
from qdsb.services.dataset_service import TASKS
from qdsb.services.experiment_service import cmd_gen, cmd_plot, cmd_sweep, cmd_train, cmd_verify

logger = get_logger("qdsb")

# config-file key -> RunManifest field
MANIFEST_KEYS = {
    "task": "task",
    "seeds": "seeds",
    "out": "output_dir",
    "output_dir": "output_dir",
    "n_train": "n_train",
    "n_eval": "n_eval",
    "data_seed": "data_seed",
    "workers": "workers",
    "source": "source_path",
    "target": "target_path",
    "eval_source": "eval_source_path",
    "eval_target": "eval_target_path",
}
CONFIG_KEYS = set(TrainConfig.model_fields) - {"seed"}
DEFAULT_K_LIST = "1,4,16,64,256"


class UsageParser(argparse.ArgumentParser):
    """argparse with usage errors mapped to exit code 1"""

    def error(self, message: str) -> NoReturn:
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_train_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("training configuration")
    s = argparse.SUPPRESS
    group.add_argument("--sigma", type=float, default=s)
    group.add_argument("--tau", type=float, default=s, help="entropic regularization (default 2 sigma^2)")
    group.add_argument("--anchors", dest="anchors_k", type=int, default=s)
    group.add_argument("--refresh-epochs", dest="refresh_epochs", type=int, default=s, help="0 disables refresh")
    group.add_argument("--epochs", type=int, default=s)
    group.add_argument("--batch-size", dest="batch_size", type=int, default=s)
    group.add_argument("--lr", type=float, default=s)
    group.add_argument("--weight-decay", dest="weight_decay", type=float, default=s)
    group.add_argument("--eval-every", dest="eval_every", type=int, default=s)
    group.add_argument("--eval-points", dest="eval_points", type=int, default=s)
    group.add_argument("--em-steps", dest="em_steps", type=int, default=s)
    group.add_argument("--rollout-batch", dest="rollout_batch", type=int, default=s)
    group.add_argument("--coupling", dest="coupling_mode", choices=["qdsb", "minibatch_ot", "independent"], default=s)
    group.add_argument("--ot-mode", dest="ot_mode", choices=["entropic", "exact"], default=s)
    group.add_argument("--cost", choices=["sqeuclidean", "euclidean"], default=s)
    group.add_argument("--sim-mode", dest="sim_mode", choices=["sde", "ode"], default=s)
    group.add_argument("--hidden", default=s, help="comma separated hidden widths")
    group.add_argument("--max-train-seconds", dest="max_train_seconds", type=float, default=s)


def _add_data_flags(parser: argparse.ArgumentParser, with_files: bool) -> None:
    s = argparse.SUPPRESS
    parser.add_argument("--seeds", default=s, help="comma separated seeds (default 0,1,2,3,4)")
    parser.add_argument("--n-train", dest="n_train", type=int, default=s)
    parser.add_argument("--n-eval", dest="n_eval", type=int, default=s)
    parser.add_argument("--data-seed", dest="data_seed", type=int, default=s)
    if with_files:
        parser.add_argument("--source", type=Path, default=s)
        parser.add_argument("--target", type=Path, default=s)
        parser.add_argument("--eval-source", dest="eval_source", type=Path, default=s)
        parser.add_argument("--eval-target", dest="eval_target", type=Path, default=s)
        parser.add_argument("--workers", type=int, default=s)


def build_parser() -> argparse.ArgumentParser:
    parser = UsageParser(prog="qdsb", description="Quantized diffusion Schrödinger bridges")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", default=None, help=f"logging level (default {settings.LOG_LEVEL})")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=UsageParser)

    gen = sub.add_parser("gen", help="write synthetic task data")
    gen.add_argument("task", choices=sorted(TASKS))
    gen.add_argument("--n", dest="n_train", type=int, default=settings.N_TRAIN)
    gen.add_argument("--n-eval", dest="n_eval", type=int, default=settings.N_EVAL)
    gen.add_argument("--seed", type=int, default=settings.DATA_SEED)
    gen.add_argument("--out", type=Path, default=Path("data"))

    train = sub.add_parser("train", help="train one model per seed")
    train.add_argument("--config", type=Path, default=None, help="key = value config file")
    train.add_argument("--task", choices=[*sorted(TASKS), "csv"], default=argparse.SUPPRESS)
    train.add_argument("--out", type=Path, default=argparse.SUPPRESS)
    _add_data_flags(train, with_files=True)
    _add_train_flags(train)

    sweep = sub.add_parser("sweep", help="final MMD against anchor count")
    sweep.add_argument("--config", type=Path, default=None)
    sweep.add_argument("--task", choices=sorted(TASKS), default=argparse.SUPPRESS)
    sweep.add_argument("--k-list", dest="k_list", default=argparse.SUPPRESS, help=f"default {DEFAULT_K_LIST}")
    sweep.add_argument("--out", type=Path, default=Path(settings.OUTPUT_DIR) / "sweep.csv")
    _add_data_flags(sweep, with_files=False)
    _add_train_flags(sweep)

    verify = sub.add_parser("verify", help="randomized checks of the stability bounds")
    verify.add_argument("--out", type=Path, default=Path(settings.OUTPUT_DIR) / "verify.csv")
    verify.add_argument("--seed", type=int, default=0)
    verify.add_argument("--endpoint-instances", dest="endpoint_instances", type=int, default=200)
    verify.add_argument("--kcenter-instances", dest="kcenter_instances", type=int, default=100)
    verify.add_argument("--value-n", dest="value_n", type=int, default=256)
    verify.add_argument("--coupling-seeds", dest="coupling_seeds", type=int, default=20)
    verify.add_argument("--inject-fault", dest="inject_fault", action="store_true", help=argparse.SUPPRESS)

    plot = sub.add_parser("plot", help="render metrics or sweep CSVs to SVG")
    plot.add_argument("inputs", nargs="+", type=Path)
    plot.add_argument("--out", type=Path, required=True)
    return parser


def _parse_ints(text: str, name: str) -> List[int]:
    try:
        return [int(item) for item in str(text).split(",") if item.strip()]
    except ValueError:
        raise ConfigurationError(f"{name} must be a comma separated list of integers, got {text!r}") from None


def _config_file_values(args: argparse.Namespace) -> Dict[str, Any]:
    return load_config_file(args.config) if getattr(args, "config", None) else {}


def resolve_run(args: argparse.Namespace, command_keys: Sequence[str] = ()) -> RunManifest:
    """Config file values overlaid with explicitly given flags.

    `command_keys` are extra config-file keys the calling command reads itself.
    """
    merged: Dict[str, Any] = {k: v for k, v in _config_file_values(args).items() if k not in command_keys}
    merged.update({k: v for k, v in vars(args).items() if k in CONFIG_KEYS or k in MANIFEST_KEYS})

    unknown = sorted(set(merged) - CONFIG_KEYS - set(MANIFEST_KEYS))
    if unknown:
        raise ConfigurationError(f"unknown configuration keys: {', '.join(unknown)}")

    manifest_values = {MANIFEST_KEYS[k]: v for k, v in merged.items() if k in MANIFEST_KEYS}
    manifest_values.setdefault("task", "8g-moons")
    manifest_values.setdefault("output_dir", settings.OUTPUT_DIR)
    manifest_values.setdefault("seeds", settings.DEFAULT_SEEDS)
    manifest_values.setdefault("n_train", settings.N_TRAIN)
    manifest_values.setdefault("n_eval", settings.N_EVAL)
    manifest_values.setdefault("data_seed", settings.DATA_SEED)
    try:
        config = TrainConfig(**{k: v for k, v in merged.items() if k in CONFIG_KEYS})
        return RunManifest(config=config, **manifest_values)
    except ValidationError as e:
        raise ConfigurationError(f"invalid configuration: {e}") from e


def _run(args: argparse.Namespace) -> int:
    if args.command == "gen":
        paths = cmd_gen(args.task, args.n_train, args.n_eval, args.seed, args.out)
        for path in paths:
            print(path)
        return EXIT_OK

    if args.command == "train":
        summary = cmd_train(resolve_run(args))
        for seed, message in sorted(summary.failures.items()):
            print(f"seed {seed}: FAILED ({message})")
        if summary.line:
            print(summary.line)
        return EXIT_FAILURE if summary.failures else EXIT_OK

    if args.command == "sweep":
        manifest = resolve_run(args, command_keys=("k_list",))
        k_list = getattr(args, "k_list", None) or _config_file_values(args).get("k_list") or DEFAULT_K_LIST
        frame = cmd_sweep(
            manifest.task,
            _parse_ints(k_list, "k-list"),
            manifest.config.epochs,
            manifest.seeds,
            args.out,
            base_config=manifest.config,
            n_train=manifest.n_train,
            n_eval=manifest.n_eval,
            data_seed=manifest.data_seed,
        )
        print(frame.to_string(index=False))
        return EXIT_OK

    if args.command == "verify":
        report = cmd_verify(
            args.out,
            inject_fault=args.inject_fault,
            seed=args.seed,
            endpoint_instances=args.endpoint_instances,
            kcenter_instances=args.kcenter_instances,
            value_n=args.value_n,
            coupling_seeds=args.coupling_seeds,
        )
        print(f"{len(report.records)} records, {'all bounds hold' if report.passed else 'VIOLATIONS'}")
        for violation in report.violations[:20]:
            print(f"  {violation}")
        if not report.passed:
            raise VerificationError(f"{len(report.violations)} bound violations, see {args.out}")
        return EXIT_OK

    if args.command == "plot":
        cmd_plot(args.inputs, args.out)
        print(args.out)
        return EXIT_OK

    raise ConfigurationError(f"unknown command {args.command!r}")


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(args.log_level)
    try:
        return _run(args)
    except QdsbError as e:
        logger.error(f"{args.command} failed: {e}")
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except OSError as e:
        logger.error(f"{args.command} failed: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
