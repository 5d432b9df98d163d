"""command line interface of the workbench

    python -m src [--seed N] [--config FILE] [--out DIR] [-v | -q] <command> ...

exit codes: 0 success, 1 invalid input, configuration or usage, 2 runtime failure
"""
import argparse
import logging
import os
import sys
from dataclasses import replace
from typing import Any, Dict, List, Optional, Sequence

from .bench import GeneratorConfig, generate_from_config
from .bench.pcf import LinearPCF
from .costmodel import ModelConfig, PredictionTable, TrainedModel, predict_workload, train
from .datasources import WorkloadFile, config_section, load_config
from .errors import ConfigurationError, RoqError, ValidationError
from .experiments import (DEFAULT_PCF, SWEEP_ITERATIONS, SWEEP_RUNS, decomposition_table, risk_table, run_ablation,
                          run_evaluation, run_inference_sweep, run_workload_shift)
from .models import UNCERTAINTIES, Workload
from .selection import STRATEGY_TAGS, strategy_from_tag
from .utility import write_csv

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _int_list(text: str) -> List[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated integers, got {text!r}")


def _float_list(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated numbers, got {text!r}")


def _progress(line: str) -> None:
    print(line + " " * 20, end="\r")


def _path(args: argparse.Namespace, given: Optional[str], name: str) -> str:
    return given or os.path.join(args.out, name)


def _load_workload(args: argparse.Namespace) -> Workload:
    return WorkloadFile(_path(args, args.workload, "workload.jsonl")).load()


def _load_model(args: argparse.Namespace) -> TrainedModel:
    return TrainedModel.load(_path(args, args.model, "model.json"))


def _iterations(args: argparse.Namespace, model: TrainedModel) -> int:
    return args.iterations if args.iterations is not None else model.config.mc_iterations


def cmd_generate(args: argparse.Namespace, config: Dict[str, Any]) -> int:
    cfg = GeneratorConfig.from_dict(config_section(config, "generator"))
    overrides = {k: v for k, v in (("n_queries", args.n_queries), ("n_templates", args.n_templates),
                                   ("catalog_size", args.catalog_size)) if v is not None}
    cfg = replace(cfg, seed=args.seed, **overrides)
    workload = generate_from_config(cfg)
    WorkloadFile(os.path.join(args.out, "workload.jsonl")).save(workload)
    print(workload.info())
    return 0


def cmd_train(args: argparse.Namespace, config: Dict[str, Any]) -> int:
    cfg = ModelConfig.from_dict(config_section(config, "model"))
    model, log = train(_load_workload(args), cfg, args.seed)
    model.save(os.path.join(args.out, "model.json"))
    log.write_csv(os.path.join(args.out, "training_log.csv"), args.seed, config)
    print(log.info())
    return 0


def cmd_predict(args: argparse.Namespace, config: Dict[str, Any]) -> int:
    workload = _load_workload(args)
    if args.split != "all":
        workload = workload.split(args.split)
    model = _load_model(args)
    table = predict_workload(model, workload, _iterations(args, model), args.seed, args.record_timing)
    table.write_csv(os.path.join(args.out, "predictions.csv"), args.seed, config)
    return 0


def cmd_select(args: argparse.Namespace, config: Dict[str, Any]) -> int:
    section = config_section(config, "selection")
    tag = args.strategy or section.get("strategy")
    if tag is None:
        raise UsageError("select needs --strategy (or a selection.strategy config entry)")

    def option(name: str, default: Any) -> Any:
        value = getattr(args, name)
        return value if value is not None else section.get(name, default)

    strategy = strategy_from_tag(tag, f_s=option("f_s", 1.0), f_er=option("f_er", 1.0), f_pr=option("f_pr", 1.0),
                                 uncertainty=option("uncertainty", "total"))
    table = PredictionTable.from_csv(_path(args, args.predictions, "predictions.csv"))
    rows = []
    for query_id in table.query_ids():
        result = strategy.select(table.for_query(query_id))
        rows.append((query_id, result.chosen, float(result.scores[result.chosen])))
    write_csv(os.path.join(args.out, "selection.csv"), ("query_id", "plan_id", "score"), rows, args.seed, config)
    logger.info("Selected plans of %d queries with %s", len(rows), strategy.info())
    return 0


def cmd_evaluate(args: argparse.Namespace, config: Dict[str, Any]) -> int:
    workload = _load_workload(args)
    model = _load_model(args)
    report, tuned = run_evaluation(workload, model, _iterations(args, model), args.seed,
                                   uncertainty=args.uncertainty, record_timing=args.record_timing)
    report.write_csv(os.path.join(args.out, "metrics.csv"), args.seed, config)
    rows = [(tag, name, value) for tag, params in tuned.items() for name, value in sorted(params.items())]
    write_csv(os.path.join(args.out, "tuning.csv"), ("strategy", "parameter", "value"), rows, args.seed, config)
    print(report.info())
    return 0


def cmd_ablate(args: argparse.Namespace, config: Dict[str, Any]) -> int:
    workload = _load_workload(args)
    model = _load_model(args)
    report = run_ablation(workload, model, _iterations(args, model), args.seed, args.record_timing)
    report.write_csv(os.path.join(args.out, "ablation.csv"), args.seed, config)
    print(report.info())
    return 0


def cmd_shift(args: argparse.Namespace, config: Dict[str, Any]) -> int:
    section = config_section(config, "experiments")
    held_out = args.held_out if args.held_out is not None else section.get("held_out")
    if held_out is None:
        raise UsageError("shift needs --held-out (or an experiments.held_out config entry)")
    seeds = args.seeds or section.get("seeds") or [args.seed]
    cfg = ModelConfig.from_dict(config_section(config, "model"))
    iterations = args.iterations if args.iterations is not None else cfg.mc_iterations
    report = run_workload_shift(_load_workload(args), held_out, cfg, seeds, iterations, _progress)
    print()
    report.write_csv(os.path.join(args.out, "shift.csv"), args.seed, config)
    return 0


def cmd_sweep(args: argparse.Namespace, config: Dict[str, Any]) -> int:
    section = config_section(config, "experiments")
    iteration_values = args.iterations_list or section.get("iterations", list(SWEEP_ITERATIONS))
    runs = args.runs if args.runs is not None else section.get("runs", SWEEP_RUNS)
    test = _load_workload(args).split("test")
    report = run_inference_sweep(test, _load_model(args), iteration_values, args.seed, runs,
                                 progress=_progress)
    print()
    report.write_csv(os.path.join(args.out, "sweep.csv"), args.seed, config)
    report.write_timing_csv(os.path.join(args.out, "sweep_timing.csv"), args.seed, config)
    return 0


def cmd_table1(args: argparse.Namespace, config: Dict[str, Any]) -> int:
    rows = risk_table()
    print(f"{'':<3}{'sigma_x':>8}{'sigma_y':>8}{'z':>8}{'risk':>9}")
    for name, s_x, s_y, z, risk in rows:
        print(f"{name:<3}{s_x:>8g}{s_y:>8g}{z:>8.2f}{100 * risk:>8.1f}%")
    write_csv(os.path.join(args.out, "table1.csv"), ("scenario", "sigma_x", "sigma_y", "z", "risk"), rows,
              args.seed, config)
    return 0


def cmd_decompose(args: argparse.Namespace, config: Dict[str, Any]) -> int:
    pcf = DEFAULT_PCF
    if args.pcf is not None:
        if len(args.pcf) != 7:
            raise UsageError("--pcf takes mu_a,sigma_a,mu_b,sigma_b,cov_ab,mu_x,sigma_x")
        pcf = LinearPCF(*args.pcf)
    rows = decomposition_table(pcf, args.samples, args.seed)
    print(pcf.info())
    for term, exact, sampled, rel in rows:
        print(f"{term:<10} closed form {exact:10.4f}  monte carlo {sampled:10.4f}  rel diff {100 * rel:.2f}%")
    write_csv(os.path.join(args.out, "decompose.csv"), ("term", "closed_form", "monte_carlo", "relative_difference"),
              rows, args.seed, config)
    return 0


def build_parser() -> argparse.ArgumentParser:
    cmd_parser = _Parser(prog="roq-lab", description="Risk-aware query plan evaluation workbench.")
    cmd_parser.add_argument("--seed", type=int, default=1, help="master seed [default 1]")
    cmd_parser.add_argument("--config", help="json config with generator, model, selection and experiments sections")
    cmd_parser.add_argument("--out", default="out", help="output directory [default out]")
    group = cmd_parser.add_mutually_exclusive_group()
    group.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    group.add_argument("-q", "--quiet", action="store_true", help="warnings only")
    commands = cmd_parser.add_subparsers(dest="command", metavar="command")
    commands.required = True

    def command(name: str, handler, help: str) -> argparse.ArgumentParser:
        parser = commands.add_parser(name, help=help)
        parser.set_defaults(handler=handler)
        return parser

    def inputs(parser: argparse.ArgumentParser, model: bool = True) -> None:
        parser.add_argument("--workload", help="workload file [default <out>/workload.jsonl]")
        if model:
            parser.add_argument("--model", help="checkpoint [default <out>/model.json]")
        parser.add_argument("--iterations", type=int, help="MC dropout passes [default from the model config]")

    parser = command("generate", cmd_generate, "generate a synthetic workload")
    parser.add_argument("--n-queries", type=int)
    parser.add_argument("--n-templates", type=int)
    parser.add_argument("--catalog-size", type=int)

    parser = command("train", cmd_train, "train the probabilistic cost model")
    parser.add_argument("--workload", help="workload file [default <out>/workload.jsonl]")

    parser = command("predict", cmd_predict, "predict cost distributions with MC dropout")
    inputs(parser)
    parser.add_argument("--split", default="test", choices=("train", "validation", "test", "all"))
    parser.add_argument("--record-timing", action="store_true", help="measure per query inference time")

    parser = command("select", cmd_select, "select a plan per query from a prediction table")
    parser.add_argument("--predictions", help="prediction table [default <out>/predictions.csv]")
    parser.add_argument("--strategy", choices=STRATEGY_TAGS)
    parser.add_argument("--f-s", dest="f_s", type=float, help="conservative weight of sigma")
    parser.add_argument("--f-er", dest="f_er", type=float, help="kept fraction by estimation risk")
    parser.add_argument("--f-pr", dest="f_pr", type=float, help="kept fraction by plan risk")
    parser.add_argument("--uncertainty", choices=UNCERTAINTIES)

    parser = command("evaluate", cmd_evaluate, "tune on validation, score every strategy on test")
    inputs(parser)
    parser.add_argument("--uncertainty", choices=UNCERTAINTIES, default="total")
    parser.add_argument("--record-timing", action="store_true")

    parser = command("ablate", cmd_ablate, "model, data and total uncertainty ablation")
    inputs(parser)
    parser.add_argument("--record-timing", action="store_true")

    parser = command("shift", cmd_shift, "workload shift with held-out templates")
    inputs(parser, model=False)
    parser.add_argument("--held-out", type=_int_list, help="comma separated template ids")
    parser.add_argument("--seeds", type=_int_list, help="comma separated seeds [default --seed]")

    parser = command("sweep", cmd_sweep, "inference time and selection stability per MC passes")
    inputs(parser)
    parser.add_argument("--iterations-list", type=_int_list, help="comma separated T values [default 5,10,25,50,100]")
    parser.add_argument("--runs", type=int, help="timed runs per T [default 10]")

    command("table1", cmd_table1, "risk of the lower mean plan under four variance scenarios")

    parser = command("decompose", cmd_decompose, "closed form against Monte Carlo variance decomposition")
    parser.add_argument("--pcf", type=_float_list, help="mu_a,sigma_a,mu_b,sigma_b,cov_ab,mu_x,sigma_x")
    parser.add_argument("--samples", type=int, default=1_000_000)
    return cmd_parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format=LOG_FORMAT)
    try:
        config = load_config(args.config)
        return args.handler(args, config)
    except UsageError as e:
        print(f"roq-lab {args.command}: {e}", file=sys.stderr)
        return 1
    except (ValidationError, ConfigurationError) as e:
        logger.error("%s", e)
        return 1
    except (RoqError, OSError) as e:
        logger.error("%s", e)
        return 2
