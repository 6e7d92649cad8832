# Command line entry point. Every subcommand maps to one function below, results go to stdout as JSON or to files,
# diagnostics go through logging. Exit code 0 on success, 1 on any fatal error.

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from dotenv import load_dotenv

from ttgan import __version__
from ttgan import preprocess
from ttgan.data import CATEGORICAL, load_csv, load_keel
from ttgan.gan import save_bundle, train, write_loss_history
from ttgan.harness import (
    METHODS,
    ExperimentConfig,
    TwoMoonsSpec,
    emit_scatter,
    grid_search,
    load_config,
    load_dataset,
    make_two_moons,
    prepare,
    resample_and_fit,
    run_experiment,
    run_single,
    write_two_moons_csv,
)
from ttgan.presets import list_presets, load_preset
from ttgan.resample import write_selected
from ttgan.utils import configure_logging, get_output_dir, write_json


def _print_json(payload) -> None:
    print(json.dumps(payload, indent=2, sort_keys=True))


def _experiment_config(args) -> ExperimentConfig:
    """ Config file first, then the flags that were actually given on the command line. """

    cfg = load_config(args.config) if getattr(args, "config", None) else ExperimentConfig(output_dir=get_output_dir())
    if getattr(args, "preset", None):
        cfg = cfg.with_preset(args.preset)
    if getattr(args, "seed", None) is not None:
        cfg = dataclasses.replace(cfg, seeds=(args.seed,))
    if getattr(args, "seeds", None):
        cfg = dataclasses.replace(cfg, seeds=tuple(args.seeds))
    if getattr(args, "output_dir", None):
        cfg = dataclasses.replace(cfg, output_dir=Path(args.output_dir))
    if getattr(args, "workers", None):
        cfg = dataclasses.replace(cfg, workers=args.workers)
    return cfg


def cmd_ingest(args) -> None:
    if args.format == "keel":
        d = load_keel(args.path)
    else:
        if not args.label_column:
            raise ValueError("--label-column is required for csv input")
        d = load_csv(args.path, args.label_column, args.minority_label)

    summary = d.summary()
    if args.pipeline_out:
        pipeline = preprocess.fit(d, args.yeo_johnson)
        preprocess.save_pipeline(pipeline, args.pipeline_out)
        summary["preprocessed_width"] = pipeline.width
    _print_json(summary)


def cmd_synth_moons(args) -> None:
    d = make_two_moons(TwoMoonsSpec(args.n_majority, args.n_minority, args.noise, args.seed))
    write_two_moons_csv(d, args.out)
    _print_json(d.summary())


def cmd_train(args) -> None:
    cfg = _experiment_config(args)
    seed = cfg.seeds[0]
    ttgan_cfg = dataclasses.replace(cfg.ttgan, seed=seed, mode=args.mode or cfg.ttgan.mode)

    prepared = prepare(cfg, load_dataset(cfg.dataset), seed)
    x = prepared.train_pp
    bundle = train(x.x[x.y == 0], x.x[x.y == 1], ttgan_cfg)

    out_dir = Path(cfg.output_dir or get_output_dir())
    save_bundle(bundle, out_dir / f"bundle_{ttgan_cfg.mode}_seed{seed}.npz")
    preprocess.save_pipeline(prepared.pipeline, out_dir / f"pipeline_seed{seed}.json")
    write_loss_history(bundle, out_dir / f"loss_history_{ttgan_cfg.mode}_seed{seed}.tsv")
    _print_json(dataclasses.asdict(bundle.history[-1]))


def cmd_oversample(args) -> None:
    cfg = _experiment_config(args)
    seed = cfg.seeds[0]
    prepared = prepare(cfg, load_dataset(cfg.dataset), seed)
    outcome = resample_and_fit(cfg, prepared.train_pp, args.method, seed)

    out_dir = Path(cfg.output_dir or get_output_dir())
    write_selected(outcome.augmented, out_dir / f"selected_{args.method}_seed{seed}.tsv")
    _print_json({"method": args.method, "seed": seed, "n_train": prepared.train_pp.n_rows,
                 "n_added": outcome.augmented.n_added, "notes": list(outcome.augmented.notes),
                 "diagnostics": outcome.diagnostics.to_dict() if outcome.diagnostics else None})


def cmd_evaluate(args) -> None:
    cfg = _experiment_config(args)
    result = run_single(cfg, load_dataset(cfg.dataset), args.method, cfg.seeds[0])
    _print_json(result.to_dict())


def cmd_benchmark(args) -> None:
    cfg = _experiment_config(args)
    report = run_experiment(cfg)
    _print_json(report.summary)
    if any(not r.ok for r in report.runs) and args.strict:
        raise RuntimeError("At least one run failed (--strict)")


def cmd_scatter(args) -> None:
    cfg = _experiment_config(args)
    seed = cfg.seeds[0]
    prepared = prepare(cfg, load_dataset(cfg.dataset), seed)
    outcome = resample_and_fit(cfg, prepared.train_pp, args.method, seed)

    # raw coordinates are only recoverable when nothing was one-hot encoded
    pipeline = None if CATEGORICAL in prepared.pipeline.kinds or args.preprocessed else prepared.pipeline
    emit_scatter(outcome.augmented, args.out, pipeline)


def cmd_presets(args) -> None:
    if args.name:
        _print_json(load_preset(args.name).to_dict())
        return
    for preset in list_presets(args.executable):
        flag = "" if preset.executable else "  (catboost, not runnable)"
        print(f"{preset.name}: epochs={preset.epochs} lambda_t={preset.lambda_t} lambda_c={preset.lambda_c} "
              f"lambda_i={preset.lambda_i} s={preset.s} p_max={preset.p_max}{flag}")


def cmd_grid_search(args) -> None:
    cfg = _experiment_config(args)
    entries = grid_search(cfg)
    write_json(Path(cfg.output_dir or get_output_dir()) / "grid_search.json", entries)
    _print_json(entries[: args.top])


def _add_config_flags(parser: argparse.ArgumentParser, method: bool = False) -> None:
    parser.add_argument("--config", help="YAML experiment config (defaults to a two-moons run)")
    parser.add_argument("--preset", help="tuned preset name, see the presets command")
    parser.add_argument("--seed", type=int, help="run only this seed")
    parser.add_argument("--output-dir", help="where output files go (default: $TTGAN_OUTPUT_DIR or ./runs)")
    if method:
        parser.add_argument("--method", choices=METHODS, default="ttgan")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ttgan", description="Tabular translation GAN oversampling toolkit")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", help="DEBUG, INFO, WARNING or ERROR (default: $TTGAN_LOG_LEVEL or INFO)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="load a KEEL or CSV file and print its summary")
    p.add_argument("path")
    p.add_argument("--format", choices=("keel", "csv"), default="keel")
    p.add_argument("--label-column")
    p.add_argument("--minority-label")
    p.add_argument("--pipeline-out", help="also fit preprocessing on the whole file and save it as JSON")
    p.add_argument("--yeo-johnson", action="store_true")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("synth-moons", help="write a two-moons CSV")
    p.add_argument("--n-majority", type=int, default=250)
    p.add_argument("--n-minority", type=int, default=25)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth_moons)

    p = sub.add_parser("train", help="train the GAN on the training split and save a checkpoint")
    _add_config_flags(p)
    p.add_argument("--mode", choices=("ttgan", "vanilla"))
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("oversample", help="oversample the training split and write the synthetic rows")
    _add_config_flags(p, method=True)
    p.set_defaults(func=cmd_oversample)

    p = sub.add_parser("evaluate", help="run one method on one seed and print its test metrics")
    _add_config_flags(p, method=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("benchmark", help="run every configured method on every seed and write the report")
    _add_config_flags(p)
    p.add_argument("--seeds", type=int, nargs="+", help="override the seed list")
    p.add_argument("--workers", type=int, help="parallel runs (default: config, then $TTGAN_WORKERS, then 1)")
    p.add_argument("--strict", action="store_true", help="exit 1 if any run failed")
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("scatter", help="write x, y, class rows of a 2-D dataset plus its synthetic rows")
    _add_config_flags(p, method=True)
    p.add_argument("--out", required=True)
    p.add_argument("--preprocessed", action="store_true", help="keep points in the normalised space")
    p.set_defaults(func=cmd_scatter)

    p = sub.add_parser("presets", help="list the tuned presets")
    p.add_argument("--name", help="print a single preset")
    p.add_argument("--executable", action="store_true", help="only presets that can be run")
    p.set_defaults(func=cmd_presets)

    p = sub.add_parser("grid-search", help="score every grid combination on the validation split")
    _add_config_flags(p)
    p.add_argument("--top", type=int, default=5)
    p.set_defaults(func=cmd_grid_search)

    return parser


def main(argv=None) -> int:
    load_dotenv()
    args = build_parser().parse_args(argv)

    try:
        configure_logging(args.log_level)
        logging.debug(f"Starting ttgan v{__version__}: {args.command}")
        args.func(args)
    except Exception as e:
        logging.error(f"{args.command} failed: {e}")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
