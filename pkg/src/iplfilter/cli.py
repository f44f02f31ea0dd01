"""Command-line entry point.

Every subcommand wraps exactly one library operation, takes ``--out-dir``,
and drops a ``config.json`` snapshot of the resolved configuration (out-dir
excluded) into it, so any run can be re-launched byte-identically with
``--config <run>/config.json``. Resolution order: built-in defaults, then the
config file, then explicit flags.

Exit codes: 0 success, 2 usage/validation problems (unknown flags, missing
paths, bad config), 1 runtime failure. Failures print one machine-parseable
JSON record to stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .corpus import CorpusGenConfig, generate_corpus, load_manifest, save_manifest
from .errors import (
    ConfigurationError,
    InsufficientProbeError,
    ManifestError,
)
from .metrics import histogram
from .model import TrainConfig, load_checkpoint
from .pipeline import (
    IplConfig,
    IterationReport,
    RunWriter,
    estimate_threshold,
    load_reports,
    run_ipl,
    summary_table,
    sweep_summary_table,
    sweep_threshold,
    train_teacher,
    write_histogram,
    write_scatter,
)
from .pseudolabel import (
    ThresholdSchedule,
    annotate_oracle_wer,
    generate_pseudolabels,
    load_pseudolabels,
    save_pseudolabels,
    score_filter,
    wer_filter,
)

CONFIG_SCHEMA = "run-config"

_USAGE_ERRORS = (ConfigurationError, ManifestError, InsufficientProbeError, FileNotFoundError)

_GEN_DEFAULTS = {
    "seed": 0,
    "vocab_size": 8,
    "feature_dim": 8,
    "label_len_min": 2,
    "label_len_max": 6,
    "frames_per_token_min": 1,
    "frames_per_token_max": 4,
    "noise_sigma": 0.5,
    "n_labeled": 8,
    "n_unlabeled": 200,
    "n_dev": 64,
    "n_test": 64,
}

_TRAIN_DEFAULTS = {
    "seed": 0,
    "hidden_dim": 0,
    "epochs": 30,
    "batch_size": 8,
    "base_lr": 0.15,
    "optimizer": "adam",
    "warmup_frac": 0.10,
    "hold_frac": 0.40,
}

_IPL_DEFAULTS = {
    **_TRAIN_DEFAULTS,
    "corpus": None,
    "iter_max": 3,
    "filter_mode": "none",
    "score_threshold": None,
    "max_wer": None,
    "warm_start": True,
    "pseudo_weight": 1.0,
    "exclude_blank": False,
}

_SWEEP_DEFAULTS = {
    **_TRAIN_DEFAULTS,
    "corpus": None,
    "initial": -0.05,
    "step": 0.03,
    "iters_per_update": 3,
    "max_updates": 8,
}

_ESTIMATE_DEFAULTS = {
    **_TRAIN_DEFAULTS,
    "corpus": None,
    "model": None,
    "max_wer": 0.10,
    "coverage": 0.9,
    "min_probe": 20,
    "probe": "dev",
    "probe_size": None,
    "exclude_blank": False,
    "bins": 20,
}

_PSEUDOLABEL_DEFAULTS = {
    "corpus": None,
    "model": None,
    "exclude_blank": False,
    "annotate_oracle": False,
}

_FILTER_DEFAULTS = {
    "pseudo_labels": None,
    "corpus": None,
    "score_threshold": None,
    "max_wer": None,
}

_REPORT_DEFAULTS = {"run_dir": None, "bins": 20}


def _resolve(command: str, defaults: dict, args: argparse.Namespace) -> dict:
    cfg = dict(defaults)
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.is_file():
            raise FileNotFoundError(f"config file not found: {path}")
        try:
            snap = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"{path}: invalid config JSON: {e.msg}") from e
        if snap.get("schema") != CONFIG_SCHEMA:
            raise ConfigurationError(f"{path}: not a {CONFIG_SCHEMA} file")
        if snap.get("command") != command:
            raise ConfigurationError(
                f"{path}: snapshot is for command {snap.get('command')!r}, not {command!r}"
            )
        for key, value in snap.get("config", {}).items():
            if key not in cfg:
                raise ConfigurationError(f"{path}: unknown config key {key!r}")
            cfg[key] = value
    for key in cfg:
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    return cfg


def _write_snapshot(out_dir: Path, command: str, cfg: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    rec = {"schema": CONFIG_SCHEMA, "version": 1, "command": command, "config": cfg}
    (out_dir / "config.json").write_text(
        json.dumps(rec, sort_keys=True) + "\n", encoding="utf-8"
    )


def _require(cfg: dict, key: str, command: str):
    if cfg[key] is None:
        raise ConfigurationError(f"{command}: --{key.replace('_', '-')} is required")
    return cfg[key]


def _load_corpus(cfg: dict, command: str):
    path = Path(_require(cfg, "corpus", command))
    if not path.is_dir():
        raise FileNotFoundError(f"corpus directory not found: {path}")
    return load_manifest(path)


def _gen_config(cfg: dict) -> CorpusGenConfig:
    return CorpusGenConfig(
        vocab_size=cfg["vocab_size"],
        feature_dim=cfg["feature_dim"],
        label_len=(cfg["label_len_min"], cfg["label_len_max"]),
        frames_per_token=(cfg["frames_per_token_min"], cfg["frames_per_token_max"]),
        noise_sigma=cfg["noise_sigma"],
        n_labeled=cfg["n_labeled"],
        n_unlabeled=cfg["n_unlabeled"],
        n_dev=cfg["n_dev"],
        n_test=cfg["n_test"],
    )


def _train_config(cfg: dict) -> TrainConfig:
    return TrainConfig(
        epochs=cfg["epochs"],
        batch_size=cfg["batch_size"],
        base_lr=cfg["base_lr"],
        warmup_frac=cfg["warmup_frac"],
        hold_frac=cfg["hold_frac"],
        seed=cfg["seed"],
        optimizer=cfg["optimizer"],
    )


def _ipl_config(cfg: dict) -> IplConfig:
    return IplConfig(
        iter_max=cfg["iter_max"],
        filter_mode=cfg["filter_mode"],
        train=_train_config(cfg),
        seed=cfg["seed"],
        hidden_dim=cfg["hidden_dim"],
        score_threshold=cfg["score_threshold"],
        max_wer=cfg["max_wer"],
        warm_start=cfg["warm_start"],
        pseudo_weight=cfg["pseudo_weight"],
        exclude_blank_scores=cfg["exclude_blank"],
    )


def cmd_gen_corpus(args) -> int:
    cfg = _resolve("gen-corpus", _GEN_DEFAULTS, args)
    out = Path(args.out_dir)
    splits = generate_corpus(_gen_config(cfg), seed=cfg["seed"])
    _write_snapshot(out, "gen-corpus", cfg)
    save_manifest(splits, out)
    return 0


def cmd_train_teacher(args) -> int:
    cfg = _resolve("train-teacher", _IPL_DEFAULTS, args)
    splits = _load_corpus(cfg, "train-teacher")
    out = Path(args.out_dir)
    _write_snapshot(out, "train-teacher", cfg)
    result = train_teacher(splits, _ipl_config(cfg))
    writer = RunWriter(out)
    writer.teacher(result.model, result.report)
    writer.finish([])
    (out / "summary.txt").write_text(
        f"teacher dev_wer {result.report.dev_wer:.4f} test_wer {result.report.test_wer:.4f}\n",
        encoding="utf-8",
    )
    return 0


def cmd_pseudolabel(args) -> int:
    cfg = _resolve("pseudolabel", _PSEUDOLABEL_DEFAULTS, args)
    splits = _load_corpus(cfg, "pseudolabel")
    model_path = Path(_require(cfg, "model", "pseudolabel"))
    if not model_path.is_file():
        raise FileNotFoundError(f"model checkpoint not found: {model_path}")
    model = load_checkpoint(model_path)
    out = Path(args.out_dir)
    _write_snapshot(out, "pseudolabel", cfg)
    pls = generate_pseudolabels(model, splits.unlabeled, exclude_blank=cfg["exclude_blank"])
    if cfg["annotate_oracle"]:
        annotate_oracle_wer(pls, splits.unlabeled_refs)
    save_pseudolabels(pls, out / "pseudolabels.jsonl")
    return 0


def cmd_filter(args) -> int:
    cfg = _resolve("filter", _FILTER_DEFAULTS, args)
    if (cfg["score_threshold"] is None) == (cfg["max_wer"] is None):
        raise ConfigurationError("filter: exactly one of --score-threshold / --max-wer")
    pls_path = Path(_require(cfg, "pseudo_labels", "filter"))
    if not pls_path.is_file():
        raise FileNotFoundError(f"pseudo-label file not found: {pls_path}")
    pls = load_pseudolabels(pls_path)
    out = Path(args.out_dir)
    _write_snapshot(out, "filter", cfg)
    if cfg["score_threshold"] is not None:
        kept = score_filter(pls, cfg["score_threshold"])
    else:
        splits = _load_corpus(cfg, "filter")
        kept = wer_filter(pls, splits.unlabeled_refs, cfg["max_wer"])
        save_pseudolabels(pls, out / "annotated.jsonl")  # oracle_wer now filled on all
    save_pseudolabels(kept, out / "filtered.jsonl")
    return 0


def cmd_ipl(args) -> int:
    cfg = _resolve("ipl", _IPL_DEFAULTS, args)
    splits = _load_corpus(cfg, "ipl")
    out = Path(args.out_dir)
    _write_snapshot(out, "ipl", cfg)
    run_ipl(splits, _ipl_config(cfg), out_dir=out)
    return 0


def cmd_sweep(args) -> int:
    cfg = _resolve("sweep", _SWEEP_DEFAULTS, args)
    splits = _load_corpus(cfg, "sweep")
    out = Path(args.out_dir)
    _write_snapshot(out, "sweep", cfg)
    schedule = ThresholdSchedule(
        initial=cfg["initial"], step=cfg["step"], iterations_per_update=cfg["iters_per_update"]
    )
    ipl_cfg = IplConfig(
        iter_max=1,  # unused by the sweep; iterations come from the schedule
        filter_mode="score",
        score_threshold=cfg["initial"],
        train=_train_config(cfg),
        seed=cfg["seed"],
        hidden_dim=cfg["hidden_dim"],
    )
    sweep_threshold(splits, ipl_cfg, schedule, max_updates=cfg["max_updates"], out_dir=out)
    return 0


def cmd_estimate_threshold(args) -> int:
    cfg = _resolve("estimate-threshold", _ESTIMATE_DEFAULTS, args)
    splits = _load_corpus(cfg, "estimate-threshold")
    out = Path(args.out_dir)
    _write_snapshot(out, "estimate-threshold", cfg)
    if cfg["model"] is not None:
        model = load_checkpoint(Path(cfg["model"]))
    else:
        result = train_teacher(splits, _ipl_config({**_IPL_DEFAULTS, **{
            k: cfg[k] for k in _TRAIN_DEFAULTS}}))
        writer = RunWriter(out)
        writer.teacher(result.model, result.report)
        writer.finish([])
        model = result.model
    if cfg["probe"] not in ("dev", "labeled"):
        raise ConfigurationError("estimate-threshold: --probe must be 'dev' or 'labeled'")
    probe = splits.dev if cfg["probe"] == "dev" else splits.labeled
    if cfg["probe_size"] is not None:
        probe = probe[: cfg["probe_size"]]
    estimate_threshold(
        model,
        probe,
        max_wer=cfg["max_wer"],
        coverage_frac=cfg["coverage"],
        min_probe=cfg["min_probe"],
        exclude_blank=cfg["exclude_blank"],
        n_bins=cfg["bins"],
        out_dir=out,
    )
    return 0


def cmd_report(args) -> int:
    cfg = _resolve("report", _REPORT_DEFAULTS, args)
    run_dir = Path(_require(cfg, "run_dir", "report"))
    if not run_dir.is_dir():
        raise FileNotFoundError(f"run directory not found: {run_dir}")
    out = Path(args.out_dir)
    _write_snapshot(out, "report", cfg)

    text = ""
    reports_path = run_dir / "reports.jsonl"
    if reports_path.is_file():
        records = load_reports(reports_path)
        reports = [IterationReport(**rec) for rec in records]
        best_iter = min(reports, key=lambda r: r.dev_wer).iteration
        text += summary_table(reports, best_iteration=best_iter)
    sweep_path = run_dir / "sweep.json"
    if sweep_path.is_file():
        sweep = json.loads(sweep_path.read_text(encoding="utf-8"))
        text += "\n" + sweep_summary_table(
            sweep["thresholds"],
            sweep["best_dev_wer_per_threshold"],
            sweep["best_threshold"],
        )
    estimate_path = run_dir / "estimate.json"
    if estimate_path.is_file():
        est = json.loads(estimate_path.read_text(encoding="utf-8"))
        text += (
            f"estimated threshold {est['threshold']:.4f} "
            f"(score-kept {est['score_kept_count']}, wer-kept {est['wer_kept_count']}, "
            f"jaccard {est['overlap_jaccard']:.4f}, min-ratio {est['overlap_min_ratio']:.4f})\n"
        )
    if not text:
        raise ConfigurationError(f"{run_dir}: no reports.jsonl, sweep.json, or estimate.json")
    (out / "report_summary.txt").write_text(text, encoding="utf-8")

    pls_files = sorted(run_dir.glob("iter-*.pseudolabels.jsonl"))
    if not pls_files and (run_dir / "probe_pseudolabels.jsonl").is_file():
        pls_files = [run_dir / "probe_pseudolabels.jsonl"]
    if pls_files:
        pls = load_pseudolabels(pls_files[-1])
        write_histogram(
            histogram([p.score for p in pls], cfg["bins"]), out / "score_hist.jsonl",
            "score-histogram",
        )
        if all(p.oracle_wer is not None for p in pls):
            write_histogram(
                histogram([p.oracle_wer for p in pls], cfg["bins"]), out / "wer_hist.jsonl",
                "wer-histogram",
            )
            write_scatter(
                [(p.utterance_id, p.score, p.oracle_wer) for p in pls],
                out / "scatter.jsonl",
            )
    return 0


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="config snapshot to start from")
    p.add_argument("--out-dir", required=True, help="directory for run artifacts")
    p.add_argument("--seed", type=int)


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--hidden-dim", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--base-lr", type=float)
    p.add_argument("--optimizer", choices=["adam", "sgd"])
    p.add_argument("--warmup-frac", type=float)
    p.add_argument("--hold-frac", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="iplfilter",
        description="Confidence-filtered iterative pseudo-labeling on a synthetic CTC corpus",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-corpus", help="generate a synthetic corpus manifest")
    _add_common(p)
    p.add_argument("--vocab-size", type=int)
    p.add_argument("--feature-dim", type=int)
    p.add_argument("--label-len-min", type=int)
    p.add_argument("--label-len-max", type=int)
    p.add_argument("--frames-per-token-min", type=int)
    p.add_argument("--frames-per-token-max", type=int)
    p.add_argument("--noise-sigma", type=float)
    p.add_argument("--n-labeled", type=int)
    p.add_argument("--n-unlabeled", type=int)
    p.add_argument("--n-dev", type=int)
    p.add_argument("--n-test", type=int)
    p.set_defaults(func=cmd_gen_corpus)

    p = sub.add_parser("train-teacher", help="train the teacher on the labeled split")
    _add_common(p)
    p.add_argument("--corpus")
    _add_train_flags(p)
    p.set_defaults(func=cmd_train_teacher)

    p = sub.add_parser("pseudolabel", help="decode the unlabeled split with a model")
    _add_common(p)
    p.add_argument("--corpus")
    p.add_argument("--model")
    p.add_argument("--exclude-blank", action=argparse.BooleanOptionalAction)
    p.add_argument("--annotate-oracle", action=argparse.BooleanOptionalAction)
    p.set_defaults(func=cmd_pseudolabel)

    p = sub.add_parser("filter", help="filter a pseudo-label file by score or oracle WER")
    _add_common(p)
    p.add_argument("--pseudo-labels")
    p.add_argument("--corpus", help="needed for --max-wer (oracle refs)")
    p.add_argument("--score-threshold", type=float)
    p.add_argument("--max-wer", type=float)
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("ipl", help="run the iterative pseudo-labeling loop")
    _add_common(p)
    p.add_argument("--corpus")
    p.add_argument("--iter-max", type=int)
    p.add_argument("--filter-mode", choices=["none", "score", "wer"])
    p.add_argument("--score-threshold", type=float)
    p.add_argument("--max-wer", type=float)
    p.add_argument("--warm-start", action=argparse.BooleanOptionalAction)
    p.add_argument("--pseudo-weight", type=float)
    p.add_argument("--exclude-blank", action=argparse.BooleanOptionalAction)
    _add_train_flags(p)
    p.set_defaults(func=cmd_ipl)

    p = sub.add_parser("sweep", help="decreasing-threshold sweep with the stopping rule")
    _add_common(p)
    p.add_argument("--corpus")
    p.add_argument("--initial", type=float)
    p.add_argument("--step", type=float)
    p.add_argument("--iters-per-update", type=int)
    p.add_argument("--max-updates", type=int)
    _add_train_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("estimate-threshold", help="probe-based threshold estimation")
    _add_common(p)
    p.add_argument("--corpus")
    p.add_argument("--model", help="checkpoint to probe with (default: train a teacher)")
    p.add_argument("--max-wer", type=float)
    p.add_argument("--coverage", type=float)
    p.add_argument("--min-probe", type=int)
    p.add_argument("--probe", choices=["dev", "labeled"])
    p.add_argument("--probe-size", type=int)
    p.add_argument("--exclude-blank", action=argparse.BooleanOptionalAction)
    p.add_argument("--bins", type=int)
    _add_train_flags(p)
    p.set_defaults(func=cmd_estimate_threshold)

    p = sub.add_parser("report", help="emit summary table, histograms, and scatter data")
    _add_common(p)
    p.add_argument("--run-dir")
    p.add_argument("--bins", type=int)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _USAGE_ERRORS as e:
        print(json.dumps({"error": type(e).__name__, "message": str(e)}), file=sys.stderr)
        return 2
    except Exception as e:  # noqa: BLE001 - single reporting point for runtime failures
        print(json.dumps({"error": type(e).__name__, "message": str(e)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
