"""Iterative pseudo-labeling: teacher, IPL loop, threshold sweep, estimation.

The loop is: train a teacher on the labeled split, then repeatedly
(re)generate pseudo-labels for the unlabeled split with the latest model,
filter them, fuse the kept set with the labeled data, and train for a fixed
number of epochs continuing from the previous weights. Reports carry enough
oracle information (when the corpus retains hidden truth) to reproduce the
filter-comparison and threshold-study tables.

Hidden-truth isolation: training only ever sees features plus hypothesized
labels. Ground truth enters an iteration solely through the oracle paths
(`wer`-mode filtering and report annotation); a corpus stripped of truth runs
the score/none modes to bit-identical weights.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .corpus import CorpusSplits
from .errors import ConfigurationError, InsufficientProbeError
from .metrics import Histogram, histogram, overlap_min_ratio, overlap_rate, wer
from .model import (
    AcousticModel,
    TrainConfig,
    forward,
    init_model,
    save_checkpoint,
    train,
)
from .ctc import greedy_decode
from .pseudolabel import (
    PseudoLabel,
    ThresholdSchedule,
    annotate_oracle_wer,
    generate_pseudolabels,
    next_threshold,
    save_pseudolabels,
    score_filter,
    wer_filter,
)

REPORT_SCHEMA = "iteration-reports"
REPORT_VERSION = 1

FILTER_MODES = ("none", "score", "wer")


@dataclass(frozen=True)
class IplConfig:
    iter_max: int = 3
    filter_mode: str = "none"
    train: TrainConfig = field(default_factory=TrainConfig)
    seed: int = 0
    hidden_dim: int = 0
    score_threshold: float | None = None
    schedule: ThresholdSchedule | None = None
    max_wer: float | None = None
    warm_start: bool = True
    pseudo_weight: float = 1.0
    exclude_blank_scores: bool = False

    def __post_init__(self):
        if self.iter_max < 1:
            raise ConfigurationError("iter_max must be >= 1")
        if self.filter_mode not in FILTER_MODES:
            raise ConfigurationError(f"filter_mode must be one of {FILTER_MODES}")
        if self.filter_mode == "score":
            if (self.score_threshold is None) == (self.schedule is None):
                raise ConfigurationError(
                    "score mode needs exactly one of score_threshold or schedule"
                )
        elif self.score_threshold is not None or self.schedule is not None:
            raise ConfigurationError(f"{self.filter_mode!r} mode takes no score threshold")
        if self.filter_mode == "wer":
            if self.max_wer is None:
                raise ConfigurationError("wer mode needs max_wer")
        elif self.max_wer is not None:
            raise ConfigurationError(f"{self.filter_mode!r} mode takes no max_wer")
        if self.pseudo_weight < 0:
            raise ConfigurationError("pseudo_weight must be >= 0")


@dataclass
class IterationReport:
    iteration: int
    threshold: float | None
    generated: int
    kept: int
    rejected: int
    mean_score_kept: float | None
    oracle_mean_wer_kept: float | None
    oracle_mean_wer_rejected: float | None
    dev_wer: float
    test_wer: float
    trained_on_labeled_only: bool
    wall_clock_sec: float = 0.0  # measured; excluded from serialized records


@dataclass
class TeacherReport:
    dev_wer: float
    test_wer: float
    loss_curve: list[float]
    wall_clock_sec: float = 0.0


@dataclass
class TeacherResult:
    model: AcousticModel
    report: TeacherReport


@dataclass
class IplResult:
    model: AcousticModel
    reports: list[IterationReport]
    teacher_report: TeacherReport | None = None


@dataclass
class SweepResult:
    best_threshold: float
    declined: bool  # False means the schedule ran out without a dev-WER decline
    thresholds: list[float]
    best_dev_wer_per_threshold: list[float]
    reports: list[IterationReport]
    model: AcousticModel
    teacher_report: TeacherReport | None = None


@dataclass
class EstimateResult:
    threshold: float
    probe_size: int
    wer_kept_count: int
    score_kept_count: int
    overlap_jaccard: float
    overlap_min_ratio: float
    score_histogram: Histogram
    wer_histogram: Histogram
    pairs: list[tuple[str, float, float]]  # (utterance_id, score, oracle_wer)


def evaluate_wer(model: AcousticModel, pairs) -> float:
    """Pooled greedy-decode WER of a model over (features, reference) pairs."""
    scored = []
    for fs, ref in pairs:
        hyp, _ = greedy_decode(forward(model, fs))
        scored.append((ref, hyp))
    return wer(scored)


def train_teacher(splits: CorpusSplits, cfg: IplConfig) -> TeacherResult:
    """Train the initial model on the labeled split alone."""
    if not splits.labeled:
        raise ConfigurationError("labeled split is empty")
    t0 = time.perf_counter()
    model = init_model(
        splits.feature_dim, len(splits.vocabulary.tokens), cfg.hidden_dim, seed=cfg.seed
    )
    tcfg = replace(cfg.train, seed=_derived_seed(cfg.seed, 0))
    result = train(model, splits.labeled, tcfg)
    report = TeacherReport(
        dev_wer=evaluate_wer(result.model, splits.dev),
        test_wer=evaluate_wer(result.model, splits.test),
        loss_curve=result.loss_curve,
        wall_clock_sec=time.perf_counter() - t0,
    )
    return TeacherResult(model=result.model, report=report)


def _derived_seed(seed: int, stream: int) -> int:
    return int(np.random.SeedSequence((seed, stream)).generate_state(1)[0])


def _mean_or_none(values) -> float | None:
    vals = list(values)
    return float(np.mean(vals)) if vals else None


def _run_one_iteration(
    model: AcousticModel,
    splits: CorpusSplits,
    cfg: IplConfig,
    iteration: int,
    threshold: float | None,
) -> tuple[AcousticModel, IterationReport, list[PseudoLabel]]:
    t0 = time.perf_counter()
    pls = generate_pseudolabels(
        model, splits.unlabeled, exclude_blank=cfg.exclude_blank_scores
    )
    has_truth = bool(splits.unlabeled_refs)
    if has_truth:
        annotate_oracle_wer(pls, splits.unlabeled_refs)

    if cfg.filter_mode == "none":
        kept = list(pls)
    elif cfg.filter_mode == "score":
        kept = score_filter(pls, threshold)
    else:
        kept = wer_filter(pls, splits.unlabeled_refs, cfg.max_wer)
    kept_ids = {p.utterance_id for p in kept}
    rejected = [p for p in pls if p.utterance_id not in kept_ids]

    features_by_id = {fs.utterance_id: fs for fs in splits.unlabeled}
    fused = list(splits.labeled) + [
        (features_by_id[p.utterance_id], p.hypothesis) for p in kept
    ]
    weights = [1.0] * len(splits.labeled) + [cfg.pseudo_weight] * len(kept)
    tcfg = replace(cfg.train, seed=_derived_seed(cfg.seed, iteration))
    trained = train(model, fused, tcfg, weights=weights)

    report = IterationReport(
        iteration=iteration,
        threshold=threshold,
        generated=len(pls),
        kept=len(kept),
        rejected=len(rejected),
        mean_score_kept=_mean_or_none(p.score for p in kept),
        oracle_mean_wer_kept=_mean_or_none(p.oracle_wer for p in kept) if has_truth else None,
        oracle_mean_wer_rejected=_mean_or_none(p.oracle_wer for p in rejected) if has_truth else None,
        dev_wer=evaluate_wer(trained.model, splits.dev),
        test_wer=evaluate_wer(trained.model, splits.test),
        trained_on_labeled_only=not kept,
        wall_clock_sec=time.perf_counter() - t0,
    )
    return trained.model, report, pls


def _threshold_for_iteration(cfg: IplConfig, iteration: int) -> float | None:
    if cfg.filter_mode != "score":
        return None
    if cfg.score_threshold is not None:
        return cfg.score_threshold
    sched = cfg.schedule
    update = (iteration - 1) // sched.iterations_per_update
    return sched.initial - update * sched.step


def run_ipl(
    splits: CorpusSplits,
    cfg: IplConfig,
    teacher: AcousticModel | None = None,
    out_dir=None,
) -> IplResult:
    """Run the full loop; returns the final model and one report per iteration.

    With ``cfg.warm_start`` each iteration continues training from the previous
    model; otherwise every iteration restarts from the teacher weights. An
    iteration whose filter keeps nothing trains on the labeled split alone and
    is flagged in its report rather than aborting the run.
    """
    out = RunWriter(out_dir)
    teacher_report = None
    if teacher is None:
        tr = train_teacher(splits, cfg)
        teacher, teacher_report = tr.model, tr.report
        out.teacher(teacher, teacher_report)

    model = teacher
    reports: list[IterationReport] = []
    for t in range(1, cfg.iter_max + 1):
        base = teacher if (not cfg.warm_start) else model
        model, report, pls = _run_one_iteration(
            base, splits, cfg, t, _threshold_for_iteration(cfg, t)
        )
        reports.append(report)
        out.iteration(t, model, pls)
    out.finish(reports, best_rule="dev")
    return IplResult(model=model, reports=reports, teacher_report=teacher_report)


def select_threshold(history) -> tuple[float, bool]:
    """Stopping rule over (threshold, dev_wer) pairs in schedule order.

    Scans for the first strict increase in dev WER and returns the threshold
    just before it (declined=True). A sequence that never declines returns its
    last threshold with declined=False, which callers surface as a warning.
    """
    pairs = list(history)
    if not pairs:
        raise ConfigurationError("select_threshold needs at least one entry")
    for k in range(1, len(pairs)):
        if pairs[k][1] > pairs[k - 1][1]:
            return pairs[k - 1][0], True
    return pairs[-1][0], False


def sweep_threshold(
    splits: CorpusSplits,
    cfg: IplConfig,
    schedule: ThresholdSchedule,
    max_updates: int = 8,
    teacher: AcousticModel | None = None,
    out_dir=None,
) -> SweepResult:
    """Lower the boundary stepwise, a few iterations per step, stop on decline.

    Each threshold gets ``schedule.iterations_per_update`` IPL iterations
    (training continues across thresholds); its slot is scored by the best dev
    WER among them. The sweep stops at the first threshold scoring worse than
    its predecessor and returns that predecessor.
    """
    if max_updates < 1:
        raise ConfigurationError("max_updates must be >= 1")
    if not splits.dev:
        raise ConfigurationError("sweep needs a non-empty dev split")
    base_cfg = replace(
        cfg, filter_mode="score", score_threshold=0.0, schedule=None, max_wer=None
    )

    out = RunWriter(out_dir)
    teacher_report = None
    if teacher is None:
        tr = train_teacher(splits, base_cfg)
        teacher, teacher_report = tr.model, tr.report
        out.teacher(teacher, teacher_report)

    model = teacher
    reports: list[IterationReport] = []
    thresholds: list[float] = []
    best_per_threshold: list[float] = []
    sched = schedule
    iteration = 0
    for _ in range(max_updates):
        boundary, sched = next_threshold(sched)
        thresholds.append(boundary)
        run_cfg = replace(base_cfg, score_threshold=boundary)
        slot_dev = []
        for _ in range(schedule.iterations_per_update):
            iteration += 1
            base = teacher if (not cfg.warm_start) else model
            model, report, pls = _run_one_iteration(
                base, splits, run_cfg, iteration, boundary
            )
            reports.append(report)
            slot_dev.append(report.dev_wer)
            out.iteration(iteration, model, pls)
        best_per_threshold.append(min(slot_dev))
        _, declined = select_threshold(zip(thresholds, best_per_threshold))
        if declined:
            break
    best, declined = select_threshold(zip(thresholds, best_per_threshold))
    out.sweep(best, declined, thresholds, best_per_threshold)
    out.finish(reports, best_rule="threshold", thresholds=thresholds,
               best_per_threshold=best_per_threshold, best_threshold=best)
    return SweepResult(
        best_threshold=best,
        declined=declined,
        thresholds=thresholds,
        best_dev_wer_per_threshold=best_per_threshold,
        reports=reports,
        model=model,
        teacher_report=teacher_report,
    )


def estimate_threshold(
    model: AcousticModel,
    probe,
    max_wer: float,
    coverage_frac: float = 0.9,
    min_probe: int = 20,
    exclude_blank: bool = False,
    n_bins: int = 20,
    out_dir=None,
) -> EstimateResult:
    """Estimate a score boundary from a labeled probe, no sweep required.

    Predicts the probe, applies the oracle WER filter at ``max_wer``, then
    scans candidate boundaries down the sorted score values, growing the
    score-kept set {score >= candidate}. A candidate qualifies when the
    score-kept set is no larger than the WER-kept set and at least
    ``coverage_frac`` of it lies inside the WER-kept set; the deepest
    qualifying candidate is returned, i.e. the point where the two filters
    keep nearly the same (and nearly equally many) utterances. When no
    candidate qualifies the boundary 0.0 comes back, which keeps nothing
    (scores are strictly negative for any finite model).
    """
    pairs = list(probe)
    if len(pairs) < min_probe:
        raise InsufficientProbeError(
            f"probe has {len(pairs)} utterances; need at least {min_probe}"
        )
    refs = {fs.utterance_id: lab for fs, lab in pairs}
    pls = generate_pseudolabels(model, [fs for fs, _ in pairs], exclude_blank=exclude_blank)
    wer_kept = wer_filter(pls, refs, max_wer)
    wer_ids = {p.utterance_id for p in wer_kept}

    by_score = sorted(pls, key=lambda p: -p.score)
    unique_scores = sorted({p.score for p in pls}, reverse=True)
    estimate = 0.0  # the empty prefix trivially qualifies
    n_kept = 0
    inside = 0
    i = 0
    for candidate in unique_scores:
        while i < len(by_score) and by_score[i].score >= candidate:
            inside += by_score[i].utterance_id in wer_ids
            n_kept += 1
            i += 1
        if n_kept <= len(wer_kept) and inside >= coverage_frac * n_kept:
            estimate = candidate

    score_kept_ids = {p.utterance_id for p in pls if p.score >= estimate}
    result = EstimateResult(
        threshold=float(estimate),
        probe_size=len(pairs),
        wer_kept_count=len(wer_kept),
        score_kept_count=len(score_kept_ids),
        overlap_jaccard=overlap_rate(score_kept_ids, wer_ids),
        overlap_min_ratio=overlap_min_ratio(score_kept_ids, wer_ids),
        score_histogram=histogram([p.score for p in pls], n_bins),
        wer_histogram=histogram([p.oracle_wer for p in pls], n_bins),
        pairs=[(p.utterance_id, p.score, p.oracle_wer) for p in pls],
    )
    if out_dir is not None:
        write_estimate(result, pls, out_dir)
    return result


# ---------------------------------------------------------------------------
# Run-directory artifacts
# ---------------------------------------------------------------------------


def report_record(report: IterationReport) -> dict:
    """Deterministic serializable view of a report (wall clock excluded)."""
    return {
        "iteration": report.iteration,
        "threshold": report.threshold,
        "generated": report.generated,
        "kept": report.kept,
        "rejected": report.rejected,
        "mean_score_kept": report.mean_score_kept,
        "oracle_mean_wer_kept": report.oracle_mean_wer_kept,
        "oracle_mean_wer_rejected": report.oracle_mean_wer_rejected,
        "dev_wer": report.dev_wer,
        "test_wer": report.test_wer,
        "trained_on_labeled_only": report.trained_on_labeled_only,
    }


def write_reports(path, reports) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write(json.dumps({"schema": REPORT_SCHEMA, "version": REPORT_VERSION}) + "\n")
        for r in reports:
            fh.write(json.dumps(report_record(r), sort_keys=True) + "\n")


def load_reports(path) -> list[dict]:
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or json.loads(lines[0]).get("schema") != REPORT_SCHEMA:
        raise ConfigurationError(f"{path}: not an iteration-report file")
    return [json.loads(line) for line in lines[1:]]


def _fmt(x) -> str:
    if x is None:
        return "-"
    if isinstance(x, bool):
        return "yes" if x else "no"
    if isinstance(x, float):
        return f"{x:.4f}"
    return str(x)


def summary_table(reports, best_iteration: int | None = None) -> str:
    """Fixed-width per-iteration table; the best dev-WER row is starred."""
    header = ("iter", "threshold", "generated", "kept", "mean_score",
              "oracle_wer_kept", "dev_wer", "test_wer", "flag")
    rows = [header]
    for r in reports:
        star = "*" if best_iteration is not None and r.iteration == best_iteration else ""
        flag = "labeled-only" if r.trained_on_labeled_only else ""
        rows.append((
            f"{r.iteration}{star}", _fmt(r.threshold), _fmt(r.generated), _fmt(r.kept),
            _fmt(r.mean_score_kept), _fmt(r.oracle_mean_wer_kept),
            _fmt(r.dev_wer), _fmt(r.test_wer), flag,
        ))
    widths = [max(len(row[c]) for row in rows) for c in range(len(header))]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip() for row in rows]
    return "\n".join(lines) + "\n"


def sweep_summary_table(thresholds, best_per_threshold, best_threshold) -> str:
    rows = [("threshold", "best_dev_wer", "")]
    for thr, dev in zip(thresholds, best_per_threshold):
        mark = "*" if thr == best_threshold else ""
        rows.append((_fmt(thr), _fmt(dev), mark))
    widths = [max(len(row[c]) for row in rows) for c in range(3)]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip() for row in rows]
    return "\n".join(lines) + "\n"


class RunWriter:
    """Writes run-directory artifacts; a no-op when no directory is given."""

    def __init__(self, out_dir):
        self.dir = Path(out_dir) if out_dir is not None else None
        if self.dir is not None:
            self.dir.mkdir(parents=True, exist_ok=True)
        self.timings: list[tuple[str, float]] = []

    def teacher(self, model: AcousticModel, report: TeacherReport) -> None:
        if self.dir is None:
            return
        save_checkpoint(model, self.dir / "teacher_model.json")
        rec = {
            "schema": "teacher-report",
            "version": 1,
        }
        body = {
            "dev_wer": report.dev_wer,
            "test_wer": report.test_wer,
            "loss_curve": report.loss_curve,
        }
        with (self.dir / "teacher_report.jsonl").open("w", encoding="utf-8") as fh:
            fh.write(json.dumps(rec) + "\n")
            fh.write(json.dumps(body, sort_keys=True) + "\n")
        self.timings.append(("teacher", report.wall_clock_sec))

    def iteration(self, t: int, model: AcousticModel, pls) -> None:
        if self.dir is None:
            return
        save_checkpoint(model, self.dir / f"iter-{t:02d}.model.json")
        save_pseudolabels(pls, self.dir / f"iter-{t:02d}.pseudolabels.jsonl")

    def sweep(self, best, declined, thresholds, best_per_threshold) -> None:
        if self.dir is None:
            return
        rec = {
            "schema": "sweep-result",
            "version": 1,
            "best_threshold": best,
            "declined": declined,
            "thresholds": thresholds,
            "best_dev_wer_per_threshold": best_per_threshold,
        }
        (self.dir / "sweep.json").write_text(
            json.dumps(rec, sort_keys=True) + "\n", encoding="utf-8"
        )

    def finish(self, reports, best_rule="dev", thresholds=None,
               best_per_threshold=None, best_threshold=None) -> None:
        if self.dir is None:
            return
        if reports:
            write_reports(self.dir / "reports.jsonl", reports)
            best_iter = min(reports, key=lambda r: r.dev_wer).iteration
            text = summary_table(reports, best_iteration=best_iter)
            if best_rule == "threshold" and thresholds is not None:
                text += "\n" + sweep_summary_table(thresholds, best_per_threshold, best_threshold)
            (self.dir / "summary.txt").write_text(text, encoding="utf-8")
            self.timings.extend((f"iter-{r.iteration:02d}", r.wall_clock_sec) for r in reports)
        if self.timings:
            with (self.dir / "timings.txt").open("w", encoding="utf-8") as fh:
                for name, sec in self.timings:
                    fh.write(f"{name}\t{sec:.3f}s\n")


def write_histogram(hist: Histogram, path, schema: str) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write(json.dumps({"schema": schema, "version": 1}) + "\n")
        for i, count in enumerate(hist.counts):
            rec = {
                "bin_left": hist.bin_edges[i],
                "bin_right": hist.bin_edges[i + 1],
                "count": count,
            }
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def write_scatter(pairs, path) -> None:
    """(utterance_id, score, oracle_wer) triples for external plotting."""
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write(json.dumps({"schema": "score-wer-scatter", "version": 1}) + "\n")
        for uid, score, ower in pairs:
            rec = {"utterance_id": uid, "score": score, "oracle_wer": ower}
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def write_estimate(result: EstimateResult, pls, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rec = {
        "schema": "threshold-estimate",
        "version": 1,
        "threshold": result.threshold,
        "probe_size": result.probe_size,
        "wer_kept_count": result.wer_kept_count,
        "score_kept_count": result.score_kept_count,
        "overlap_jaccard": result.overlap_jaccard,
        "overlap_min_ratio": result.overlap_min_ratio,
    }
    (out / "estimate.json").write_text(json.dumps(rec, sort_keys=True) + "\n", encoding="utf-8")
    save_pseudolabels(pls, out / "probe_pseudolabels.jsonl")
    write_histogram(result.score_histogram, out / "score_hist.jsonl", "score-histogram")
    write_histogram(result.wer_histogram, out / "wer_hist.jsonl", "wer-histogram")
    write_scatter(result.pairs, out / "scatter.jsonl")
