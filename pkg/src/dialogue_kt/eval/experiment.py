"""Cross-validated experiment driver and grid search.

A method is a trainer function producing a KTPredictor from train and val
dialogues. The driver runs it per fold, scores the held-out dialogues, and
persists everything needed to rerun the experiment: resolved config, seed,
per-fold records, and aggregated metrics.
"""

from __future__ import annotations

import itertools
import json
import logging
import random
import time
import traceback
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

from dialogue_kt.corpus import AnnotatedDialogue, SplitPlan
from dialogue_kt.eval.metrics import MetricReport, compute_metrics, fold_summary
from dialogue_kt.kt_core import (
    KTPredictor,
    PairContext,
    collect_predictions,
    expand_pseudo_turns,
    save_records,
)

log = logging.getLogger(__name__)

TrainerFn = Callable[
    [Sequence[AnnotatedDialogue], Sequence[AnnotatedDialogue], Mapping, int],
    KTPredictor,
]


class MajorityPredictor:
    """Constant prediction at the train-set correct rate."""

    def __init__(self, rate: float):
        if not 0.0 <= rate <= 1.0:
            raise ValueError(f"rate {rate} outside [0, 1]")
        self.rate = rate

    def predict_masteries(self, context: PairContext) -> list[float]:
        return [self.rate] * len(context.kcs)


def _train_majority(train, val, config, seed) -> KTPredictor:
    labels = [p.correctness for d in train for p in d.labeled_pairs]
    if not labels:
        raise ValueError("majority method needs labeled train dialogues")
    return MajorityPredictor(sum(labels) / len(labels))


def _train_bkt(train, val, config, seed) -> KTPredictor:
    from dialogue_kt.bkt import BKTFitConfig, bkt_as_predictor, bkt_fit

    fit_config = BKTFitConfig(
        max_iter=int(config.get("max_iter", 100)),
        tol=float(config.get("tol", 1e-4)),
        restarts=int(config.get("restarts", 5)),
        seed=seed,
    )
    turns = [pt for d in train for pt in expand_pseudo_turns(d)]
    return bkt_as_predictor(bkt_fit(turns, fit_config))


def _train_dkt(train, val, config, seed) -> KTPredictor:
    from dialogue_kt.dkt_sem.train import train_dkt_sem

    config = dict(config)
    config["use_text"] = False
    return train_dkt_sem(train, val, config, seed)


def _train_dkt_sem(train, val, config, seed) -> KTPredictor:
    from dialogue_kt.dkt_sem.train import train_dkt_sem

    return train_dkt_sem(train, val, config, seed)


def _train_llmkt(train, val, config, seed) -> KTPredictor:
    from dialogue_kt.llmkt.train import train_llmkt

    return train_llmkt(train, val, config, seed)


REGISTRY: dict[str, TrainerFn] = {
    "majority": _train_majority,
    "bkt": _train_bkt,
    "dkt": _train_dkt,
    "dkt-sem": _train_dkt_sem,
    "llmkt": _train_llmkt,
}


@dataclass
class FoldOutcome:
    fold: int
    report: MetricReport | None
    error: str | None = None


@dataclass
class RunArtifact:
    out_dir: Path
    config_path: Path
    metrics_path: Path
    record_paths: list[Path]
    outcomes: list[FoldOutcome]

    @property
    def complete(self) -> bool:
        return all(o.error is None for o in self.outcomes)


def _seed_everything(seed: int) -> None:
    random.seed(seed)
    try:
        import numpy as np

        np.random.seed(seed % (2**32))
    except ImportError:
        pass
    try:
        import torch

        torch.manual_seed(seed)
    except ImportError:
        pass


def _evaluate_fold(
    method: str,
    dialogues: Sequence[AnnotatedDialogue],
    plan: SplitPlan,
    fold: int,
    config: Mapping,
    seed: int,
    eval_role: str = "test",
):
    trainer = REGISTRY[method]
    train = plan.select(dialogues, fold, "train")
    val = plan.select(dialogues, fold, "val")
    held_out = plan.select(dialogues, fold, eval_role)
    if not train or not held_out:
        raise ValueError(f"fold {fold} has an empty train or {eval_role} split")
    _seed_everything(seed + fold)
    predictor = trainer(train, val, config, seed + fold)
    aggregation = str(config.get("aggregation", "mean"))
    records = collect_predictions(predictor, held_out, aggregation=aggregation)
    return compute_metrics(records), records


def run_experiment(
    method: str,
    dialogues: Sequence[AnnotatedDialogue],
    plan: SplitPlan,
    config: Mapping | None = None,
    out_dir: str | Path = "runs/run",
    seed: int = 0,
) -> tuple[dict, RunArtifact]:
    """Train and score one method across all folds of a split plan."""
    if method not in REGISTRY:
        raise ValueError(f"unknown method {method!r}; expected one of {sorted(REGISTRY)}")
    config = dict(config or {})
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    config_path = out_dir / "config.json"
    resolved = {"method": method, "seed": seed, "config": config, "folds": plan.fold_count}
    config_path.write_text(json.dumps(resolved, sort_keys=True, indent=2) + "\n")

    outcomes: list[FoldOutcome] = []
    record_paths: list[Path] = []
    started = time.time()
    for fold in range(plan.fold_count):
        try:
            report, records = _evaluate_fold(method, dialogues, plan, fold, config, seed)
            records_path = out_dir / f"records.fold{fold}.jsonl"
            save_records(records, records_path)
            record_paths.append(records_path)
            outcomes.append(FoldOutcome(fold=fold, report=report))
            log.info("fold %d: %s", fold, report.format_line())
        except Exception as exc:
            log.error("fold %d failed: %s", fold, exc)
            log.debug("%s", traceback.format_exc())
            outcomes.append(FoldOutcome(fold=fold, report=None, error=str(exc)))

    log.info("%s: %d folds in %.1fs", method, plan.fold_count, time.time() - started)
    reports = [o.report for o in outcomes if o.report is not None]
    # Wall time stays out of the summary so reruns persist identical bytes.
    summary = {
        "method": method,
        "seed": seed,
        "incomplete_folds": [o.fold for o in outcomes if o.error is not None],
        "fold_errors": {str(o.fold): o.error for o in outcomes if o.error is not None},
    }
    if reports:
        summary.update(fold_summary(reports))
    metrics_path = out_dir / "metrics.json"
    metrics_path.write_text(json.dumps(summary, sort_keys=True, indent=2) + "\n")

    artifact = RunArtifact(
        out_dir=out_dir,
        config_path=config_path,
        metrics_path=metrics_path,
        record_paths=record_paths,
        outcomes=outcomes,
    )
    return summary, artifact


def _val_auc_scorer(
    method: str,
    dialogues: Sequence[AnnotatedDialogue],
    plan: SplitPlan,
    seed: int,
) -> Callable[[Mapping], float]:
    def score(config: Mapping) -> float:
        aucs = []
        for fold in range(plan.fold_count):
            report, _ = _evaluate_fold(
                method, dialogues, plan, fold, config, seed, eval_role="val"
            )
            if report.auc is not None:
                aucs.append(report.auc)
        if not aucs:
            raise ValueError("validation AUC undefined on every fold")
        return sum(aucs) / len(aucs)

    return score


def grid_search(
    method: str,
    dialogues: Sequence[AnnotatedDialogue],
    plan: SplitPlan,
    grid: Mapping[str, Sequence],
    base_config: Mapping | None = None,
    seed: int = 0,
    scorer: Callable[[Mapping], float] | None = None,
) -> tuple[dict, list[tuple[dict, float]]]:
    """Exhaustive product over grid axes, selected by validation AUC.

    A scorer can be injected (config -> score) to decouple selection logic
    from training cost; by default each config is trained per fold and
    scored on the val dialogues.
    """
    if not grid:
        raise ValueError("grid spec is empty")
    base_config = dict(base_config or {})
    scorer = scorer or _val_auc_scorer(method, dialogues, plan, seed)

    axes = sorted(grid)
    leaderboard: list[tuple[dict, float]] = []
    for combo in itertools.product(*(grid[a] for a in axes)):
        config = dict(base_config)
        config.update(dict(zip(axes, combo)))
        score = scorer(config)
        leaderboard.append((config, score))
        log.info("grid point %s -> %.4f", dict(zip(axes, combo)), score)
    leaderboard.sort(key=lambda cs: -cs[1])
    return leaderboard[0][0], leaderboard
