"""Scoring and analysis: challenge-style P/R/F1, McNemar, length stats.

The headline metric is micro-averaged detection+classification F1 over
the four interaction classes pooled together: a positive prediction with
the wrong class counts against both the predicted class (FP) and the
gold class (FN). Instances removed by the negative filter are reinserted
as predicted-Negative before scoring.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .labels import LABELS, NEGATIVE_ID, NUM_CLASSES, POSITIVE_IDS


def _prf(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f1


@dataclass
class EvalReport:
    confusion: list[list[int]]
    per_class: dict[str, dict[str, float]]
    micro_p: float
    micro_r: float
    micro_f1: float
    mavg: float
    n_scored: int
    n_filtered: int
    n_filtered_positive: int
    counts: dict[str, int] = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(self.__dict__, indent=1)


def evaluate(gold: Sequence[int], predictions: Sequence[int],
             filtered_out: Sequence[int] = ()) -> EvalReport:
    """Score predictions against gold labels.

    `filtered_out` carries the gold labels of instances the negative
    filter removed; they are scored as predicted Negative.
    """
    if len(gold) != len(predictions):
        raise ValueError(
            f"{len(predictions)} predictions for {len(gold)} gold instances"
        )
    cm = np.zeros((NUM_CLASSES, NUM_CLASSES), dtype=int)
    for g, p in zip(gold, predictions):
        if not (0 <= g < NUM_CLASSES and 0 <= p < NUM_CLASSES):
            raise ValueError(f"label pair ({g}, {p}) out of range")
        cm[g, p] += 1
    n_filtered_positive = 0
    for g in filtered_out:
        if not 0 <= g < NUM_CLASSES:
            raise ValueError(f"filtered-out label {g} out of range")
        if g != NEGATIVE_ID:
            n_filtered_positive += 1
        cm[g, NEGATIVE_ID] += 1

    per_class = {}
    f1s = []
    micro_tp = micro_fp = micro_fn = 0
    for c in POSITIVE_IDS:
        tp = int(cm[c, c])
        fp = int(cm[:, c].sum() - cm[c, c])
        fn = int(cm[c, :].sum() - cm[c, c])
        p, r, f1 = _prf(tp, fp, fn)
        per_class[LABELS[c]] = {"p": p, "r": r, "f1": f1,
                                "support": int(cm[c, :].sum())}
        f1s.append(f1)
        micro_tp += tp
        micro_fp += fp
        micro_fn += fn

    micro_p, micro_r, micro_f1 = _prf(micro_tp, micro_fp, micro_fn)
    counts = {LABELS[c]: int(cm[c, :].sum()) for c in range(NUM_CLASSES)}
    return EvalReport(
        confusion=cm.tolist(),
        per_class=per_class,
        micro_p=micro_p,
        micro_r=micro_r,
        micro_f1=micro_f1,
        mavg=float(np.mean(f1s)),
        n_scored=len(gold),
        n_filtered=len(filtered_out),
        n_filtered_positive=n_filtered_positive,
        counts=counts,
    )


_CHI2_CRITICAL = ((10.828, "p<0.001"), (6.635, "p<0.01"), (3.841, "p<0.05"))


@dataclass
class McNemarResult:
    statistic: float
    significance: str

    @property
    def significant(self) -> bool:
        return self.significance != "not significant at 0.05"


def mcnemar(b: int, c: int) -> McNemarResult:
    """Continuity-corrected McNemar chi-square on discordant counts.

    `b` and `c` count the instances exactly one of the two classifiers
    got right.
    """
    if b < 0 or c < 0:
        raise ValueError("discordant counts must be non-negative")
    if b + c == 0:
        raise ValueError("no discordant predictions: test undefined")
    stat = (abs(b - c) - 1) ** 2 / (b + c)
    for critical, verdict in _CHI2_CRITICAL:
        if stat > critical:
            return McNemarResult(stat, verdict)
    return McNemarResult(stat, "not significant at 0.05")


def _moments(values: Sequence[int]) -> dict[str, float]:
    arr = np.asarray(values, dtype=float)
    q = np.percentile(arr, [0, 25, 50, 75, 100])
    return {
        "mean": float(arr.mean()),
        "std": float(arr.std()),  # population stddev
        "quartiles": [float(v) for v in q],
    }


def length_stats(instances: Sequence, correct: Sequence[bool]) -> dict:
    """Sentence-length and entity-separation statistics per outcome group.

    Emits both groupings of interest: all correct vs incorrect, and the
    same restricted to gold-positive instances. Empty groups are omitted
    rather than reported as NaN.
    """
    if len(instances) != len(correct):
        raise ValueError("correctness flags must align with instances")
    groups = {
        "correct": [], "incorrect": [],
        "positive_correct": [], "positive_incorrect": [],
    }
    for inst, ok in zip(instances, correct):
        groups["correct" if ok else "incorrect"].append(inst)
        if inst.label != NEGATIVE_ID:
            groups["positive_correct" if ok else "positive_incorrect"].append(inst)

    out = {}
    for name, members in groups.items():
        if not members:
            continue
        out[name] = {
            "n": len(members),
            "sentence_length": _moments([len(i.tokens) for i in members]),
            "entity_separation": _moments([i.drug_b - i.drug_a for i in members]),
        }
    return out


def correctness(gold: Sequence[int], predictions: Sequence[int]) -> list[bool]:
    if len(gold) != len(predictions):
        raise ValueError("predictions do not align with gold")
    return [g == p for g, p in zip(gold, predictions)]


def write_attention_records(path, records) -> None:
    """Per-instance attention rows for external heatmap rendering.

    Each record is (instance, weights) with weights aligned to tokens.
    """
    with open(path, "w", encoding="utf-8") as fh:
        for inst, weights in records:
            if len(weights) != len(inst.tokens):
                raise ValueError(
                    f"pair {inst.pair_id}: {len(weights)} weights for "
                    f"{len(inst.tokens)} tokens"
                )
            fh.write(json.dumps({
                "doc_id": inst.doc_id,
                "sent_id": inst.sent_id,
                "pair_id": inst.pair_id,
                "tokens": inst.tokens,
                "weights": [float(w) for w in weights],
            }) + "\n")
