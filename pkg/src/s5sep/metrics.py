"""SDR, SDR improvement, class-aware SDRi and clip-level tagging scores."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterable, Mapping, Sequence, Set

import numpy as np

from s5sep.errors import InvalidInputError

SDR_EPS = 1e-12  # floor on error energy relative to reference energy


@dataclass
class MetricReport:
    per_class: Dict[int, float]
    ca_sdri: float
    n_union: int
    tagging: Dict[str, float] = field(default_factory=dict)


def _vec(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64).reshape(-1)


def sdr(estimate, reference) -> float:
    """``10 log10(|x|^2 / |x - x_hat|^2)`` in dB, capped at +120 dB."""
    est, ref = _vec(estimate), _vec(reference)
    if est.shape != ref.shape:
        raise InvalidInputError(f"length mismatch: {est.shape[0]} vs {ref.shape[0]}")
    ref_energy = float(np.dot(ref, ref))
    if ref_energy == 0:
        raise InvalidInputError("reference signal has zero energy")
    diff = ref - est
    err = max(float(np.dot(diff, diff)), SDR_EPS * ref_energy)
    return 10.0 * np.log10(ref_energy / err)


def sdri(estimate, reference, mixture_ch1) -> float:
    return sdr(estimate, reference) - sdr(mixture_ch1, reference)


def tagging_scores(predicted: Set[int], truth: Set[int]) -> Dict[str, float]:
    tp = len(predicted & truth)
    return {
        "exact_match": float(predicted == truth),
        "tp": float(tp),
        "fp": float(len(predicted - truth)),
        "fn": float(len(truth - predicted)),
    }


def ca_sdri(
    estimates: Mapping[int, np.ndarray],
    references: Mapping[int, np.ndarray],
    mixture_ch1,
) -> MetricReport:
    """Mean over ``C | C_hat`` of SDRi for correctly detected classes, 0 otherwise.

    ``estimates`` is keyed by the predicted classes, ``references`` by the
    ground-truth classes.
    """
    predicted, truth = set(estimates), set(references)
    union = predicted | truth
    if not union:
        raise InvalidInputError("both the predicted and the true class sets are empty")
    per_class = {}
    for c in sorted(union):
        if c in predicted and c in truth:
            per_class[c] = sdri(estimates[c], references[c], mixture_ch1)
        else:
            per_class[c] = 0.0
    score = sum(per_class.values()) / len(union)
    return MetricReport(per_class, score, len(union), tagging_scores(predicted, truth))


def tagging_accuracy(predicted: Sequence[Iterable[int]], truth: Sequence[Iterable[int]]) -> Dict[str, float]:
    """Exact-set match rate (%) plus micro-averaged precision and recall (%)."""
    if len(predicted) != len(truth):
        raise InvalidInputError("predicted and ground-truth lists differ in length")
    if not truth:
        raise InvalidInputError("empty evaluation set")
    exact = tp = fp = fn = 0
    for p, t in zip(predicted, truth):
        p, t = set(p), set(t)
        exact += p == t
        tp += len(p & t)
        fp += len(p - t)
        fn += len(t - p)
    return {
        "exact_match": 100.0 * exact / len(truth),
        "precision": 100.0 * tp / (tp + fp) if tp + fp else 100.0,
        "recall": 100.0 * tp / (tp + fn) if tp + fn else 100.0,
    }
