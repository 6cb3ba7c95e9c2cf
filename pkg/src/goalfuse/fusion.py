"""Object probability maps and their multiplicative fusion.

An object probability map is a plain dict: label -> probability, summing
to 1. It is the common currency between the semantic (LLM) and physical
(trajectory) predictors.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping

from .errors import ContractError, ValidationError

ObjectProbabilityMap = dict[str, float]


@dataclass
class Telemetry:
    """Counts of fallback events surfaced by otherwise-total operations."""

    counts: Counter = field(default_factory=Counter)

    def flag(self, event: str, n: int = 1) -> None:
        self.counts[event] += n

    def merged(self, other: "Telemetry") -> "Telemetry":
        return Telemetry(counts=self.counts + other.counts)

    def as_dict(self) -> dict[str, int]:
        return {k: self.counts[k] for k in sorted(self.counts)}


def normalized(scores: Mapping[str, float]) -> ObjectProbabilityMap:
    """Scale non-negative scores to sum to 1; uniform when all are zero."""
    if not scores:
        raise ContractError("cannot normalize an empty score map")
    if any(v < 0 for v in scores.values()):
        raise ValidationError("scores must be non-negative")
    total = sum(scores.values())
    if total <= 0:
        return {label: 1.0 / len(scores) for label in scores}
    return {label: v / total for label, v in scores.items()}


def validate_probability_map(p: Mapping[str, float], tol: float = 1e-9) -> None:
    if any(v < 0 for v in p.values()):
        raise ValidationError("probabilities must be non-negative")
    total = sum(p.values())
    if abs(total - 1.0) > tol:
        raise ValidationError(f"probabilities sum to {total}, not 1")


def fuse(
    p_llm: Mapping[str, float],
    p_traj: Mapping[str, float],
    telemetry: Telemetry | None = None,
) -> ObjectProbabilityMap:
    """Multiply two probability maps elementwise and renormalize.

    When every product is zero (the sources fully contradict) the result
    falls back to uniform and a telemetry flag is raised.
    """
    if set(p_llm) != set(p_traj):
        raise ContractError(
            "label sets differ: "
            f"{sorted(set(p_llm) ^ set(p_traj))} not shared"
        )
    products = {label: p_llm[label] * p_traj[label] for label in p_llm}
    if sum(products.values()) <= 0:
        if telemetry is not None:
            telemetry.flag("fusion_annihilation_fallback")
        return {label: 1.0 / len(products) for label in products}
    return normalized(products)


def top_k(p: Mapping[str, float], k: int) -> list[str]:
    """Labels in non-increasing probability order, ties broken by label."""
    if k < 1:
        raise ContractError(f"k must be >= 1, got {k}")
    ranked = sorted(p.items(), key=lambda kv: (-kv[1], kv[0]))
    return [label for label, _ in ranked[:k]]
