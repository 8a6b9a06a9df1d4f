"""Pareto dominance over the joint (length, effectiveness) objective.

A point dominates another when it is no longer, at least as effective, and
strictly better in one of the two. Shorter is better; higher effectiveness
is better. The front keeps every tied point.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .effectiveness import CandidateExplanation, EffectivenessResult
from .errors import DomainError


@dataclass(frozen=True)
class ParetoPoint:
    length: float
    psi: float
    explanation: CandidateExplanation | None = None


@dataclass(frozen=True)
class ParetoFront:
    points: tuple[ParetoPoint, ...]

    def __len__(self) -> int:
        return len(self.points)

    def objectives(self) -> list[tuple[float, float]]:
        return [(p.length, p.psi) for p in self.points]


def dominates(a: tuple[float, float], b: tuple[float, float]) -> bool:
    """True when `a` is no longer and at least as effective as `b`, one strictly."""
    return a[0] <= b[0] and a[1] >= b[1] and (a[0] < b[0] or a[1] > b[1])


def non_dominated(points: Sequence[tuple[float, float]]) -> list[bool]:
    """Per-point flag: not dominated by any other point.

    Sort-and-sweep over length groups; points tied on both objectives are
    all kept.
    """
    n = len(points)
    order = sorted(range(n), key=lambda i: (points[i][0], -points[i][1]))
    keep = [False] * n
    best_shorter = float("-inf")
    i = 0
    while i < n:
        j = i
        length = points[order[i]][0]
        while j < n and points[order[j]][0] == length:
            j += 1
        group = order[i:j]
        group_max = max(points[k][1] for k in group)
        if group_max > best_shorter:
            for k in group:
                if points[k][1] == group_max:
                    keep[k] = True
        best_shorter = max(best_shorter, group_max)
        i = j
    return keep


def pareto_front(
    candidates: Sequence[tuple[CandidateExplanation, EffectivenessResult]],
) -> ParetoFront:
    """Exactly the non-dominated (length, psi) points among the candidates."""
    if not candidates:
        raise DomainError("cannot build a front from an empty candidate list")
    objectives = [(float(len(expl)), float(result.psi)) for expl, result in candidates]
    keep = non_dominated(objectives)
    points = tuple(
        ParetoPoint(length=obj[0], psi=obj[1], explanation=expl)
        for (expl, _), obj, k in zip(candidates, objectives, keep)
        if k
    )
    return ParetoFront(points=points)
