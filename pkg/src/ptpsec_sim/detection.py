"""Attack verdicts, consensus asymmetry and localization from per-path estimates.

Every redundant path ``P_i`` yields an estimate ``alpha_i = a0 - ai`` where
``a0`` and ``ai`` are the true asymmetries of the synchronization path and
of ``P_i``. Genuine redundant paths therefore all agree on ``a0``. Under the
assumption that at most ``bound`` redundant paths are attacked, the genuine
ones form a cluster of at least ``n - bound`` estimates; its mean is taken as
``a0`` and every other path's asymmetry follows as ``a0 - alpha_i``.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass
from fractions import Fraction


class DetectionError(ValueError):
    pass


class EmptyEstimates(DetectionError):
    pass


class BoundViolation(DetectionError):
    pass


class NeverDetected(DetectionError):
    pass


class NeverCleared(DetectionError):
    pass


@dataclass(frozen=True)
class EstimateSet:
    seq: int
    estimates: tuple[int, ...]  # estimates[k] belongs to path P_{k+1}
    threshold: int = 1_000

    def __post_init__(self) -> None:
        if self.threshold < 0:
            raise DetectionError("threshold must be non-negative")


@dataclass(frozen=True)
class Verdict:
    attacked: bool
    triggering: frozenset[int]


@dataclass(frozen=True)
class Localization:
    consensus_alpha: int
    attacked_paths: frozenset[int]  # 0 is the synchronization path
    implied: tuple[int, ...]  # implied asymmetry of P_1..P_n
    ambiguous: bool = False
    bound_satisfied: bool = True
    alternative: Localization | None = None


def detect(estimates: EstimateSet) -> Verdict:
    """Attack iff any estimate exceeds the threshold in magnitude."""
    if not estimates.estimates:
        raise EmptyEstimates("no asymmetry estimates")
    hits = frozenset(
        i for i, a in enumerate(estimates.estimates, start=1) if abs(a) > estimates.threshold
    )
    return Verdict(bool(hits), hits)


def _clusters(values: Sequence[int], gap: int) -> list[list[int]]:
    """Single-linkage clusters of path indices (1-based), ordered by value."""
    order = sorted(range(len(values)), key=lambda k: (values[k], k))
    clusters = [[order[0] + 1]]
    for prev, cur in zip(order, order[1:]):
        if values[cur] - values[prev] <= gap:
            clusters[-1].append(cur + 1)
        else:
            clusters.append([cur + 1])
    return clusters


def _hypothesis(values: Sequence[int], cluster: list[int], threshold: int) -> Localization:
    total = sum(values[i - 1] for i in cluster)
    consensus = int(Fraction(total, len(cluster)))
    implied = tuple(consensus - a for a in values)
    attacked = {i for i, a in enumerate(implied, start=1) if abs(a) > threshold}
    if abs(consensus) > threshold:
        attacked.add(0)
    return Localization(consensus, frozenset(attacked), implied)


def consensus_asymmetry(estimates: EstimateSet, attacker_bound: int | None = None) -> Localization:
    """Synchronization path asymmetry and attacked-path set.

    ``attacker_bound`` caps the number of attacked redundant paths and may
    not exceed ``n // 2``; it defaults to that maximum. When two clusters
    are equally plausible the result is ``ambiguous`` and carries the other
    hypothesis in ``alternative``. The primary one is then the cluster with
    the larger consensus magnitude, since estimates that agree on zero are
    exactly what a cancelling attack on two paths produces.
    """
    values = estimates.estimates
    n = len(values)
    if n == 0:
        raise EmptyEstimates("no asymmetry estimates")
    if attacker_bound is None:
        attacker_bound = n // 2
    if not 0 <= attacker_bound <= n // 2:
        raise BoundViolation(f"attacker bound {attacker_bound} outside [0, {n // 2}]")

    clusters = _clusters(values, estimates.threshold)
    hypotheses = [_hypothesis(values, c, estimates.threshold) for c in clusters]
    ranked = sorted(
        zip(clusters, hypotheses),
        key=lambda ch: (-len(ch[0]), -abs(ch[1].consensus_alpha), min(ch[0])),
    )
    consistent = [h for c, h in ranked if n - len(c) <= attacker_bound]
    if len(consistent) == 1:
        return consistent[0]
    candidates = consistent or [h for _, h in ranked]
    primary = candidates[0]
    alternative = candidates[1] if len(candidates) > 1 else None
    return Localization(
        primary.consensus_alpha,
        primary.attacked_paths,
        primary.implied,
        ambiguous=True,
        bound_satisfied=bool(consistent),
        alternative=alternative,
    )


def _onset_index(times: Sequence[int], pred) -> int:
    for k, t in enumerate(times):
        if pred(t):
            return k
    raise ValueError("series does not cover the requested instant")


def detection_latency(series: Sequence[tuple[int, bool]], attack_start: int) -> int:
    """Rounds from the first round starting at or after ``attack_start`` to the
    first attacked verdict, counting both ends (immediate detection is 1).

    ``series`` holds ``(round_start_time, attacked)`` pairs in round order.
    """
    onset = _onset_index([t for t, _ in series], lambda t: t >= attack_start)
    for k in range(onset, len(series)):
        if series[k][1]:
            return k - onset + 1
    raise NeverDetected("no attacked verdict after the attack started")


def clear_latency(series: Sequence[tuple[int, bool]], attack_end: int) -> int:
    """Like :func:`detection_latency` for the first all-clear after the attack
    window closes (the first round starting strictly after ``attack_end``)."""
    onset = _onset_index([t for t, _ in series], lambda t: t > attack_end)
    for k in range(onset, len(series)):
        if not series[k][1]:
            return k - onset + 1
    raise NeverCleared("verdict never returned to all-clear after the attack")
