"""Man-in-the-middle delay injection on links.

The attacker sits transparently on an edge and adds delay to selected
messages in one direction. It never alters message contents and adds no
latency of its own to packets it does not target.
"""

from __future__ import annotations

from collections.abc import Iterable
from dataclasses import dataclass
from enum import Enum

from ptpsec_sim import units
from ptpsec_sim.protocol import MessageKind
from ptpsec_sim.topology import NetworkGraph, UnknownEdge


class AttackError(ValueError):
    pass


class ConflictingSpecs(AttackError):
    pass


class Direction(str, Enum):
    FORWARD = "forward"  # edge a -> b
    REVERSE = "reverse"  # edge b -> a


class ProfileKind(str, Enum):
    STATIC = "static"
    INCREMENTAL = "incremental"


@dataclass(frozen=True)
class AttackProfile:
    """Added delay over time.

    ``delta_per_second`` is in nanoseconds of extra delay per second of
    attack time. The window ``[start, end]`` is closed.
    """

    kind: ProfileKind
    epsilon: int
    start: int
    end: int
    delta_per_second: int = 0

    def __post_init__(self) -> None:
        if self.start >= self.end:
            raise AttackError("attack window must satisfy start < end")
        if self.epsilon < 0:
            raise AttackError("epsilon must be non-negative")
        if self.kind is ProfileKind.INCREMENTAL:
            if self.delta_per_second <= 0:
                raise AttackError("incremental profile needs a positive ramp rate")
            ramp_ns = -(-self.epsilon * units.NS_PER_S // self.delta_per_second)
            if self.start + ramp_ns > self.end:
                raise AttackError("incremental ramp does not reach epsilon before the window ends")

    def delay_at(self, at: int) -> int:
        if not self.start <= at <= self.end:
            return 0
        if self.kind is ProfileKind.STATIC:
            return self.epsilon
        ramp = self.delta_per_second * (at - self.start) // units.NS_PER_S
        return min(self.epsilon, ramp)


@dataclass(frozen=True)
class AttackSpec:
    target_edge: str
    direction: Direction
    messages: frozenset[MessageKind]
    profile: AttackProfile

    def __post_init__(self) -> None:
        if not self.messages:
            raise AttackError("message filter must not be empty")

    def matches(self, edge_id: str, direction: Direction, kind: MessageKind) -> bool:
        return edge_id == self.target_edge and direction is self.direction and kind in self.messages


ALL_MESSAGES = frozenset(MessageKind)


def message_filter(names: Iterable[str]) -> frozenset[MessageKind]:
    """Parse message kind names; ``"all"`` selects every kind."""
    kinds: set[MessageKind] = set()
    for name in names:
        if name == "all":
            kinds |= ALL_MESSAGES
        else:
            kinds.add(MessageKind(name))
    return frozenset(kinds)


@dataclass(frozen=True)
class AttackerState:
    specs: tuple[AttackSpec, ...] = ()

    def added_delay(self, edge_id: str, direction: Direction, kind: MessageKind, at: int) -> int:
        total = 0
        for spec in self.specs:
            if spec.matches(edge_id, direction, kind):
                total += spec.profile.delay_at(at)
        return total

    @property
    def compromised_edges(self) -> frozenset[str]:
        return frozenset(s.target_edge for s in self.specs)


def validate_attacker(state: AttackerState, graph: NetworkGraph) -> None:
    """Check targets exist and no two specs claim the same (edge, direction, kind) at once.

    The number of compromised links is not limited.
    """
    for spec in state.specs:
        if spec.target_edge not in graph.edges:
            raise UnknownEdge(f"attack targets unknown edge {spec.target_edge!r}")
    for i, first in enumerate(state.specs):
        for second in state.specs[i + 1 :]:
            if first.target_edge != second.target_edge or first.direction is not second.direction:
                continue
            shared = first.messages & second.messages
            overlap = (
                first.profile.start <= second.profile.end
                and second.profile.start <= first.profile.end
            )
            if shared and overlap:
                names = ", ".join(sorted(k.value for k in shared))
                raise ConflictingSpecs(
                    f"specs on {first.target_edge!r} ({first.direction.value}) overlap for {names}"
                )
