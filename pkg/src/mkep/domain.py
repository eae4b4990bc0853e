"""Core data types for multi-registry kidney exchange clearing."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Dict, Iterable, Mapping, Optional, Sequence, Tuple

PairId = int
Arc = Tuple[PairId, PairId]

PROBABILITY_TOLERANCE = 1e-9
MIN_AGE = 18
MAX_AGE = 75


class ContractError(ValueError):
    """An operation was called with arguments outside its contract."""


class BloodGroup(enum.IntEnum):
    O = 0
    A = 1
    B = 2
    AB = 3

    @classmethod
    def parse(cls, text: str) -> "BloodGroup":
        try:
            return cls[text.strip().upper()]
        except KeyError:
            raise ContractError(f"unknown blood group {text!r}") from None


# recipient -> donors it can receive from
_COMPATIBLE_DONORS = {
    BloodGroup.O: frozenset({BloodGroup.O}),
    BloodGroup.A: frozenset({BloodGroup.O, BloodGroup.A}),
    BloodGroup.B: frozenset({BloodGroup.O, BloodGroup.B}),
    BloodGroup.AB: frozenset(BloodGroup),
}


def blood_compatible(donor: BloodGroup, recipient: BloodGroup) -> bool:
    """True iff ABO rules allow ``donor`` to give a kidney to ``recipient``."""
    return donor in _COMPATIBLE_DONORS[recipient]


@dataclass(frozen=True)
class HlaProfile:
    a1: int
    a2: int
    b1: int
    b2: int
    dr1: int
    dr2: int

    def __post_init__(self) -> None:
        for name in ("a1", "a2", "b1", "b2", "dr1", "dr2"):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool) or value < 0:
                raise ContractError(f"HLA antigen {name} must be a non-negative int, got {value!r}")

    @property
    def loci(self) -> Tuple[Tuple[int, int], Tuple[int, int], Tuple[int, int]]:
        return (self.a1, self.a2), (self.b1, self.b2), (self.dr1, self.dr2)

    def as_tuple(self) -> Tuple[int, ...]:
        return (self.a1, self.a2, self.b1, self.b2, self.dr1, self.dr2)

    @classmethod
    def from_sequence(cls, values: Sequence[int]) -> "HlaProfile":
        if len(values) != 6:
            raise ContractError(f"an HLA profile needs 6 antigens, got {len(values)}")
        return cls(*(int(v) for v in values))

    def check_alphabets(self, sizes: Mapping[str, int]) -> None:
        for locus, antigens in zip(("A", "B", "DR"), self.loci):
            if any(a >= sizes[locus] for a in antigens):
                raise ContractError(f"antigen outside locus {locus} alphabet of size {sizes[locus]}")


@dataclass(frozen=True)
class Pair:
    """One donor-recipient pair registered in a registry.

    ``crossmatch_positive`` records the within-pair tissue test. A pair is
    self-compatible exactly when the blood groups match up and that test is
    negative; only then does it carry ``own_match_score``.
    """

    id: PairId
    registry: int
    donor_bg: BloodGroup
    recipient_bg: BloodGroup
    donor_hla: HlaProfile
    recipient_hla: HlaProfile
    donor_age: int
    recipient_age: int
    arrival_round: int = 0
    self_compatible: bool = False
    own_match_score: Optional[float] = None
    crossmatch_positive: bool = False

    def __post_init__(self) -> None:
        if self.registry < 0:
            raise ContractError(f"pair {self.id}: registry index must be >= 0")
        for name in ("donor_age", "recipient_age"):
            age = getattr(self, name)
            if not MIN_AGE <= age <= MAX_AGE:
                raise ContractError(f"pair {self.id}: {name}={age} outside [{MIN_AGE}, {MAX_AGE}]")
        if self.self_compatible != (self.own_match_score is not None):
            raise ContractError(
                f"pair {self.id}: own_match_score must be set exactly when self_compatible"
            )
        abo_ok = blood_compatible(self.donor_bg, self.recipient_bg)
        if self.self_compatible and (not abo_ok or self.crossmatch_positive):
            raise ContractError(f"pair {self.id}: marked self-compatible but donor cannot give to own recipient")
        if not self.self_compatible and abo_ok and not self.crossmatch_positive:
            raise ContractError(
                f"pair {self.id}: blood groups compatible and crossmatch negative but not self-compatible"
            )


@dataclass(frozen=True)
class BloodGroupDistribution:
    donor: Tuple[float, float, float, float]
    recipient: Tuple[float, float, float, float]

    def __post_init__(self) -> None:
        for side in ("donor", "recipient"):
            vector = getattr(self, side)
            if len(vector) != 4 or any(p < 0 for p in vector):
                raise ContractError(f"{side} blood-group vector must have 4 non-negative entries")
            if abs(sum(vector) - 1.0) > PROBABILITY_TOLERANCE:
                raise ContractError(f"{side} blood-group vector sums to {sum(vector)!r}, not 1")


@dataclass(frozen=True)
class Registry:
    index: int
    name: str
    cycle_bound: int
    arrival_low: int
    arrival_high: int
    bg_distribution: BloodGroupDistribution
    dropout_probability: float

    def __post_init__(self) -> None:
        if self.cycle_bound < 2:
            raise ContractError(f"registry {self.name}: cycle bound must be >= 2")
        if not 0 <= self.arrival_low <= self.arrival_high:
            raise ContractError(f"registry {self.name}: need 0 <= arrival_low <= arrival_high")
        if not 0.0 <= self.dropout_probability <= 1.0:
            raise ContractError(f"registry {self.name}: dropout probability outside [0, 1]")

    @property
    def label(self) -> str:
        """1-based label used in every report."""
        return f"Registry {self.index + 1}"


@dataclass(frozen=True, eq=False)
class CompatibilityGraph:
    """Directed weighted graph over pairs; arc (i, j) means donor of i can give to recipient of j."""

    registry_of: Mapping[PairId, int]
    arcs: Mapping[Arc, float]
    _succ: Dict[PairId, Tuple[PairId, ...]] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "registry_of", dict(self.registry_of))
        object.__setattr__(self, "arcs", dict(self.arcs))
        succ: Dict[PairId, list] = {v: [] for v in self.registry_of}
        for (i, j), w in self.arcs.items():
            if i == j:
                raise ContractError(f"self-loop on vertex {i}")
            if i not in self.registry_of or j not in self.registry_of:
                raise ContractError(f"arc ({i}, {j}) has an endpoint outside the vertex set")
            if not w > 0:
                raise ContractError(f"arc ({i}, {j}) has non-positive weight {w}")
            succ[i].append(j)
        object.__setattr__(self, "_succ", {v: tuple(sorted(s)) for v, s in succ.items()})

    @classmethod
    def from_arcs(
        cls, registry_of: Mapping[PairId, int], arcs: Iterable[Tuple[PairId, PairId, float]]
    ) -> "CompatibilityGraph":
        table: Dict[Arc, float] = {}
        for i, j, w in arcs:
            if (i, j) in table:
                raise ContractError(f"duplicate arc ({i}, {j})")
            table[(i, j)] = w
        return cls(registry_of, table)

    @property
    def vertices(self) -> Tuple[PairId, ...]:
        return tuple(sorted(self.registry_of))

    def successors(self, v: PairId) -> Tuple[PairId, ...]:
        return self._succ[v]

    def weight(self, i: PairId, j: PairId) -> float:
        return self.arcs[(i, j)]

    def has_arc(self, i: PairId, j: PairId) -> bool:
        return (i, j) in self.arcs

    @property
    def registries(self) -> Tuple[int, ...]:
        return tuple(sorted(set(self.registry_of.values())))

    def subgraph(self, keep: Iterable[PairId]) -> "CompatibilityGraph":
        keep = set(keep)
        return CompatibilityGraph(
            {v: k for v, k in self.registry_of.items() if v in keep},
            {a: w for a, w in self.arcs.items() if a[0] in keep and a[1] in keep},
        )

    def registry_subgraph(self, registry: int) -> "CompatibilityGraph":
        return self.subgraph(v for v, k in self.registry_of.items() if k == registry)

    def __len__(self) -> int:
        return len(self.registry_of)


def canonical_rotation(vertices: Sequence[PairId]) -> Tuple[PairId, ...]:
    start = min(range(len(vertices)), key=vertices.__getitem__)
    return tuple(vertices[start:]) + tuple(vertices[:start])


@dataclass(frozen=True)
class ExchangeCycle:
    """A directed simple cycle; ``vertices[i]`` donates to ``vertices[i + 1]``."""

    vertices: Tuple[PairId, ...]
    arc_weights: Tuple[float, ...]
    domestic_counts: Mapping[int, int]

    @classmethod
    def from_vertices(cls, graph: CompatibilityGraph, vertices: Sequence[PairId]) -> "ExchangeCycle":
        if len(vertices) < 2:
            raise ContractError("a cycle needs at least 2 vertices")
        if len(set(vertices)) != len(vertices):
            raise ContractError(f"cycle {tuple(vertices)} repeats a vertex")
        verts = canonical_rotation(vertices)
        weights = []
        domestic: Dict[int, int] = {}
        for pos, i in enumerate(verts):
            j = verts[(pos + 1) % len(verts)]
            if not graph.has_arc(i, j):
                raise ContractError(f"arc ({i}, {j}) is not in the graph")
            weights.append(graph.weight(i, j))
            ki, kj = graph.registry_of[i], graph.registry_of[j]
            if ki == kj:
                domestic[ki] = domestic.get(ki, 0) + 1
        return cls(verts, tuple(weights), domestic)

    @property
    def length(self) -> int:
        return len(self.vertices)

    @property
    def weight(self) -> float:
        return sum(self.arc_weights)

    @property
    def arcs(self) -> Tuple[Arc, ...]:
        n = len(self.vertices)
        return tuple((self.vertices[p], self.vertices[(p + 1) % n]) for p in range(n))

    def domestic(self, registry: int) -> int:
        return self.domestic_counts.get(registry, 0)


@dataclass(frozen=True)
class Solution:
    """A vertex-disjoint set of exchange cycles.

    ``matched_per_registry`` counts exchange transplants by the registry of
    the receiving pair (equivalently, selected arc tails per registry).
    """

    cycles: Tuple[ExchangeCycle, ...]
    matched_per_registry: Mapping[int, int]
    total_transplants: int
    total_score: float

    @classmethod
    def from_cycles(
        cls,
        cycles: Iterable[ExchangeCycle],
        registry_of: Mapping[PairId, int],
        registries: Iterable[int] = (),
    ) -> "Solution":
        ordered = tuple(sorted(cycles, key=lambda c: c.vertices))
        seen: set = set()
        matched = {k: 0 for k in registries}
        for cycle in ordered:
            for v in cycle.vertices:
                if v in seen:
                    raise ContractError(f"vertex {v} appears in two cycles")
                seen.add(v)
                k = registry_of[v]
                matched[k] = matched.get(k, 0) + 1
        return cls(
            cycles=ordered,
            matched_per_registry=dict(sorted(matched.items())),
            total_transplants=sum(c.length for c in ordered),
            total_score=sum(c.weight for c in ordered),
        )

    @classmethod
    def empty(cls, registries: Iterable[int] = ()) -> "Solution":
        return cls((), {k: 0 for k in sorted(registries)}, 0, 0.0)

    @property
    def matched_vertices(self) -> frozenset:
        return frozenset(v for c in self.cycles for v in c.vertices)

    @property
    def objective(self) -> Tuple[int, float]:
        return self.total_transplants, self.total_score

    def matched(self, registry: int) -> int:
        return self.matched_per_registry.get(registry, 0)
