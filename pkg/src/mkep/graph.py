"""Compatibility-graph construction over a pool of pairs."""

from __future__ import annotations

from typing import Callable, Dict, Sequence

from .domain import Arc, CompatibilityGraph, ContractError, Pair, blood_compatible
from .scoring import edge_weight

CrossTissue = Callable[[Pair, Pair], bool]


def build_graph(pool: Sequence[Pair], cross_tissue: CrossTissue) -> CompatibilityGraph:
    """Arc (i, j) iff i's donor can give to j's recipient.

    ``cross_tissue(i, j)`` returns True for a positive (incompatible)
    crossmatch. A self-compatible recipient only accepts arcs scoring
    strictly above its own donor's match.
    """
    registry_of: Dict[int, int] = {}
    for pair in pool:
        if pair.id in registry_of:
            raise ContractError(f"duplicate pair id {pair.id} in pool")
        registry_of[pair.id] = pair.registry

    arcs: Dict[Arc, float] = {}
    for donor_side in pool:
        for recipient_side in pool:
            if donor_side.id == recipient_side.id:
                continue
            if not blood_compatible(donor_side.donor_bg, recipient_side.recipient_bg):
                continue
            if cross_tissue(donor_side, recipient_side):
                continue
            w = edge_weight(donor_side, recipient_side)
            if recipient_side.self_compatible and not w > recipient_side.own_match_score:
                continue
            arcs[(donor_side.id, recipient_side.id)] = w
    return CompatibilityGraph(registry_of, arcs)
