"""Seeded random generation of donor-recipient pairs."""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Tuple

import numpy as np

from .domain import (
    MAX_AGE,
    MIN_AGE,
    BloodGroup,
    ContractError,
    HlaProfile,
    Pair,
    Registry,
    blood_compatible,
)
from .scoring import match_score

MAX_RESAMPLES = 10_000
DEFAULT_ALPHABETS = {"A": 20, "B": 20, "DR": 10}
_BLOOD_GROUPS = tuple(BloodGroup)


class GenerationError(RuntimeError):
    """The configured distributions cannot produce the requested kind of pair."""


@dataclass(frozen=True)
class GeneratorConfig:
    crossmatch_positive_probability: float = 0.3
    antigen_alphabets: Mapping[str, int] = field(default_factory=lambda: dict(DEFAULT_ALPHABETS))
    age_range: Tuple[int, int] = (MIN_AGE, MAX_AGE)
    include_compatible_pairs: bool = True

    def __post_init__(self) -> None:
        if not 0.0 <= self.crossmatch_positive_probability <= 1.0:
            raise ContractError("crossmatch_positive_probability must be in [0, 1]")
        if set(self.antigen_alphabets) != {"A", "B", "DR"}:
            raise ContractError("antigen_alphabets needs exactly the loci A, B, DR")
        if any(size < 1 for size in self.antigen_alphabets.values()):
            raise ContractError("antigen alphabets must be non-empty")
        low, high = self.age_range
        if not MIN_AGE <= low <= high <= MAX_AGE:
            raise ContractError(f"age_range must lie within [{MIN_AGE}, {MAX_AGE}]")


def keyed_uniform(seed: int, *key: int) -> float:
    """A uniform [0, 1) value fixed by ``(seed, *key)``, independent of call order."""
    payload = struct.pack(f"<{len(key) + 1}q", seed, *key)
    digest = hashlib.blake2b(payload, digest_size=8).digest()
    return int.from_bytes(digest, "little") / 2.0**64


# stream tags for keyed_uniform
XM_STREAM = 1
DROPOUT_STREAM = 2


class CrossTissue:
    """Crossmatch outcomes between a donor of one pair and the recipient of another.

    Each ordered pair of ids is drawn once from a hash-keyed stream and
    cached, so both simulated worlds see the same arcs whatever order they
    ask in.
    """

    def __init__(self, seed: int, positive_probability: float):
        self.seed = seed
        self.positive_probability = positive_probability
        self._cache: Dict[Tuple[int, int], bool] = {}

    def positive(self, donor_side: Pair, recipient_side: Pair) -> bool:
        key = (donor_side.id, recipient_side.id)
        hit = self._cache.get(key)
        if hit is None:
            hit = keyed_uniform(self.seed, XM_STREAM, *key) < self.positive_probability
            self._cache[key] = hit
        return hit

    __call__ = positive


class ExplicitCrossTissue:
    """Crossmatch source where only the listed ordered pairs test negative."""

    def __init__(self, negative_arcs):
        self.negative = frozenset(negative_arcs)

    def positive(self, donor_side: Pair, recipient_side: Pair) -> bool:
        return (donor_side.id, recipient_side.id) not in self.negative

    __call__ = positive


class PairGenerator:
    """Draws pairs for one replication; owns its rng and id counter."""

    def __init__(self, config: GeneratorConfig, seed: int, first_id: int = 0):
        self.config = config
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        self._next_id = first_id

    def _blood_group(self, probabilities) -> BloodGroup:
        return _BLOOD_GROUPS[int(self.rng.choice(4, p=probabilities))]

    def _hla(self) -> HlaProfile:
        sizes = self.config.antigen_alphabets
        a = self.rng.integers(0, sizes["A"], size=2)
        b = self.rng.integers(0, sizes["B"], size=2)
        dr = self.rng.integers(0, sizes["DR"], size=2)
        return HlaProfile(int(a[0]), int(a[1]), int(b[0]), int(b[1]), int(dr[0]), int(dr[1]))

    def _age(self) -> int:
        low, high = self.config.age_range
        return int(self.rng.integers(low, high + 1))

    def draw_pair(self, registry: Registry, round_index: int) -> Pair:
        dist = registry.bg_distribution
        for _ in range(MAX_RESAMPLES):
            donor_bg = self._blood_group(dist.donor)
            recipient_bg = self._blood_group(dist.recipient)
            donor_hla, recipient_hla = self._hla(), self._hla()
            donor_age, recipient_age = self._age(), self._age()
            xm_positive = bool(self.rng.random() < self.config.crossmatch_positive_probability)
            self_compatible = blood_compatible(donor_bg, recipient_bg) and not xm_positive
            if self_compatible and not self.config.include_compatible_pairs:
                continue
            own_score = None
            if self_compatible:
                own_score = match_score(donor_hla, recipient_hla, donor_age, recipient_age)
            pair = Pair(
                id=self._next_id,
                registry=registry.index,
                donor_bg=donor_bg,
                recipient_bg=recipient_bg,
                donor_hla=donor_hla,
                recipient_hla=recipient_hla,
                donor_age=donor_age,
                recipient_age=recipient_age,
                arrival_round=round_index,
                self_compatible=self_compatible,
                own_match_score=own_score,
                crossmatch_positive=xm_positive,
            )
            self._next_id += 1
            return pair
        raise GenerationError(
            f"{registry.label}: no incompatible pair after {MAX_RESAMPLES} draws; "
            "blood-group vectors and crossmatch probability admit only compatible pairs"
        )

    def arrivals(self, registry: Registry, round_index: int) -> List[Pair]:
        n = int(self.rng.integers(registry.arrival_low, registry.arrival_high + 1))
        return [self.draw_pair(registry, round_index) for _ in range(n)]


def make_cross_tissue(config: GeneratorConfig, seed: int, explicit: Optional[list] = None):
    if explicit is not None:
        return ExplicitCrossTissue(explicit)
    return CrossTissue(seed, config.crossmatch_positive_probability)
