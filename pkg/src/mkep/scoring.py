"""Match-quality scores: HLA mismatches, donor-recipient age gap, arc weights.

Scores are quarter-unit values (the age component moves in steps of 1.25
for integer ages), so every weight and every sum of weights is exactly
representable as a binary float.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

from .domain import ContractError, HlaProfile, Pair

HLA_SCORES = (100, 85, 70, 55, 40, 25, 10)
AGE_SCORE_MAX = 50.0
AGE_GAP_CUTOFF = 40
AGE_SLOPE = 1.25


@dataclass(frozen=True)
class ScoreBreakdown:
    hla_mismatches: int
    hla_score: float
    age_score: float

    @property
    def total(self) -> float:
        return self.hla_score + self.age_score


def hla_mismatch_count(donor: HlaProfile, recipient: HlaProfile) -> int:
    """Donor antigens absent from the recipient, counted per locus as multisets."""
    total = 0
    for d_locus, r_locus in zip(donor.loci, recipient.loci):
        total += sum((Counter(d_locus) - Counter(r_locus)).values())
    return total


def hla_score(mismatches: int) -> float:
    if not 0 <= mismatches <= 6:
        raise ContractError(f"HLA mismatch count must be in [0, 6], got {mismatches}")
    return float(HLA_SCORES[mismatches])


def age_score(donor_age: int, recipient_age: int) -> float:
    gap = abs(donor_age - recipient_age)
    if gap > AGE_GAP_CUTOFF:
        return 0.0
    return AGE_SCORE_MAX - AGE_SLOPE * gap


def score_breakdown(donor_side: Pair, recipient_side: Pair) -> ScoreBreakdown:
    mismatches = hla_mismatch_count(donor_side.donor_hla, recipient_side.recipient_hla)
    return ScoreBreakdown(
        hla_mismatches=mismatches,
        hla_score=hla_score(mismatches),
        age_score=age_score(donor_side.donor_age, recipient_side.recipient_age),
    )


def match_score(donor_hla: HlaProfile, recipient_hla: HlaProfile, donor_age: int, recipient_age: int) -> float:
    return hla_score(hla_mismatch_count(donor_hla, recipient_hla)) + age_score(donor_age, recipient_age)


def edge_weight(donor_side: Pair, recipient_side: Pair) -> float:
    """Weight of the arc giving ``donor_side``'s donor to ``recipient_side``'s recipient."""
    return match_score(
        donor_side.donor_hla, recipient_side.recipient_hla, donor_side.donor_age, recipient_side.recipient_age
    )
