"""Reading and writing pool files for one-shot clearing.

A pool file is CSV. The first section lists pairs under this header::

    id,registry,donor_bg,recipient_bg,donor_hla,recipient_hla,donor_age,recipient_age,arrival_round,self_compatible,own_match_score

``registry`` is 1-based, HLA profiles are six space-separated antigen ids
(A1 A2 B1 B2 DR1 DR2), and ``self_compatible`` is ``true``/``false``.
``own_match_score`` may be blank for a self-compatible pair, in which case
the pair's own donor-recipient score is used. An optional
``crossmatch_positive`` column records the within-pair test.

An optional second section starts with a line reading ``[arcs]`` followed by
a ``from,to`` header. When present, exactly the listed ordered pairs have a
negative crossmatch; everything else is treated as positive. Blood-group
rules and the self-compatible filter still apply. Blank lines and lines
starting with ``#`` are ignored.
"""

from __future__ import annotations

import csv
import io
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

from .domain import BloodGroup, ContractError, HlaProfile, Pair, blood_compatible
from .scoring import match_score

PAIR_FIELDS = (
    "id", "registry", "donor_bg", "recipient_bg", "donor_hla", "recipient_hla",
    "donor_age", "recipient_age", "arrival_round", "self_compatible", "own_match_score",
)
ARC_MARKER = "[arcs]"


class PoolFormatError(ValueError):
    pass


def _bool(text: str, where: str) -> bool:
    value = text.strip().lower()
    if value in ("true", "1", "yes"):
        return True
    if value in ("false", "0", "no", ""):
        return False
    raise PoolFormatError(f"{where}: expected true/false, got {text!r}")


def _pair(row: dict, line: int) -> Pair:
    where = f"line {line}"
    try:
        donor_hla = HlaProfile.from_sequence([int(x) for x in row["donor_hla"].split()])
        recipient_hla = HlaProfile.from_sequence([int(x) for x in row["recipient_hla"].split()])
        donor_bg = BloodGroup.parse(row["donor_bg"])
        recipient_bg = BloodGroup.parse(row["recipient_bg"])
        self_compatible = _bool(row.get("self_compatible", ""), where)
        xm_text = (row.get("crossmatch_positive") or "").strip()
        if xm_text:
            xm = _bool(xm_text, where)
        else:
            xm = blood_compatible(donor_bg, recipient_bg) and not self_compatible
        own_text = (row.get("own_match_score") or "").strip()
        fields = dict(
            id=int(row["id"]),
            registry=int(row["registry"]) - 1,
            donor_bg=donor_bg,
            recipient_bg=recipient_bg,
            donor_hla=donor_hla,
            recipient_hla=recipient_hla,
            donor_age=int(row["donor_age"]),
            recipient_age=int(row["recipient_age"]),
            arrival_round=int(row.get("arrival_round") or 0),
            self_compatible=self_compatible,
            own_match_score=float(own_text) if own_text else None,
            crossmatch_positive=xm,
        )
        if self_compatible and fields["own_match_score"] is None:
            fields["own_match_score"] = match_score(
                donor_hla, recipient_hla, fields["donor_age"], fields["recipient_age"]
            )
        return Pair(**fields)
    except (KeyError, TypeError) as exc:
        raise PoolFormatError(f"{where}: missing field {exc}") from None
    except ContractError as exc:
        raise PoolFormatError(f"{where}: {exc}") from None
    except ValueError as exc:
        raise PoolFormatError(f"{where}: {exc}") from None


def read_pool(path) -> Tuple[List[Pair], Optional[List[Tuple[int, int]]]]:
    """Pairs and, if the file has an ``[arcs]`` section, the negative-crossmatch arcs."""
    path = Path(path)
    if not path.is_file():
        raise PoolFormatError(f"pool file not found: {path}")
    lines = path.read_text().splitlines()
    numbered = [(n + 1, ln) for n, ln in enumerate(lines) if ln.strip() and not ln.lstrip().startswith("#")]
    split = next((i for i, (_, ln) in enumerate(numbered) if ln.strip().lower() == ARC_MARKER), None)
    pair_lines = numbered if split is None else numbered[:split]
    arc_lines = None if split is None else numbered[split + 1:]

    if not pair_lines:
        raise PoolFormatError(f"{path}: no pair header")
    reader = csv.DictReader(io.StringIO("\n".join(ln for _, ln in pair_lines)))
    missing = [f for f in PAIR_FIELDS if f not in (reader.fieldnames or [])]
    if missing:
        raise PoolFormatError(f"{path}: pair header lacks {missing}")
    pairs = [_pair(row, pair_lines[i + 1][0]) for i, row in enumerate(reader)]

    arcs = None
    if arc_lines is not None:
        arcs = []
        for idx, (lineno, ln) in enumerate(arc_lines):
            cells = [c.strip() for c in ln.split(",")]
            if idx == 0 and cells[:2] == ["from", "to"]:
                continue
            try:
                arcs.append((int(cells[0]), int(cells[1])))
            except (ValueError, IndexError):
                raise PoolFormatError(f"line {lineno}: expected 'from,to' pair ids") from None
    return pairs, arcs


def write_pool(path, pairs: Sequence[Pair], arcs: Optional[Sequence[Tuple[int, int]]] = None) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(PAIR_FIELDS + ("crossmatch_positive",))
    for p in pairs:
        writer.writerow([
            p.id, p.registry + 1, p.donor_bg.name, p.recipient_bg.name,
            " ".join(map(str, p.donor_hla.as_tuple())), " ".join(map(str, p.recipient_hla.as_tuple())),
            p.donor_age, p.recipient_age, p.arrival_round, str(p.self_compatible).lower(),
            "" if p.own_match_score is None else repr(p.own_match_score), str(p.crossmatch_positive).lower(),
        ])
    if arcs is not None:
        buf.write(f"{ARC_MARKER}\nfrom,to\n")
        for i, j in arcs:
            buf.write(f"{i},{j}\n")
    Path(path).write_text(buf.getvalue())
