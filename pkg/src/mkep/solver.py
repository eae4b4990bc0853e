"""Exact clearing for single- and multi-registry kidney exchange.

The solver works on the cycle formulation: enumerate every feasible exchange
cycle, then pick a vertex-disjoint subset by branch-and-bound. The objective
is lexicographic (transplant count first, total score second). Among
lexicographic optima the solution whose sorted list of canonical cycle
tuples is smallest wins.

Branching visits vertices in increasing id order. At each vertex the
cycles *starting* there (canonical rotation) are tried in ascending order,
then the branch leaving the vertex unmatched. Chosen cycles therefore come
out already sorted, and the first optimum met in depth-first order is the
tie-break winner. That is why incumbents are only replaced by strictly
better solutions and subtrees are cut when their bound merely ties.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import permutations
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.sparse import csr_matrix

from .domain import (
    CompatibilityGraph,
    ContractError,
    ExchangeCycle,
    Solution,
)

DEFAULT_CYCLE_CAP = 5_000_000
BRUTE_FORCE_MAX_VERTICES = 14


class CycleCapacityError(RuntimeError):
    """Cycle enumeration produced more cycles than the configured cap."""

    def __init__(self, cap: int):
        super().__init__(f"cycle enumeration exceeded the cap of {cap} cycles")
        self.cap = cap


class InfeasibleError(RuntimeError):
    """No packing meets the individual-rationality floors."""

    def __init__(self, unmet: Mapping[int, int]):
        detail = ", ".join(f"registry {k + 1} needs {floor}" for k, floor in sorted(unmet.items()))
        super().__init__(f"individual-rationality floors cannot be met: {detail}")
        self.unmet = dict(unmet)


class OracleRefusal(ValueError):
    """The brute-force oracle only accepts small graphs."""


@dataclass(frozen=True)
class SolveSpec:
    graph: CompatibilityGraph
    registry_bounds: Mapping[int, int]
    global_bound: int
    ir_floor: Optional[Mapping[int, int]] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "registry_bounds", dict(self.registry_bounds))
        if self.ir_floor is not None:
            object.__setattr__(self, "ir_floor", dict(self.ir_floor))
        if self.global_bound < 2 or any(b < 2 for b in self.registry_bounds.values()):
            raise ContractError("all cycle bounds must be >= 2")
        missing = set(self.graph.registries) - set(self.registry_bounds)
        if missing:
            raise ContractError(f"no cycle bound for registries {sorted(k + 1 for k in missing)}")
        if self.ir_floor is not None:
            participating = [self.registry_bounds[k] for k in self.ir_floor if k in self.registry_bounds]
            if participating and self.global_bound < max(participating):
                raise ContractError(
                    f"global bound {self.global_bound} is below the largest registry bound "
                    f"{max(participating)}; individual-rationality floors may be infeasible"
                )

    @property
    def registries(self) -> Tuple[int, ...]:
        return tuple(sorted(set(self.registry_bounds) | set(self.graph.registries)))

    def admits(self, cycle: ExchangeCycle) -> bool:
        if cycle.length > self.global_bound:
            return False
        return all(n <= self.registry_bounds[k] for k, n in cycle.domestic_counts.items())


@dataclass
class FormulationCheckReport:
    flow_conservation_ok: bool = True
    vertex_capacity_ok: bool = True
    registry_bound_ok: bool = True
    global_bound_ok: bool = True
    ir_ok: bool = True
    binary_ok: bool = True
    copies: int = 0
    violations: List[Tuple[str, int, str]] = field(default_factory=list)

    _FLAGS = {
        "flow_conservation": "flow_conservation_ok",
        "vertex_capacity": "vertex_capacity_ok",
        "registry_bound": "registry_bound_ok",
        "global_bound": "global_bound_ok",
        "individual_rationality": "ir_ok",
        "binary": "binary_ok",
    }

    def record(self, constraint: str, where: int, detail: str) -> None:
        setattr(self, self._FLAGS[constraint], False)
        self.violations.append((constraint, where, detail))

    @property
    def ok(self) -> bool:
        return not self.violations

    def as_dict(self) -> dict:
        out = {flag: getattr(self, flag) for flag in self._FLAGS.values()}
        out["copies"] = self.copies
        out["violations"] = [list(v) for v in self.violations]
        return out


# -- cycle enumeration -------------------------------------------------------


def enumerate_cycles(
    graph: CompatibilityGraph, max_len: int, cap: int = DEFAULT_CYCLE_CAP
) -> List[ExchangeCycle]:
    """Every directed simple cycle of length 2..max_len, each once, sorted canonically."""
    if max_len < 2:
        raise ContractError("max_len must be >= 2")
    found: List[Tuple[int, ...]] = []
    for start in graph.vertices:
        path = [start]
        on_path = {start}
        stack = [iter(graph.successors(start))]
        while stack:
            nxt = next(stack[-1], None)
            if nxt is None:
                stack.pop()
                on_path.discard(path.pop())
                continue
            if nxt == start:
                if len(path) >= 2:
                    found.append(tuple(path))
                    if len(found) > cap:
                        raise CycleCapacityError(cap)
                continue
            if nxt < start or nxt in on_path or len(path) >= max_len:
                continue
            path.append(nxt)
            on_path.add(nxt)
            stack.append(iter(graph.successors(nxt)))
    found.sort()
    return [ExchangeCycle.from_vertices(graph, verts) for verts in found]


# -- branch and bound ----------------------------------------------------------


def _integer_scale(weights) -> int:
    scale = 1
    for w in weights:
        scale = math.lcm(scale, Fraction(w).denominator)
    return scale


class _Packer:
    """Lexicographic max-(count, score) vertex-disjoint cycle packing.

    Scores are rescaled to integers so every bound comparison is exact.
    Two upper bounds are used at each node. The cheap one gives each free
    vertex the best per-vertex share of any cycle still available through
    it. The strong one is a max-weight assignment over the arcs of available
    cycles (a cycle cover with no length limit), with arc value
    ``big + weight`` so that a single number orders (count, score)
    lexicographically.
    """

    def __init__(self, cycles: Sequence[ExchangeCycle], registry_of: Mapping[int, int], registries, floors):
        verts = sorted({v for c in cycles for v in c.vertices})
        self.pos = {v: p for p, v in enumerate(verts)}
        self.n = n = len(verts)
        self.registries = list(registries)
        reg_slot = {k: s for s, k in enumerate(self.registries)}
        reg_of_pos = [reg_slot[registry_of[v]] for v in verts]
        self.floors = None
        if floors:
            self.floors = [floors.get(k, 0) for k in self.registries]

        scale = _integer_scale(w for c in cycles for w in c.arc_weights)
        maxlen = max((c.length for c in cycles), default=2)
        self.len_lcm = math.lcm(*range(2, maxlen + 1))
        self.cycles = cycles
        C = len(cycles)
        self.mask: List[int] = []
        self.cycle_pos: List[Tuple[int, ...]] = []
        self.length: List[int] = []
        self.iweight: List[int] = []
        self.reg_counts: List[Tuple[int, ...]] = []
        self.by_first: List[List[int]] = [[] for _ in range(n)]
        self.member_t = np.zeros((n, C), dtype=bool)
        self.ratio = np.zeros((C, n), dtype=np.int64)
        arc_index: Dict[Tuple[int, int], int] = {}
        arc_value: List[int] = []
        arc_cycles: List[List[int]] = []
        for ci, c in enumerate(cycles):
            ps = tuple(self.pos[v] for v in c.vertices)
            m = 0
            for p in ps:
                m |= 1 << p
            iw = 0
            for (i, j), w in zip(c.arcs, c.arc_weights):
                aw = Fraction(w) * scale
                iw += int(aw)
                key = (self.pos[i], self.pos[j])
                if key not in arc_index:
                    arc_index[key] = len(arc_value)
                    arc_value.append(int(aw))
                    arc_cycles.append([])
                arc_cycles[arc_index[key]].append(ci)
            self.mask.append(m)
            self.cycle_pos.append(ps)
            self.length.append(c.length)
            self.iweight.append(iw)
            self.member_t[list(ps), ci] = True
            self.ratio[ci, list(ps)] = iw * (self.len_lcm // c.length)
            counts = [0] * len(self.registries)
            for p in ps:
                counts[reg_of_pos[p]] += 1
            self.reg_counts.append(tuple(counts))
            self.by_first[min(ps)].append(ci)
        # cycles arrive canonically sorted, so each by_first list is already ordered
        self.big = sum(arc_value) + 1
        A = len(arc_value)
        self.arc_tail = np.array([t for t, _ in arc_index], dtype=np.intp)
        self.arc_head = np.array([h for _, h in arc_index], dtype=np.intp)
        self.arc_val = np.array([self.big + v for v in arc_value], dtype=np.float64)
        rows = [a for a, cs in enumerate(arc_cycles) for _ in cs]
        cols = [ci for cs in arc_cycles for ci in cs]
        self.arc_cyc = csr_matrix((np.ones(len(rows), dtype=np.int32), (rows, cols)), shape=(A, C))
        self.reg_vec = np.zeros((len(self.registries), n), dtype=bool)
        for p, s in enumerate(reg_of_pos):
            self.reg_vec[s, p] = True

    def _without(self, ok: np.ndarray, positions: Sequence[int]) -> np.ndarray:
        """``ok`` minus every cycle touching one of ``positions``."""
        return ok & ~self.member_t[list(positions)].any(axis=0)

    def _bounds(self, ok: np.ndarray):
        """Coverable vertices and the summed per-vertex share over available cycles."""
        rows = np.flatnonzero(ok)
        if rows.size == 0:
            return np.zeros(self.n, dtype=bool), 0
        best = self.ratio[rows].max(axis=0)
        return best > 0, int(best.sum())

    def _cover_bound(self, ok: np.ndarray, covered: np.ndarray) -> int:
        rows = np.flatnonzero(covered)
        slot = np.full(self.n, -1, dtype=np.intp)
        slot[rows] = np.arange(len(rows))
        arcs = (self.arc_cyc @ ok.astype(np.int32)) > 0
        cost = np.full((len(rows), len(rows)), -float(self.big) * (2 * self.n + 2))
        np.fill_diagonal(cost, 0.0)
        cost[slot[self.arc_tail[arcs]], slot[self.arc_head[arcs]]] = self.arc_val[arcs]
        r, c = linear_sum_assignment(cost, maximize=True)
        return int(round(cost[r, c].sum()))

    def solve(self, target: Optional[Tuple[int, int]] = None) -> Optional[List[int]]:
        """Indices of the optimal cycles, or None when no packing meets the floors.

        ``target`` is the value of a known feasible packing; it prunes like an
        incumbent but without claiming the tie-break.
        """
        n = self.n
        floors = self.floors
        nreg = len(self.registries)
        matched = [0] * nreg
        chosen: List[int] = []
        state = {"best": None, "value": None, "target": target}
        L = self.len_lcm
        big = self.big

        def threshold():
            """(value, strict): prune a subtree whose bound is below value, or equal when strict."""
            if state["value"] is not None:
                return state["value"], True
            return state["target"], False

        def cut(bound: Tuple[int, int], ref: Tuple[int, int], strict: bool) -> bool:
            return bound < ref or (strict and bound == ref)

        def dfs(v: int, avail: int, ok: np.ndarray, count: int, score: int) -> None:
            while v < n and not (avail >> v) & 1:
                v += 1
            if v == n:
                if floors is not None and any(matched[s] < floors[s] for s in range(nreg)):
                    return
                value = state["value"]
                if value is None:
                    tgt = state["target"]
                    accept = tgt is None or (count, score) >= tgt
                else:
                    accept = (count, score) > value
                if accept:
                    state["value"] = (count, score)
                    state["best"] = list(chosen)
                return
            covered, share = self._bounds(ok)
            if floors is not None:
                for s in range(nreg):
                    if matched[s] + int((covered & self.reg_vec[s]).sum()) < floors[s]:
                        return
            ref, strict = threshold()
            if ref is not None:
                rc, rs = ref
                # lexicographic bound, scores in len_lcm units
                cheap = (count + int(covered.sum()), score * L + share)
                if cut(cheap, (rc, rs * L), strict):
                    return
                if covered.any():
                    cover = self._cover_bound(ok, covered)
                    if cut(big * count + score + cover, big * rc + rs, strict):
                        return
            for ci in self.by_first[v]:
                if not ok[ci]:
                    continue
                m = self.mask[ci]
                chosen.append(ci)
                rc_ = self.reg_counts[ci]
                for s in range(nreg):
                    matched[s] += rc_[s]
                dfs(v + 1, avail & ~m, self._without(ok, self.cycle_pos[ci]),
                    count + self.length[ci], score + self.iweight[ci])
                for s in range(nreg):
                    matched[s] -= rc_[s]
                chosen.pop()
            dfs(v + 1, avail & ~(1 << v), self._without(ok, (v,)), count, score)

        dfs(0, (1 << n) - 1, np.ones(len(self.cycles), dtype=bool), 0, 0)
        return state["best"]

    def value_of(self, indices) -> Tuple[int, int]:
        return sum(self.length[i] for i in indices), sum(self.iweight[i] for i in indices)


def _components(cycles: Sequence[ExchangeCycle]) -> List[List[ExchangeCycle]]:
    parent: Dict[int, int] = {}

    def find(x: int) -> int:
        while parent.setdefault(x, x) != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for c in cycles:
        root = find(c.vertices[0])
        for v in c.vertices[1:]:
            other = find(v)
            if other != root:
                parent[other] = root
    groups: Dict[int, List[ExchangeCycle]] = {}
    for c in cycles:
        groups.setdefault(find(c.vertices[0]), []).append(c)
    return list(groups.values())


def feasible_cycles(spec: SolveSpec, cap: int = DEFAULT_CYCLE_CAP) -> List[ExchangeCycle]:
    return [c for c in enumerate_cycles(spec.graph, spec.global_bound, cap) if spec.admits(c)]


def _unmet(solution: Solution, floors: Optional[Mapping[int, int]]) -> Dict[int, int]:
    if not floors:
        return {}
    return {k: f for k, f in floors.items() if solution.matched(k) < f}


def solve(spec: SolveSpec, cap: int = DEFAULT_CYCLE_CAP) -> Solution:
    """Lexicographically optimal (count, then score) packing meeting the IR floors."""
    graph = spec.graph
    registries = spec.registries
    cycles = feasible_cycles(spec, cap)

    picked: List[ExchangeCycle] = []
    for group in _components(cycles):
        packer = _Packer(group, graph.registry_of, registries, None)
        picked.extend(group[i] for i in packer.solve())
    free = Solution.from_cycles(picked, graph.registry_of, registries)
    floors = {k: f for k, f in (spec.ir_floor or {}).items() if f > 0}
    if not _unmet(free, floors):
        return free

    # the floors bind: couple all components and search again
    packer = _Packer(cycles, graph.registry_of, registries, floors)
    target = _floor_witness(spec, cycles, packer)
    best = packer.solve(target)
    if best is None:
        raise InfeasibleError(_unmet(free, floors) if target is None else floors)
    return Solution.from_cycles([cycles[i] for i in best], graph.registry_of, registries)


def _floor_witness(spec: SolveSpec, cycles, packer: _Packer) -> Optional[Tuple[int, int]]:
    """Value of the union of per-registry optima, a packing that meets the floors.

    Only used as a pruning threshold; returns None if the union is not
    actually feasible for this spec or does not meet the floors.
    """
    graph = spec.graph
    union: List[ExchangeCycle] = []
    for k in spec.registries:
        sub = graph.registry_subgraph(k)
        if not len(sub):
            continue
        own = solve(SolveSpec(sub, {k: spec.registry_bounds[k]}, spec.registry_bounds[k]))
        union.extend(own.cycles)
    index = {c.vertices: i for i, c in enumerate(cycles)}
    if any(c.vertices not in index for c in union):
        return None
    witness = Solution.from_cycles(union, graph.registry_of, spec.registries)
    if _unmet(witness, spec.ir_floor):
        return None
    return packer.value_of(index[c.vertices] for c in union)


def independent_solutions(
    graphs: Mapping[int, CompatibilityGraph], bounds: Mapping[int, int], cap: int = DEFAULT_CYCLE_CAP
) -> Dict[int, Solution]:
    """Each registry cleared alone with its own cycle bound."""
    out: Dict[int, Solution] = {}
    for k in sorted(graphs):
        out[k] = solve(SolveSpec(graphs[k], {k: bounds[k]}, bounds[k]), cap)
    return out


# -- compact formulation check -----------------------------------------------


def verify_compact(solution: Solution, spec: SolveSpec) -> FormulationCheckReport:
    """Check a solution against the copy-based compact IP model.

    Cycle l is placed in copy l; there are ceil(|V| / 2) copies.
    """
    graph = spec.graph
    copies = math.ceil(len(graph) / 2)
    report = FormulationCheckReport(copies=copies)
    # x[l] holds the arcs set to 1 in copy l
    x: List[Dict[Tuple[int, int], int]] = []
    for l, cycle in enumerate(solution.cycles):
        if l >= copies:
            report.record("binary", l, f"cycle {cycle.vertices} needs copy {l} but only {copies} exist")
        x.append({arc: 1 for arc in cycle.arcs})

    for l, arcs in enumerate(x):
        for (i, j), value in arcs.items():
            if value not in (0, 1):
                report.record("binary", l, f"x[{i},{j}] = {value}")
            if not graph.has_arc(i, j):
                report.record("binary", l, f"arc ({i}, {j}) is not in the graph")
        out_deg: Dict[int, int] = {}
        in_deg: Dict[int, int] = {}
        for (i, j), value in arcs.items():
            out_deg[i] = out_deg.get(i, 0) + value
            in_deg[j] = in_deg.get(j, 0) + value
        for v in sorted(set(out_deg) | set(in_deg)):
            if out_deg.get(v, 0) != in_deg.get(v, 0):
                report.record(
                    "flow_conservation", l, f"vertex {v}: in {in_deg.get(v, 0)} != out {out_deg.get(v, 0)}"
                )
        total = sum(arcs.values())
        if total > spec.global_bound:
            report.record("global_bound", l, f"{total} arcs selected, bound {spec.global_bound}")
        domestic: Dict[int, int] = {}
        for (i, j), value in arcs.items():
            ki = graph.registry_of.get(i)
            if ki is not None and ki == graph.registry_of.get(j):
                domestic[ki] = domestic.get(ki, 0) + value
        for k, count in sorted(domestic.items()):
            bound = spec.registry_bounds.get(k)
            if bound is not None and count > bound:
                report.record("registry_bound", l, f"registry {k + 1}: {count} domestic arcs, bound {bound}")

    tails: Dict[int, int] = {}
    for arcs in x:
        for (i, _), value in arcs.items():
            tails[i] = tails.get(i, 0) + value
    for v, count in sorted(tails.items()):
        if count > 1:
            report.record("vertex_capacity", v, f"vertex {v} donates {count} times")

    if spec.ir_floor:
        per_registry: Dict[int, int] = {}
        for v, count in tails.items():
            k = graph.registry_of.get(v)
            per_registry[k] = per_registry.get(k, 0) + count
        for k, floor in sorted(spec.ir_floor.items()):
            if per_registry.get(k, 0) < floor:
                report.record(
                    "individual_rationality", k, f"registry {k + 1}: {per_registry.get(k, 0)} < {floor}"
                )
    return report


# -- brute-force oracle -------------------------------------------------------


def _cycles_by_permutation(graph: CompatibilityGraph, max_len: int) -> List[ExchangeCycle]:
    verts = graph.vertices
    out = []
    for length in range(2, min(max_len, len(verts)) + 1):
        for perm in permutations(verts, length):
            if perm[0] != min(perm):
                continue
            if all(graph.has_arc(perm[p], perm[(p + 1) % length]) for p in range(length)):
                out.append(ExchangeCycle.from_vertices(graph, perm))
    return out


def brute_force(spec: SolveSpec) -> Solution:
    """Exhaustive search over vertex-disjoint cycle subsets (testing oracle)."""
    graph = spec.graph
    if len(graph) > BRUTE_FORCE_MAX_VERTICES:
        raise OracleRefusal(
            f"brute force handles at most {BRUTE_FORCE_MAX_VERTICES} vertices, got {len(graph)}"
        )
    registries = spec.registries
    cycles = [c for c in _cycles_by_permutation(graph, spec.global_bound) if spec.admits(c)]
    floors = spec.ir_floor or {}
    best: Optional[Tuple[int, float, list]] = None

    def consider(subset: List[ExchangeCycle]) -> None:
        nonlocal best
        matched: Dict[int, int] = {}
        for c in subset:
            for v in c.vertices:
                matched[graph.registry_of[v]] = matched.get(graph.registry_of[v], 0) + 1
        if any(matched.get(k, 0) < f for k, f in floors.items()):
            return
        count = sum(c.length for c in subset)
        score = sum(c.weight for c in subset)
        key = sorted(c.vertices for c in subset)
        if best is None or (count, score) > best[:2] or ((count, score) == best[:2] and key < best[2]):
            best = (count, score, key)
            best_subset[:] = subset

    best_subset: List[ExchangeCycle] = []

    def extend(start: int, used: frozenset, subset: List[ExchangeCycle]) -> None:
        consider(subset)
        for i in range(start, len(cycles)):
            c = cycles[i]
            if used.isdisjoint(c.vertices):
                subset.append(c)
                extend(i + 1, used | set(c.vertices), subset)
                subset.pop()

    extend(0, frozenset(), [])
    if best is None:
        raise InfeasibleError(dict(floors))
    return Solution.from_cycles(best_subset, graph.registry_of, registries)
