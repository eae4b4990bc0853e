"""Discrete-round simulation comparing independent registries with a merged pool.

Two worlds evolve side by side from one shared arrival stream:

* INDIVIDUAL: every registry clears its own pool alone.
* MERGED: all pools are cleared together, subject to each registry getting
  at least the transplants it could have had alone on the same pools that
  round.

Their pools diverge as different pairs are matched and drop out.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

from .config import ExperimentConfig
from .domain import BloodGroup, Pair, Solution
from .generator import DROPOUT_STREAM, CrossTissue, PairGenerator, keyed_uniform
from .graph import build_graph
from .solver import SolveSpec, independent_solutions, solve, verify_compact

BG_NAMES = tuple(bg.name for bg in BloodGroup)


class World(enum.Enum):
    INDIVIDUAL = "individual"
    MERGED = "merged"


_WORLD_KEY = {World.INDIVIDUAL: 1, World.MERGED: 2}


class SimulationError(RuntimeError):
    """A clearing step failed or broke one of the simulation invariants."""


@dataclass
class RegistryCounters:
    arrivals: int = 0
    transplants: int = 0
    score: float = 0.0
    dropouts: int = 0
    waiting_time: int = 0
    matched_wait: int = 0
    self_transplants: int = 0
    self_score: float = 0.0
    matched_by_bg: List[int] = field(default_factory=lambda: [0, 0, 0, 0])
    dropouts_by_bg: List[int] = field(default_factory=lambda: [0, 0, 0, 0])

    def metrics(self, remaining: int) -> Dict[str, float]:
        out = {
            "arrivals": self.arrivals,
            "transplants": self.transplants,
            "score": self.score,
            "dropouts": self.dropouts,
            "waiting_time": self.waiting_time,
            "matched_wait": self.matched_wait,
            "self_transplants": self.self_transplants,
            "self_score": self.self_score,
            "remaining": remaining,
        }
        for name, m, d in zip(BG_NAMES, self.matched_by_bg, self.dropouts_by_bg):
            out[f"matched_{name}"] = m
            out[f"dropouts_{name}"] = d
        return out


@dataclass
class WorldState:
    world: World
    pools: Dict[int, List[Pair]]
    counters: Dict[int, RegistryCounters]

    @classmethod
    def empty(cls, world: World, registries: Sequence[int]) -> "WorldState":
        return cls(world, {k: [] for k in registries}, {k: RegistryCounters() for k in registries})

    def pool_size(self, k: int) -> int:
        return len(self.pools[k])

    def all_pairs(self) -> List[Pair]:
        return [p for k in sorted(self.pools) for p in self.pools[k]]


@dataclass(frozen=True)
class RegistryRound:
    """One registry's outcome in one world for one round.

    The ``cum_*`` fields snapshot cumulative counters at the end of the round,
    for conservation audits.
    """

    transplants: int
    score: float
    ir_floor: int
    matched_by_bg: tuple
    dropouts: int
    pool_size: int
    cum_arrivals: int
    cum_transplants: int
    cum_dropouts: int
    cum_self_transplants: int


@dataclass(frozen=True)
class RoundRecord:
    round: int
    worlds: Dict[World, Dict[int, RegistryRound]]

    def get(self, world: World, k: int) -> RegistryRound:
        return self.worlds[world][k]


@dataclass
class ReplicationResult:
    seed: int
    records: List[RoundRecord]
    totals: Dict[World, Dict[int, Dict[str, float]]]
    pairs_created: List[int]


def _check(solution: Solution, spec: SolveSpec, context: str) -> None:
    report = verify_compact(solution, spec)
    if not report.ok:
        raise SimulationError(f"{context}: compact-formulation check failed: {report.violations}")


def _credit(state: WorldState, solution: Solution, pairs: Dict[int, Pair], round_index: int) -> Dict[int, float]:
    """Move matched pairs out of the pools; returns score credited per registry."""
    gained: Dict[int, float] = {k: 0.0 for k in state.pools}
    for cycle in solution.cycles:
        for (_, j), w in zip(cycle.arcs, cycle.arc_weights):
            recipient = pairs[j]
            k = recipient.registry
            c = state.counters[k]
            c.transplants += 1
            c.score += w
            c.matched_by_bg[recipient.recipient_bg] += 1
            c.matched_wait += round_index - recipient.arrival_round
            gained[k] += w
    matched = solution.matched_vertices
    for k in state.pools:
        state.pools[k] = [p for p in state.pools[k] if p.id not in matched]
    return gained


def _dropouts(state: WorldState, config: ExperimentConfig, seed: int, round_index: int) -> Dict[int, int]:
    world_key = _WORLD_KEY[state.world] if config.dropout_coupling == "independent" else 0
    dropped: Dict[int, int] = {}
    for registry in config.registries:
        k = registry.index
        c = state.counters[k]
        survivors = []
        for pair in state.pools[k]:
            u = keyed_uniform(seed, DROPOUT_STREAM, world_key, pair.id, round_index)
            if u < registry.dropout_probability:
                c.dropouts += 1
                c.dropouts_by_bg[pair.recipient_bg] += 1
            else:
                survivors.append(pair)
        dropped[k] = len(state.pools[k]) - len(survivors)
        c.waiting_time += len(survivors)
        state.pools[k] = survivors
    return dropped


def _snapshot(state: WorldState, k: int, solution_count: int, score: float, floor: int,
              by_bg: Sequence[int], dropped: int) -> RegistryRound:
    c = state.counters[k]
    return RegistryRound(
        transplants=solution_count,
        score=score,
        ir_floor=floor,
        matched_by_bg=tuple(by_bg),
        dropouts=dropped,
        pool_size=state.pool_size(k),
        cum_arrivals=c.arrivals,
        cum_transplants=c.transplants,
        cum_dropouts=c.dropouts,
        cum_self_transplants=c.self_transplants,
    )


def _bg_counts(solution: Solution, pairs: Dict[int, Pair], k: int) -> List[int]:
    counts = [0, 0, 0, 0]
    for v in solution.matched_vertices:
        if pairs[v].registry == k:
            counts[pairs[v].recipient_bg] += 1
    return counts


def simulate_round(
    individual: WorldState,
    merged: WorldState,
    round_index: int,
    config: ExperimentConfig,
    generator: PairGenerator,
    cross_tissue: CrossTissue,
    seed: int,
    verify: bool = True,
) -> RoundRecord:
    bounds = config.bounds
    for registry in config.registries:
        batch = generator.arrivals(registry, round_index)
        for state in (individual, merged):
            state.pools[registry.index].extend(batch)
            state.counters[registry.index].arrivals += len(batch)

    results: Dict[World, Dict[int, tuple]] = {World.INDIVIDUAL: {}, World.MERGED: {}}

    # INDIVIDUAL world: each registry alone
    for k, bound in bounds.items():
        pool = individual.pools[k]
        pairs = {p.id: p for p in pool}
        try:
            graph = build_graph(pool, cross_tissue)
            spec = SolveSpec(graph, {k: bound}, bound)
            sol = solve(spec)
        except Exception as exc:
            raise SimulationError(f"round {round_index}, individual world, registry {k + 1}: {exc}") from exc
        if verify:
            _check(sol, spec, f"round {round_index}, individual world, registry {k + 1}")
        gained = _credit(individual, sol, pairs, round_index)
        results[World.INDIVIDUAL][k] = (sol.matched(k), gained[k], sol.matched(k), _bg_counts(sol, pairs, k))

    # MERGED world: floors from this world's own pools
    pool = merged.all_pairs()
    pairs = {p.id: p for p in pool}
    try:
        graph = build_graph(pool, cross_tissue)
        alone = independent_solutions({k: graph.registry_subgraph(k) for k in bounds}, bounds)
        floors = {k: s.total_transplants for k, s in alone.items()}
        spec = SolveSpec(graph, bounds, config.global_bound, floors)
        sol = solve(spec)
    except Exception as exc:
        raise SimulationError(f"round {round_index}, merged world: {exc}") from exc
    for k, floor in floors.items():
        if sol.matched(k) < floor:
            raise SimulationError(
                f"round {round_index}: registry {k + 1} got {sol.matched(k)} < floor {floor} in the merged world"
            )
    if verify:
        _check(sol, spec, f"round {round_index}, merged world")
    gained = _credit(merged, sol, pairs, round_index)
    for k in bounds:
        results[World.MERGED][k] = (sol.matched(k), gained[k], floors[k], _bg_counts(sol, pairs, k))

    worlds: Dict[World, Dict[int, RegistryRound]] = {}
    for state in (individual, merged):
        dropped = _dropouts(state, config, seed, round_index)
        worlds[state.world] = {
            k: _snapshot(state, k, count, score, floor, by_bg, dropped[k])
            for k, (count, score, floor, by_bg) in results[state.world].items()
        }
    return RoundRecord(round_index, worlds)


def _finalize(state: WorldState) -> None:
    """Self-compatible pairs still waiting at the end take their own donor."""
    for k, pool in state.pools.items():
        c = state.counters[k]
        keep = []
        for pair in pool:
            if pair.self_compatible:
                c.self_transplants += 1
                c.self_score += pair.own_match_score
            else:
                keep.append(pair)
        state.pools[k] = keep


def run_replication(config: ExperimentConfig, seed: int, verify: bool = True) -> ReplicationResult:
    registries = [r.index for r in config.registries]
    individual = WorldState.empty(World.INDIVIDUAL, registries)
    merged = WorldState.empty(World.MERGED, registries)
    generator = PairGenerator(config.generator, seed)
    cross_tissue = CrossTissue(seed, config.generator.crossmatch_positive_probability)
    records = [
        simulate_round(individual, merged, r, config, generator, cross_tissue, seed, verify)
        for r in range(config.rounds)
    ]
    for state in (individual, merged):
        _finalize(state)
    totals = {
        state.world: {k: state.counters[k].metrics(state.pool_size(k)) for k in registries}
        for state in (individual, merged)
    }
    return ReplicationResult(seed, records, totals, list(range(generator._next_id)))


@dataclass
class ExperimentSummary:
    """Replication-averaged comparison of the two worlds.

    ``means[world][k][metric]`` averages replication totals. ``gains`` holds
    merged-minus-individual differences (overall and per registry) and
    ``replication_gains`` the per-replication transplant and score gains.
    ``series[world][k][metric]`` lists per-round averages.
    """

    name: str
    config: ExperimentConfig
    seeds: List[int]
    means: Dict[str, Dict[int, Dict[str, float]]]
    gains: Dict[str, float]
    registry_gains: Dict[int, Dict[str, float]]
    replication_gains: List[Dict[str, float]]
    series: Dict[str, Dict[int, Dict[str, List[float]]]]

    @property
    def replications(self) -> int:
        return len(self.seeds)


SERIES_METRICS = ("transplants", "score", "dropouts", "pool_size", "cum_transplants")


def _mean(values: Sequence[float]) -> float:
    return math.fsum(values) / len(values)


def summarize(config: ExperimentConfig, results: Sequence[ReplicationResult]) -> ExperimentSummary:
    worlds = (World.INDIVIDUAL, World.MERGED)
    registries = [r.index for r in config.registries]
    metric_names = list(results[0].totals[World.INDIVIDUAL][registries[0]])
    means = {
        w.value: {
            k: {m: _mean([res.totals[w][k][m] for res in results]) for m in metric_names}
            for k in registries
        }
        for w in worlds
    }
    rep_gains = []
    for res in results:
        gain = {"transplants": 0.0, "score": 0.0}
        for k in registries:
            for m in gain:
                gain[m] += res.totals[World.MERGED][k][m] - res.totals[World.INDIVIDUAL][k][m]
        rep_gains.append(gain)
    registry_gains = {
        k: {m: means["merged"][k][m] - means["individual"][k][m] for m in ("transplants", "score")}
        for k in registries
    }
    gains = {m: math.fsum(registry_gains[k][m] for k in registries) for m in ("transplants", "score")}
    series = {
        w.value: {
            k: {
                m: [
                    _mean([getattr(res.records[r].get(w, k), m) for res in results])
                    for r in range(config.rounds)
                ]
                for m in SERIES_METRICS
            }
            for k in registries
        }
        for w in worlds
    }
    return ExperimentSummary(
        name=config.name,
        config=config,
        seeds=[res.seed for res in results],
        means=means,
        gains=gains,
        registry_gains=registry_gains,
        replication_gains=rep_gains,
        series=series,
    )


def _run_one(args):
    config, seed, verify = args
    return run_replication(config, seed, verify)


def run_experiment(config: ExperimentConfig, workers: int = 1, verify: bool = True,
                   seeds: Optional[Sequence[int]] = None) -> ExperimentSummary:
    """Replicate with seeds ``seed + 0 .. seed + R - 1`` and average."""
    if seeds is None:
        seeds = [config.seed + r for r in range(config.replications)]
    jobs = [(config, s, verify) for s in seeds]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        results = [_run_one(job) for job in jobs]
    return summarize(config, results)
