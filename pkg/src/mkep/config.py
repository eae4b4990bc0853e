"""Experiment configuration: JSON schema, defaults, validation, round-trip."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from .domain import PROBABILITY_TOLERANCE, BloodGroupDistribution, ContractError, Registry
from .generator import DEFAULT_ALPHABETS, GeneratorConfig

DROPOUT_COUPLINGS = ("independent", "common")
REPORT_FORMATS = ("csv", "json")

REGISTRY_DEFAULTS = {
    "cycle_bound": 3,
    "arrival": [5, 10],
    "dropout_probability": 0.2,
    "blood_groups": "astra_like",
}
GENERATOR_DEFAULTS = {
    "crossmatch_positive_probability": 0.3,
    "antigen_alphabets": dict(DEFAULT_ALPHABETS),
    "age_range": [18, 75],
    "include_compatible_pairs": True,
}
TOP_DEFAULTS = {
    "rounds": 12,
    "replications": 20,
    "seed": 0,
    "dropout_coupling": "independent",
}
OUTPUT_DEFAULTS = {"directory": "results", "formats": ["csv", "json"]}


class ConfigError(Exception):
    pass


class ConfigFileError(ConfigError):
    """The configuration file does not exist or cannot be read."""


class ConfigSyntaxError(ConfigError):
    """The configuration file is not valid JSON."""


class ConfigValidationError(ConfigError):
    def __init__(self, problems: List[Tuple[str, str]]):
        self.problems = problems
        lines = "\n".join(f"  {where}: {what}" for where, what in problems)
        super().__init__(f"invalid configuration:\n{lines}")


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    registries: Tuple[Registry, ...]
    global_bound: int
    rounds: int = 12
    replications: int = 20
    seed: int = 0
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    dropout_coupling: str = "independent"
    output_dir: str = "results"
    formats: Tuple[str, ...] = REPORT_FORMATS

    def __post_init__(self) -> None:
        if not self.registries:
            raise ContractError("at least one registry is required")
        largest = max(r.cycle_bound for r in self.registries)
        if self.global_bound < largest:
            raise ContractError(
                f"global_bound {self.global_bound} is below the largest registry cycle bound {largest}"
            )
        if self.rounds < 1 or self.replications < 1:
            raise ContractError("rounds and replications must be >= 1")
        if self.dropout_coupling not in DROPOUT_COUPLINGS:
            raise ContractError(f"dropout_coupling must be one of {DROPOUT_COUPLINGS}")

    @property
    def bounds(self) -> Dict[int, int]:
        return {r.index: r.cycle_bound for r in self.registries}

    def with_overrides(self, **changes) -> "ExperimentConfig":
        return replace(self, **{k: v for k, v in changes.items() if v is not None})


def fixture_names(kind: str) -> List[str]:
    folder = resources.files("mkep") / "data" / kind
    return sorted(p.name[:-5] for p in folder.iterdir() if p.name.endswith(".json"))


def fixture_path(name: str) -> Path:
    """Path of a shipped experiment config, e.g. ``table2_symmetric``."""
    path = Path(str(resources.files("mkep") / "data" / "configs" / f"{name}.json"))
    if not path.exists():
        raise ConfigFileError(f"no shipped config named {name!r}; have {fixture_names('configs')}")
    return path


def load_distribution(name: str) -> BloodGroupDistribution:
    if name not in fixture_names("distributions"):
        raise KeyError(name)
    text = (resources.files("mkep") / "data" / "distributions" / f"{name}.json").read_text()
    data = json.loads(text)
    return BloodGroupDistribution(tuple(data["donor"]), tuple(data["recipient"]))


def parse_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigFileError(f"configuration file not found: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigSyntaxError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return config_from_dict(data, default_name=path.stem)


class _Checker:
    def __init__(self):
        self.problems: List[Tuple[str, str]] = []

    def fail(self, where: str, what: str) -> None:
        self.problems.append((where, what))

    def keys(self, obj: Any, where: str, allowed) -> bool:
        if not isinstance(obj, dict):
            self.fail(where or "<root>", "expected an object")
            return False
        for key in obj:
            if key not in allowed:
                self.fail(f"{where}.{key}" if where else key, "unknown key")
        return True

    def integer(self, value: Any, where: str, low: Optional[int] = None) -> Optional[int]:
        if not isinstance(value, int) or isinstance(value, bool):
            self.fail(where, f"expected an integer, got {value!r}")
            return None
        if low is not None and value < low:
            self.fail(where, f"must be >= {low}, got {value}")
            return None
        return value

    def probability(self, value: Any, where: str) -> Optional[float]:
        if not isinstance(value, (int, float)) or isinstance(value, bool) or not 0 <= value <= 1:
            self.fail(where, f"expected a probability in [0, 1], got {value!r}")
            return None
        return float(value)

    def vector(self, value: Any, where: str) -> Optional[Tuple[float, ...]]:
        if (
            not isinstance(value, list)
            or len(value) != 4
            or any(not isinstance(p, (int, float)) or isinstance(p, bool) or p < 0 for p in value)
        ):
            self.fail(where, "expected 4 non-negative numbers (O, A, B, AB)")
            return None
        if abs(sum(value) - 1.0) > PROBABILITY_TOLERANCE:
            self.fail(where, f"probabilities sum to {sum(value)!r}, not 1")
            return None
        return tuple(float(p) for p in value)


def _registry(ck: _Checker, raw: Any, index: int) -> Optional[Registry]:
    where = f"registries[{index}]"
    allowed = {"name", *REGISTRY_DEFAULTS}
    if not ck.keys(raw, where, allowed):
        return None
    data = {**REGISTRY_DEFAULTS, **raw}
    before = len(ck.problems)
    name = data.get("name", f"Registry {index + 1}")
    if not isinstance(name, str):
        ck.fail(f"{where}.name", "expected a string")
    bound = ck.integer(data["cycle_bound"], f"{where}.cycle_bound", low=2)
    arrival = data["arrival"]
    low = high = None
    if (
        isinstance(arrival, list)
        and len(arrival) == 2
        and all(isinstance(a, int) and not isinstance(a, bool) for a in arrival)
    ):
        low, high = arrival
        if not 0 <= low <= high:
            ck.fail(f"{where}.arrival", f"need 0 <= low <= high, got {arrival}")
    else:
        ck.fail(f"{where}.arrival", "expected [low, high] integers")
    dp = ck.probability(data["dropout_probability"], f"{where}.dropout_probability")
    bg = data["blood_groups"]
    dist = None
    if isinstance(bg, str):
        try:
            dist = load_distribution(bg)
        except KeyError:
            ck.fail(f"{where}.blood_groups", f"unknown distribution {bg!r}; have {fixture_names('distributions')}")
    elif ck.keys(bg, f"{where}.blood_groups", {"donor", "recipient"}):
        donor = ck.vector(bg.get("donor"), f"{where}.blood_groups.donor")
        recipient = ck.vector(bg.get("recipient"), f"{where}.blood_groups.recipient")
        if donor and recipient:
            dist = BloodGroupDistribution(donor, recipient)
    if len(ck.problems) > before or dist is None:
        return None
    return Registry(index, name, bound, low, high, dist, dp)


def _generator(ck: _Checker, raw: Any) -> Optional[GeneratorConfig]:
    if not ck.keys(raw, "generator", set(GENERATOR_DEFAULTS)):
        return None
    data = {**GENERATOR_DEFAULTS, **raw}
    before = len(ck.problems)
    xm = ck.probability(data["crossmatch_positive_probability"], "generator.crossmatch_positive_probability")
    alphabets = data["antigen_alphabets"]
    if ck.keys(alphabets, "generator.antigen_alphabets", {"A", "B", "DR"}):
        for locus in ("A", "B", "DR"):
            if locus not in alphabets:
                ck.fail(f"generator.antigen_alphabets.{locus}", "missing")
            else:
                ck.integer(alphabets[locus], f"generator.antigen_alphabets.{locus}", low=1)
    ages = data["age_range"]
    if not (
        isinstance(ages, list)
        and len(ages) == 2
        and all(isinstance(a, int) and not isinstance(a, bool) for a in ages)
        and 18 <= ages[0] <= ages[1] <= 75
    ):
        ck.fail("generator.age_range", "expected [low, high] integers within [18, 75]")
    if not isinstance(data["include_compatible_pairs"], bool):
        ck.fail("generator.include_compatible_pairs", "expected true or false")
    if len(ck.problems) > before:
        return None
    return GeneratorConfig(
        crossmatch_positive_probability=xm,
        antigen_alphabets=dict(alphabets),
        age_range=tuple(ages),
        include_compatible_pairs=data["include_compatible_pairs"],
    )


def config_from_dict(data: Any, default_name: str = "experiment") -> ExperimentConfig:
    ck = _Checker()
    top_keys = {"name", "registries", "global_bound", "generator", "output", *TOP_DEFAULTS}
    if not ck.keys(data, "", top_keys):
        raise ConfigValidationError(ck.problems)
    merged = {**TOP_DEFAULTS, **data}

    name = merged.get("name", default_name)
    if not isinstance(name, str) or not name:
        ck.fail("name", "expected a non-empty string")
    raw_regs = merged.get("registries")
    registries: List[Optional[Registry]] = []
    if not isinstance(raw_regs, list) or not raw_regs:
        ck.fail("registries", "expected a non-empty list of registries")
    else:
        registries = [_registry(ck, raw, i) for i, raw in enumerate(raw_regs)]

    rounds = ck.integer(merged["rounds"], "rounds", low=1)
    replications = ck.integer(merged["replications"], "replications", low=1)
    seed = ck.integer(merged["seed"], "seed")
    if merged["dropout_coupling"] not in DROPOUT_COUPLINGS:
        ck.fail("dropout_coupling", f"expected one of {list(DROPOUT_COUPLINGS)}")
    generator = _generator(ck, merged.get("generator", {}))

    output = merged.get("output", {})
    out_dir, formats = OUTPUT_DEFAULTS["directory"], list(OUTPUT_DEFAULTS["formats"])
    if ck.keys(output, "output", set(OUTPUT_DEFAULTS)):
        out_dir = output.get("directory", out_dir)
        if not isinstance(out_dir, str) or not out_dir:
            ck.fail("output.directory", "expected a non-empty string")
        formats = output.get("formats", formats)
        if not isinstance(formats, list) or not formats or any(f not in REPORT_FORMATS for f in formats):
            ck.fail("output.formats", f"expected a non-empty subset of {list(REPORT_FORMATS)}")

    valid_regs = [r for r in registries if r is not None]
    global_bound = None
    if "global_bound" in merged:
        global_bound = ck.integer(merged["global_bound"], "global_bound", low=2)
    elif valid_regs:
        global_bound = max(r.cycle_bound for r in valid_regs)
    if global_bound is not None and valid_regs and len(valid_regs) == len(registries):
        largest = max(r.cycle_bound for r in valid_regs)
        if global_bound < largest:
            ck.fail("global_bound", f"must be >= the largest registry cycle_bound ({largest}), got {global_bound}")

    if ck.problems:
        raise ConfigValidationError(ck.problems)
    return ExperimentConfig(
        name=name,
        registries=tuple(valid_regs),
        global_bound=global_bound,
        rounds=rounds,
        replications=replications,
        seed=seed,
        generator=generator,
        dropout_coupling=merged["dropout_coupling"],
        output_dir=out_dir,
        formats=tuple(formats),
    )


def config_to_dict(config: ExperimentConfig) -> Dict[str, Any]:
    """Fully explicit form; ``config_from_dict`` of it gives back an equal config."""
    gen = config.generator
    return {
        "name": config.name,
        "registries": [
            {
                "name": r.name,
                "cycle_bound": r.cycle_bound,
                "arrival": [r.arrival_low, r.arrival_high],
                "dropout_probability": r.dropout_probability,
                "blood_groups": {
                    "donor": list(r.bg_distribution.donor),
                    "recipient": list(r.bg_distribution.recipient),
                },
            }
            for r in config.registries
        ],
        "global_bound": config.global_bound,
        "rounds": config.rounds,
        "replications": config.replications,
        "seed": config.seed,
        "dropout_coupling": config.dropout_coupling,
        "generator": {
            "crossmatch_positive_probability": gen.crossmatch_positive_probability,
            "antigen_alphabets": dict(gen.antigen_alphabets),
            "age_range": list(gen.age_range),
            "include_compatible_pairs": gen.include_compatible_pairs,
        },
        "output": {"directory": config.output_dir, "formats": list(config.formats)},
    }
