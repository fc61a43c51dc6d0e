"""Seeded perturbation lab for detector validation.

Degrades graph streams in controlled, reproducible ways (class drops,
property drops, synthetic entity injection, depth skew) and runs whole
scenarios through the monitor, optionally with Gaussian noise on the
metric deltas to exercise threshold calibration.
"""

import json
import logging
import random
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Iterator, Mapping

from kgmon.extract import ArticleDoc
from kgmon.graph import (
    KnowledgeGraph,
    instantiated_classes,
    instantiated_properties,
)
from kgmon.metrics import MetricDelta, metric_delta, metric_vector
from kgmon.monitor import (
    DEFAULT_LAMBDA,
    DEFAULT_WARMUP,
    DEFAULT_WEIGHTS,
    DEFAULT_WINDOW,
    AnomalyRecord,
    AnomalyWeights,
    ThresholdState,
    append_history,
    observe,
    record_to_row,
)
from kgmon.ontology import Ontology

log = logging.getLogger(__name__)

SYNTHETIC_PREFIX = "##synthetic"


class SimulationError(ValueError):
    pass


class PerturbationKind(str, Enum):
    DROP_CLASSES = "drop-classes"
    DROP_PROPERTIES = "drop-properties"
    INJECT_ENTITIES = "inject-entities"
    DEPTH_SKEW = "depth-skew"
    DELTA_NOISE = "delta-noise"


_COUNT_KINDS = (
    PerturbationKind.DROP_CLASSES,
    PerturbationKind.DROP_PROPERTIES,
    PerturbationKind.INJECT_ENTITIES,
)


@dataclass(frozen=True)
class PerturbationSpec:
    kind: PerturbationKind
    magnitude: float
    seed: int

    def __post_init__(self) -> None:
        if self.seed < 0:
            raise SimulationError("seed must be nonnegative")
        if self.kind in _COUNT_KINDS:
            if self.magnitude < 1 or not float(self.magnitude).is_integer():
                raise SimulationError(
                    f"{self.kind.value} magnitude must be a positive integer"
                )
        elif self.kind is PerturbationKind.DEPTH_SKEW:
            if not 0.0 <= self.magnitude <= 1.0:
                raise SimulationError("depth-skew fraction must be in [0,1]")
        elif self.magnitude < 0:
            raise SimulationError("delta-noise sigma must be nonnegative")


def _deepest_descendants(ontology: Ontology) -> dict[str, str]:
    # For each root class with subclasses: its deepest descendant, ties
    # broken lexicographically.
    out: dict[str, str] = {}
    for cls, depth in ontology.depths.items():
        if depth != 0:
            continue
        below = ontology.descendants(cls)
        if below:
            out[cls] = min(below, key=lambda d: (-ontology.depths[d], d))
    return out


def perturb(
    g: KnowledgeGraph, spec: PerturbationSpec, ontology: Ontology
) -> KnowledgeGraph:
    """Apply one seeded graph perturbation; same inputs give a byte-identical
    result. Selection always samples from sorted domains so the outcome
    depends only on the seed, never on dict order."""
    rng = random.Random(spec.seed)

    if spec.kind is PerturbationKind.DROP_CLASSES:
        k = int(spec.magnitude)
        present = sorted(instantiated_classes(g))
        if k > len(present):
            raise SimulationError(
                f"drop-classes {k} infeasible: {len(present)} classes instantiated"
            )
        doomed = set(rng.sample(present, k))
        entities = {
            e: (c, p) for e, (c, p) in g.entities.items() if c not in doomed
        }
        triples = {
            t: prov
            for t, prov in g.triples.items()
            if t[0] in entities and t[2] in entities
        }
        return KnowledgeGraph(
            entities=entities,
            triples=triples,
            batch_id=g.batch_id,
            timestamp=g.timestamp,
        )

    if spec.kind is PerturbationKind.DROP_PROPERTIES:
        k = int(spec.magnitude)
        present = sorted(instantiated_properties(g))
        if k > len(present):
            raise SimulationError(
                f"drop-properties {k} infeasible: {len(present)} properties in use"
            )
        doomed = set(rng.sample(present, k))
        triples = {
            (s, p, o): prov
            for (s, p, o), prov in g.triples.items()
            if p not in doomed
        }
        return KnowledgeGraph(
            entities=dict(g.entities),
            triples=triples,
            batch_id=g.batch_id,
            timestamp=g.timestamp,
        )

    if spec.kind is PerturbationKind.INJECT_ENTITIES:
        n = int(spec.magnitude)
        classes = sorted(ontology.classes)
        if not classes:
            raise SimulationError("inject-entities infeasible: no ontology classes")
        entities = dict(g.entities)
        for i in range(n):
            # The ## prefix cannot come out of the tokenizer, so these
            # surfaces are guaranteed untraceable to any batch text.
            surface = f"{SYNTHETIC_PREFIX}-{spec.seed}-{i:04d}"
            entities[surface] = (rng.choice(classes), SYNTHETIC_PREFIX)
        return KnowledgeGraph(
            entities=entities,
            triples=dict(g.triples),
            batch_id=g.batch_id,
            timestamp=g.timestamp,
        )

    if spec.kind is PerturbationKind.DEPTH_SKEW:
        deepest = _deepest_descendants(ontology)
        eligible = sorted(
            e for e, (c, _) in g.entities.items() if c in deepest
        )
        count = round(spec.magnitude * len(eligible))
        chosen = rng.sample(eligible, count)
        entities = dict(g.entities)
        for e in chosen:
            cls, prov = entities[e]
            entities[e] = (deepest[cls], prov)
        return KnowledgeGraph(
            entities=entities,
            triples=dict(g.triples),
            batch_id=g.batch_id,
            timestamp=g.timestamp,
        )

    raise SimulationError(
        "delta-noise perturbs scenario deltas, not graphs; schedule it in a run"
    )


@dataclass
class ScenarioConfig:
    ontology: Ontology
    weights: AnomalyWeights = DEFAULT_WEIGHTS
    lam: float = DEFAULT_LAMBDA
    capacity: int = DEFAULT_WINDOW
    warmup_min: int = DEFAULT_WARMUP
    noise_sigma: float = 0.0
    noise_seed: int = 0
    model: str = "sim"
    history_path: str | None = None


@dataclass
class ScenarioResult:
    records: list[AnomalyRecord]
    first_flag_step: int | None
    false_positive_count: int

    def flagged_steps(self) -> list[int]:
        return [i for i, r in enumerate(self.records) if r.flagged]

    def summary_line(self) -> str:
        return json.dumps(
            {
                "steps": len(self.records),
                "first_flag_step": self.first_flag_step,
                "false_positive_count": self.false_positive_count,
                "flagged_steps": self.flagged_steps(),
            }
        )


def _clamp_unit(value: float) -> float:
    # Noise models measurement error on the candidate metrics, so it must
    # stay symmetric around the clean delta; clamping magnitude to 1 keeps
    # scores bounded without rectifying the distribution at zero.
    return max(-1.0, min(1.0, value))


def run_scenario(
    stream: Iterable[tuple[list[ArticleDoc], KnowledgeGraph]],
    schedule: Mapping[int, PerturbationSpec],
    config: ScenarioConfig,
) -> ScenarioResult:
    """Drive the monitor over a (batch, baseline) stream.

    Each step's candidate is the baseline perturbed per the schedule
    (identity when absent). A scheduled delta-noise entry overrides the
    configured sigma for that step only. Three Gaussian draws are consumed
    every step regardless of sigma, so a given noise_seed yields the same
    noise stream under any schedule. False positives are counted on steps
    with no schedule entry.
    """
    state = ThresholdState(
        capacity=config.capacity, lam=config.lam, warmup_min=config.warmup_min
    )
    noise_rng = random.Random(config.noise_seed)
    records: list[AnomalyRecord] = []
    first_flag: int | None = None
    false_positives = 0
    steps = 0

    for step, (batch, g_base) in enumerate(stream):
        steps += 1
        scheduled = schedule.get(step)
        sigma = config.noise_sigma
        graph_spec = None
        if scheduled is not None:
            if scheduled.kind is PerturbationKind.DELTA_NOISE:
                sigma = scheduled.magnitude
            else:
                graph_spec = scheduled

        if graph_spec is not None:
            try:
                candidate = perturb(g_base, graph_spec, config.ontology)
            except SimulationError as exc:
                raise SimulationError(f"step {step}: {exc}") from exc
            base_m = metric_vector(g_base, config.ontology)
            cand_m = metric_vector(candidate, config.ontology)
        else:
            base_m = metric_vector(g_base, config.ontology)
            cand_m = base_m
        clean = metric_delta(cand_m, base_m)

        eps = (
            noise_rng.gauss(0.0, 1.0),
            noise_rng.gauss(0.0, 1.0),
            noise_rng.gauss(0.0, 1.0),
        )
        noised = MetricDelta(
            d_icr=_clamp_unit(clean.d_icr + sigma * eps[0]),
            d_ipr=_clamp_unit(clean.d_ipr + sigma * eps[1]),
            d_ci=_clamp_unit(clean.d_ci + sigma * eps[2]),
            d_hal=clean.d_hal,
        )

        record, _alert = observe(
            state,
            timestamp=step,
            model=config.model,
            metrics=cand_m,
            baseline_metrics=base_m,
            weights=config.weights,
            batch_id=g_base.batch_id,
            delta=noised,
        )
        records.append(record)
        if record.flagged:
            if first_flag is None:
                first_flag = step
            if scheduled is None:
                false_positives += 1
        if config.history_path:
            append_history(config.history_path, record_to_row(record))

    if steps < config.warmup_min + 1:
        raise SimulationError(
            f"scenario too short: {steps} steps, warmup needs {config.warmup_min + 1}"
        )
    return ScenarioResult(
        records=records,
        first_flag_step=first_flag,
        false_positive_count=false_positives,
    )


def synthetic_stream(
    ontology: Ontology, steps: int
) -> Iterator[tuple[list[ArticleDoc], KnowledgeGraph]]:
    """Constant-content stream: every ontology class carries two entities
    and every property one triple, so all unperturbed deltas are zero and
    IPR is 1. One single-article batch per step."""
    classes = sorted(ontology.classes)
    if not classes:
        raise SimulationError("synthetic stream needs at least one ontology class")
    surfaces = {cls: (f"{cls} Alpha", f"{cls} Beta") for cls in classes}

    for step in range(steps):
        article_id = f"sim-{step:05d}"
        entities: dict[str, tuple[str, str]] = {}
        for cls in classes:
            first, second = surfaces[cls]
            entities[first] = (cls, article_id)
            entities[second] = (cls, article_id)
        triples: dict[tuple[str, str, str], str] = {}
        for pname in sorted(ontology.properties):
            pdef = ontology.properties[pname]
            subj = surfaces[pdef.domain][0]
            obj = surfaces[pdef.range][1]
            triples[(subj, pname, obj)] = article_id
        text = ". ".join(sorted(entities)) + "."
        batch = [ArticleDoc(id=article_id, published_at=step, text=text)]
        yield batch, KnowledgeGraph(
            entities=entities,
            triples=triples,
            batch_id=article_id,
            timestamp=step,
        )


def load_schedule(text: str) -> tuple[dict[int, PerturbationSpec], list[int]]:
    """Parse schedule lines `step<TAB>kind<TAB>magnitude<TAB>seed` plus
    optional `ASSERT_FLAG_AT step` directives."""
    schedule: dict[int, PerturbationSpec] = {}
    asserts: list[int] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("ASSERT_FLAG_AT"):
            parts = line.split()
            if len(parts) != 2 or not parts[1].isdigit():
                raise SimulationError(
                    f"schedule line {lineno}: ASSERT_FLAG_AT needs one step number"
                )
            asserts.append(int(parts[1]))
            continue
        fields = raw.split("\t")
        if len(fields) != 4:
            raise SimulationError(f"schedule line {lineno}: expected 4 fields")
        try:
            step = int(fields[0])
            kind = PerturbationKind(fields[1].strip())
            magnitude = float(fields[2])
            seed = int(fields[3])
        except ValueError as exc:
            raise SimulationError(f"schedule line {lineno}: {exc}") from exc
        if step < 0:
            raise SimulationError(f"schedule line {lineno}: negative step")
        if step in schedule:
            raise SimulationError(f"schedule line {lineno}: duplicate step {step}")
        schedule[step] = PerturbationSpec(kind=kind, magnitude=magnitude, seed=seed)
    return schedule, sorted(asserts)
