"""Training runs: configuration, the generation loop and fitness curves."""
from __future__ import annotations

import csv
import logging
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Callable, NamedTuple

import numpy as np

from . import environments as envs
from .environments import BehaviorCue
from .es_optimizer import EsConfig, EsState, apply_update, centered_ranks, estimate_update, sample_pairs
from .evaluation import EvaluationStrategy, build_plan, evaluate_generation, gap_from_fitness, rollout_batch
from .exceptions import ConfigError, ParseError
from .policy_net import NetworkTopology, init_params

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RunConfig:
    env: str = "hopper"
    strategy: str = "paired"
    gating: bool = False
    hidden: int = 16
    generations: int = 300
    n_pairs: int = 40
    sigma: float = 0.05
    learning_rate: float = 0.01
    weight_decay: float = 0.005
    max_steps: int = 500
    seed: int = 0
    replications: int = 5
    out_dir: str = "runs"
    jobs: int = 1

    def __post_init__(self):
        if self.env not in envs.ENVS:
            raise ConfigError(f"unknown env {self.env!r}; expected one of {', '.join(envs.ENVS)}")
        object.__setattr__(self, "strategy", EvaluationStrategy.parse(self.strategy).value)
        for name in ("hidden", "generations", "n_pairs", "max_steps", "replications", "jobs"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.seed < 0:
            raise ConfigError(f"seed must be non-negative, got {self.seed}")
        # validates hidden parity and ES ranges
        self.topology()
        self.es_config(self.seed)

    def topology(self) -> NetworkTopology:
        return NetworkTopology(envs.obs_dim(self.env), self.hidden, envs.action_dim(self.env), self.gating)

    def es_config(self, run_seed: int) -> EsConfig:
        return EsConfig(sigma=self.sigma, learning_rate=self.learning_rate, n_pairs=self.n_pairs,
                        weight_decay=self.weight_decay, seed=run_seed)

    def as_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def field_types(cls) -> dict[str, type]:
        return {f.name: f.type for f in fields(cls)}


# -- fitness curves ----------------------------------------------------------

CURVE_HEADER = ("generation", "eval_steps", "fitness_b1", "fitness_b2", "combined", "best_sample")


class CurveRow(NamedTuple):
    generation: int
    eval_steps: int
    fitness_b1: float
    fitness_b2: float
    combined: float
    best_sample: float

    @property
    def gap(self) -> float:
        return gap_from_fitness(self.fitness_b1, self.fitness_b2)


def write_curve(path, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CURVE_HEADER)
        for r in rows:
            w.writerow((int(r.generation), int(r.eval_steps), repr(float(r.fitness_b1)),
                        repr(float(r.fitness_b2)), repr(float(r.combined)), repr(float(r.best_sample))))


def read_curve(path) -> list[CurveRow]:
    path = Path(path)
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != CURVE_HEADER:
            raise ParseError(f"expected header {','.join(CURVE_HEADER)}", path, 1)
        for lineno, rec in enumerate(reader, start=2):
            if len(rec) != len(CURVE_HEADER):
                raise ParseError(f"expected {len(CURVE_HEADER)} columns, got {len(rec)}", path, lineno)
            try:
                rows.append(CurveRow(int(rec[0]), int(rec[1]), *(float(v) for v in rec[2:])))
            except ValueError as exc:
                raise ParseError(str(exc), path, lineno) from None
    return rows


# -- the generation loop -------------------------------------------------------

class TrainResult(NamedTuple):
    params: np.ndarray
    curve: list[CurveRow]
    state: EsState


def train(config: RunConfig, run_seed: int | None = None,
          on_generation: Callable[[CurveRow], None] | None = None) -> TrainResult:
    """Evolve one policy.

    Row ``g`` of the returned curve describes the centroid after the update of
    generation ``g``; its two per-behavior episodes are batched into the next
    generation's evaluation pass.
    """
    run_seed = config.seed if run_seed is None else run_seed
    topology = config.topology()
    es_cfg = config.es_config(run_seed)
    state = EsState.initial(init_params(topology, run_seed))
    cues = (BehaviorCue.B1, BehaviorCue.B2)

    curve: list[CurveRow] = []
    pending = None  # (generation, eval_steps, best_sample) awaiting centroid fitness
    eval_steps = 0

    def close_row(probe_fitness):
        gen, steps, best = pending
        f1, f2 = (float(v) for v in probe_fitness)
        row = CurveRow(gen, steps, f1, f2, f1 + f2, best)
        curve.append(row)
        if on_generation is not None:
            on_generation(row)

    for gen in range(config.generations):
        batch = sample_pairs(state, es_cfg)
        plan = build_plan(config.strategy, gen, run_seed, config.n_pairs)
        probes = [(state.centroid, b) for b in cues] if pending else []
        ev = evaluate_generation(batch, plan, config.env, topology, config.max_steps, probes)
        if pending:
            close_row(ev.probe_fitness)
        eval_steps += int(ev.steps_used.sum())
        g = estimate_update(batch, centered_ranks(ev.fitness), es_cfg)
        state = apply_update(state, g, es_cfg)
        pending = (gen, eval_steps, float(ev.fitness.max()))

    final = rollout_batch(np.stack([state.centroid] * 2), topology, config.env, list(cues), config.max_steps)
    close_row(final.fitness)
    return TrainResult(state.centroid.copy(), curve, state)


def log_progress(row: CurveRow) -> None:
    log.info("gen %d combined %.3f gap %.3f", row.generation, row.combined, row.gap)
