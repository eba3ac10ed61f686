"""Episode rollouts, behavior-assignment strategies and specialization metrics."""
from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from . import environments as envs
from .environments import BehaviorCue
from .es_optimizer import PerturbationBatch
from .exceptions import ConfigError, NumericalFailure
from .policy_net import GateTrace, NetworkTopology, forward_unpacked, unpack

SEED_BOUND = 2**63


class EvaluationStrategy(str, enum.Enum):
    """How behaviors are assigned to the candidates of one generation.

    NAIVE draws a behavior per candidate, so mirrored partners may be asked
    for different behaviors.  TWO_EPISODE scores every candidate on B1 then
    B2 and sums.  PAIRED draws one behavior per mirrored pair.
    """

    NAIVE = "naive"
    TWO_EPISODE = "episodes"
    PAIRED = "paired"

    @classmethod
    def parse(cls, value) -> "EvaluationStrategy":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            names = ", ".join(s.value for s in cls)
            raise ConfigError(f"unknown strategy {value!r}; expected one of {names}") from None

    @property
    def episodes_per_candidate(self) -> int:
        return 2 if self is EvaluationStrategy.TWO_EPISODE else 1


# -- rollouts ----------------------------------------------------------------

class BatchRollout(NamedTuple):
    fitness: np.ndarray      # (P,)
    steps_used: np.ndarray   # (P,) int
    failed: np.ndarray       # (P,) bool
    gates: np.ndarray | None  # (T, P, K) when traced
    active: np.ndarray | None  # (T, P) mask of steps that count


def rollout_batch(params, topology: NetworkTopology, env: str, behaviors,
                  max_steps: int, trace: bool = False) -> BatchRollout:
    """Run one episode per row of ``params`` in lock-step.

    Rewards stop accumulating for a row once its episode is done.  Rows do
    not interact, so a row's result is independent of what else is batched
    with it.
    """
    if max_steps < 1:
        raise ConfigError(f"max_steps must be >= 1, got {max_steps}")
    params = np.atleast_2d(np.asarray(params, dtype=float))
    n = params.shape[0]
    behaviors = np.broadcast_to(np.asarray(behaviors, dtype=np.int64), (n,)).copy()
    if topology.n_inputs != envs.obs_dim(env) or topology.n_outputs != envs.action_dim(env):
        raise ConfigError(
            f"topology {topology.n_inputs}->{topology.n_outputs} does not fit env {env!r} "
            f"({envs.obs_dim(env)}->{envs.action_dim(env)})"
        )

    weights = unpack(params, topology)
    if topology.gating:
        k = topology.n_gates
        weights = (*weights[:2], np.ascontiguousarray(weights[2][:, :, :k]), weights[3])
    state, _ = envs.reset(env, batch=n)
    obs = envs.observe(env, state, behaviors)
    total = np.zeros(n)
    steps = np.zeros(n, dtype=np.int64)
    active = np.ones(n, dtype=bool)
    failed = np.zeros(n, dtype=bool)
    gate_log, mask_log = [], []
    with np.errstate(all="ignore"):
        for _ in range(max_steps):
            actions, gates = forward_unpacked(weights, topology, obs)
            if trace and gates is not None:
                gate_log.append(gates)
                mask_log.append(active.copy())
            out = envs.step(env, state, actions, behaviors)
            failed |= active & (out.failed | ~np.all(np.isfinite(actions), axis=1))
            counted = active & ~failed
            total = np.where(counted, total + out.reward, total)
            steps += active
            active = active & ~out.done & ~failed
            state, obs = out.state, out.observation
            if not active.any():
                break
    gates_arr = mask_arr = None
    if trace and topology.gating:
        gates_arr = np.stack(gate_log)
        mask_arr = np.stack(mask_log)
    return BatchRollout(total, steps, failed, gates_arr, mask_arr)


class RolloutResult(NamedTuple):
    fitness: float
    steps_used: int
    gate_trace: GateTrace | None
    failed: bool = False


def rollout(params, topology: NetworkTopology, env: str, behavior, episode_seed: int = 0,
            max_steps: int = 500, trace: bool = False) -> RolloutResult:
    """Single episode.  A numerical failure yields ``failed=True`` and the
    (finite) return accumulated before the failure."""
    res = rollout_batch(np.asarray(params, dtype=float)[None, :], topology, env,
                        [int(BehaviorCue.parse(behavior))], max_steps, trace=trace)
    gate_trace = None
    if trace and topology.gating:
        gate_trace = GateTrace(topology.n_gates)
        for g, on in zip(res.gates[:, 0], res.active[:, 0]):
            if on:
                gate_trace.append(g)
    return RolloutResult(float(res.fitness[0]), int(res.steps_used[0]), gate_trace, bool(res.failed[0]))


# -- plans ---------------------------------------------------------------------

@dataclass(frozen=True)
class EvaluationPlan:
    strategy: EvaluationStrategy
    generation: int
    entries: tuple[tuple[tuple[int, BehaviorCue], ...], ...]  # per candidate

    @property
    def n_candidates(self) -> int:
        return len(self.entries)


def plan_rng(run_seed: int, generation: int) -> np.random.Generator:
    # stream 1 keeps behavior draws independent of the perturbation stream
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([run_seed, generation, 1])))


def build_plan(strategy, generation: int, run_seed: int, n_pairs: int) -> EvaluationPlan:
    strategy = EvaluationStrategy.parse(strategy)
    rng = plan_rng(run_seed, generation)
    m = 2 * n_pairs
    if strategy is EvaluationStrategy.NAIVE:
        behaviors = rng.integers(0, 2, size=m)
        seeds = rng.integers(0, SEED_BOUND, size=m)
        entries = tuple(((int(s), BehaviorCue(int(b))),) for s, b in zip(seeds, behaviors))
    elif strategy is EvaluationStrategy.TWO_EPISODE:
        seeds = rng.integers(0, SEED_BOUND, size=(m, 2))
        entries = tuple(((int(a), BehaviorCue.B1), (int(b), BehaviorCue.B2)) for a, b in seeds)
    else:
        behaviors = rng.integers(0, 2, size=n_pairs)
        seeds = rng.integers(0, SEED_BOUND, size=n_pairs)
        per_pair = [((int(s), BehaviorCue(int(b))),) for s, b in zip(seeds, behaviors)]
        entries = tuple(e for pair in per_pair for e in (pair, pair))
    return EvaluationPlan(strategy, generation, entries)


class GenerationEvaluation(NamedTuple):
    fitness: np.ndarray        # per candidate, penalty applied to failures
    steps_used: np.ndarray     # per candidate, summed over its episodes
    failed: np.ndarray         # per candidate
    probe_fitness: np.ndarray  # one value per probe
    probe_steps: np.ndarray


def evaluate_generation(candidates, plan: EvaluationPlan, env: str, topology: NetworkTopology,
                        max_steps: int, probes: Sequence[tuple[np.ndarray, BehaviorCue]] = ()
                        ) -> GenerationEvaluation:
    """Score every candidate on its plan entries (summing episodes).

    ``probes`` are extra ``(params, behavior)`` episodes run in the same
    vectorised pass, e.g. the centroid for the fitness curve.  A failed
    candidate receives the minimum finite fitness of the generation.
    """
    if isinstance(candidates, PerturbationBatch):
        candidates = candidates.candidates()
    candidates = np.atleast_2d(np.asarray(candidates, dtype=float))
    if candidates.shape[0] != plan.n_candidates:
        raise ValueError(f"plan covers {plan.n_candidates} candidates, got {candidates.shape[0]}")
    owner, rows, behaviors = [], [], []
    for c, entries in enumerate(plan.entries):
        for _seed, b in entries:
            owner.append(c)
            rows.append(candidates[c])
            behaviors.append(int(b))
    for p, b in probes:
        rows.append(np.asarray(p, dtype=float))
        behaviors.append(int(b))
    res = rollout_batch(np.stack(rows), topology, env, np.array(behaviors), max_steps)

    k = len(owner)
    owner = np.array(owner)
    m = plan.n_candidates
    fitness = np.zeros(m)
    steps = np.zeros(m, dtype=np.int64)
    failed = np.zeros(m, dtype=bool)
    np.add.at(fitness, owner, res.fitness[:k])
    np.add.at(steps, owner, res.steps_used[:k])
    np.logical_or.at(failed, owner, res.failed[:k])
    if failed.any():
        if failed.all():
            raise NumericalFailure(f"every candidate failed in generation {plan.generation}")
        fitness[failed] = fitness[~failed].min()
    return GenerationEvaluation(fitness, steps, failed, res.fitness[k:], res.steps_used[k:])


# -- instruments ---------------------------------------------------------------

def gap_from_fitness(f1: float, f2: float) -> float:
    gap = abs(f1 - f2) / max(abs(f1), abs(f2), 1e-9)
    return float(min(max(gap, 0.0), 1.0))


def behavior_gap(params, topology: NetworkTopology, env: str, episode_seed: int = 0,
                 max_steps: int = 500) -> float:
    """0 when the policy does equally well on both behaviors, 1 when one of them collapses."""
    p = np.asarray(params, dtype=float)
    res = rollout_batch(np.stack([p, p]), topology, env, [BehaviorCue.B1, BehaviorCue.B2], max_steps)
    return gap_from_fitness(res.fitness[0], res.fitness[1])


@dataclass(frozen=True)
class SpecializationReport:
    mean_gate_b1: np.ndarray
    mean_gate_b2: np.ndarray

    @property
    def index(self) -> np.ndarray:
        return np.abs(self.mean_gate_b1 - self.mean_gate_b2)

    @property
    def aggregate(self) -> float:
        return float(self.index.mean())

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("neuron_index", "mean_gate_b1", "mean_gate_b2", "index"))
            for j, (a, b, s) in enumerate(zip(self.mean_gate_b1, self.mean_gate_b2, self.index)):
                w.writerow((j, repr(float(a)), repr(float(b)), repr(float(s))))
            w.writerow(("aggregate", repr(float(self.mean_gate_b1.mean())),
                        repr(float(self.mean_gate_b2.mean())), repr(self.aggregate)))


def specialization_report(params, topology: NetworkTopology, env: str,
                          episode_seeds: Sequence[int] = (0,), max_steps: int = 500) -> SpecializationReport:
    if not topology.gating:
        raise ConfigError("specialization report needs a gated topology")
    seeds = list(episode_seeds) or [0]
    p = np.asarray(params, dtype=float)
    behaviors = [b for _ in seeds for b in (BehaviorCue.B1, BehaviorCue.B2)]
    res = rollout_batch(np.stack([p] * len(behaviors)), topology, env, behaviors, max_steps, trace=True)
    means = []
    for target in (BehaviorCue.B1, BehaviorCue.B2):
        cols = [i for i, b in enumerate(behaviors) if b == target]
        g = res.gates[:, cols, :]
        w = res.active[:, cols].astype(float)[..., None]
        means.append((g * w).sum(axis=(0, 1)) / w.sum(axis=(0, 1)))
    return SpecializationReport(means[0], means[1])
