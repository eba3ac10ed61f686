"""Replicated experiments, summary statistics and policy replay.

Output layout of one experiment directory::

    fitness_gen_r<r>.csv    per-generation curve of replication r
    params_final_r<r>.txt   final centroid of replication r
    errors.csv              only when a replication aborted
"""
from __future__ import annotations

import csv
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import fields
from pathlib import Path
from typing import Iterable, NamedTuple

import numpy as np

from . import environments as envs
from .environments import BehaviorCue
from .evaluation import specialization_report
from .exceptions import ConfigError, NumericalFailure, ParseError
from .policy_net import NetworkTopology, forward_batch, load_params, save_params
from .training import RunConfig, log_progress, read_curve, train, write_curve

log = logging.getLogger(__name__)

SUMMARY_HEADER = ("config", "n", "mean", "std", "min", "q1", "median", "q3", "max")
ERRORS_HEADER = ("replication", "kind", "message")

# config-file and CLI spellings accepted for RunConfig fields
KEY_ALIASES = {
    "pairs": "n_pairs",
    "lr": "learning_rate",
    "out": "out_dir",
    "max-steps": "max_steps",
    "weight-decay": "weight_decay",
}


def _coerce(name: str, raw):
    kind = RunConfig.field_types()[name]
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    try:
        if kind in (bool, "bool"):
            lowered = text.lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if kind in (int, "int"):
            return int(text)
        if kind in (float, "float"):
            return float(text)
    except ValueError:
        raise ConfigError(f"bad value for {name}: {raw!r}") from None
    return text


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """Parse ``key = value`` lines; '#' starts a comment."""
    known = {f.name for f in fields(RunConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        key, value = (p.strip() for p in line.split("=", 1))
        key = KEY_ALIASES.get(key, key.replace("-", "_"))
        if key not in known:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        values[key] = _coerce(key, value)
    return values


def load_config(path=None, **overrides) -> RunConfig:
    """Config file values, then non-None ``overrides`` on top."""
    values = {}
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        values.update(parse_config_text(text, str(path)))
    for key, value in overrides.items():
        if value is not None:
            key = KEY_ALIASES.get(key, key)
            values[key] = _coerce(key, value)
    return RunConfig(**values)


# -- train -------------------------------------------------------------------

class ReplicationOutcome(NamedTuple):
    replication: int
    curve_path: str | None
    params_path: str | None
    error: tuple[str, str] | None  # (kind, message)


def curve_path(out_dir, r: int) -> Path:
    return Path(out_dir) / f"fitness_gen_r{r}.csv"


def params_path(out_dir, r: int) -> Path:
    return Path(out_dir) / f"params_final_r{r}.txt"


def run_replication(config: RunConfig, r: int, progress: bool = True) -> ReplicationOutcome:
    try:
        result = train(config, config.seed + r, on_generation=log_progress if progress else None)
    except NumericalFailure as exc:
        log.error("replication %d aborted: %s", r, exc)
        return ReplicationOutcome(r, None, None, ("numerical", str(exc)))
    try:
        cpath, ppath = curve_path(config.out_dir, r), params_path(config.out_dir, r)
        write_curve(cpath, result.curve)
        save_params(ppath, result.params)
    except OSError as exc:
        log.error("replication %d could not write output: %s", r, exc)
        return ReplicationOutcome(r, None, None, ("io", str(exc)))
    return ReplicationOutcome(r, str(cpath), str(ppath), None)


def _run_quiet(args):
    config, r = args
    return run_replication(config, r, progress=False)


def run_experiment(config: RunConfig, progress: bool = True) -> list[ReplicationOutcome]:
    """Train ``config.replications`` runs with seeds ``seed + r``.

    With ``jobs > 1`` replications run in worker processes; they share only
    the output directory.  Failed replications are listed in ``errors.csv``.
    """
    out = Path(config.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    reps = range(config.replications)
    if config.jobs > 1 and config.replications > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            outcomes = list(pool.map(_run_quiet, [(config, r) for r in reps]))
    else:
        outcomes = [run_replication(config, r, progress) for r in reps]
    failures = [o for o in outcomes if o.error]
    if failures:
        with open(out / "errors.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(ERRORS_HEADER)
            for o in failures:
                w.writerow((o.replication, *o.error))
    return outcomes


# -- summarize -----------------------------------------------------------------

class SummaryStats(NamedTuple):
    config: str
    n: int
    mean: float
    std: float
    min: float
    q1: float
    median: float
    q3: float
    max: float


def summary_stats(label: str, finals: Iterable[float]) -> SummaryStats:
    x = np.asarray(list(finals), dtype=float)
    if x.size == 0:
        raise ValueError("no final fitness values to summarise")
    q1, med, q3 = np.percentile(x, [25, 50, 75])
    return SummaryStats(label, int(x.size), float(x.mean()), float(x.std(ddof=0)),
                        float(x.min()), float(q1), float(med), float(q3), float(x.max()))


def final_combined(path) -> float:
    rows = read_curve(path)
    if not rows:
        raise ParseError("curve has no data rows", path, 2)
    return rows[-1].combined


def summarize(groups: dict[str, list], out_path) -> list[SummaryStats]:
    """One summary row per ``label -> curve files`` group."""
    stats = []
    for label, files in groups.items():
        if not files:
            raise ConfigError(f"no curve files for {label!r}")
        stats.append(summary_stats(label, [final_combined(f) for f in files]))
    write_summary(out_path, stats)
    return stats


def write_summary(path, stats: Iterable[SummaryStats]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_HEADER)
        for s in stats:
            w.writerow((s.config, s.n, *(repr(float(v)) for v in s[2:])))


def read_summary(path) -> list[SummaryStats]:
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        if tuple(next(reader, ())) != SUMMARY_HEADER:
            raise ParseError(f"expected header {','.join(SUMMARY_HEADER)}", path, 1)
        out = []
        for lineno, rec in enumerate(reader, start=2):
            try:
                out.append(SummaryStats(rec[0], int(rec[1]), *(float(v) for v in rec[2:9])))
            except (ValueError, IndexError, TypeError):
                raise ParseError("malformed summary row", path, lineno) from None
    return out


def curve_files(directory) -> list[Path]:
    """Curve files of one experiment directory, ordered by replication index."""
    files = list(Path(directory).glob("fitness_gen_r*.csv"))
    return sorted(files, key=lambda p: int(p.stem.rsplit("_r", 1)[1]))


# -- replay / specialization -----------------------------------------------------

def load_policy(path, env: str, hidden: int, gating: bool) -> tuple[np.ndarray, NetworkTopology]:
    params = load_params(path)
    topology = NetworkTopology(envs.obs_dim(env), hidden, envs.action_dim(env), gating)
    if params.size != topology.n_params:
        raise ConfigError(
            f"{path} holds {params.size} parameters but env={env}, hidden={hidden}, "
            f"gating={'on' if gating else 'off'} needs {topology.n_params}"
        )
    return params, topology


def replay(params, topology: NetworkTopology, env: str, behavior, max_steps: int,
           trajectory_path=None) -> tuple[float, list[tuple]]:
    """Run one episode step by step, optionally dumping the trajectory CSV."""
    behavior = BehaviorCue.parse(behavior)
    state, _ = envs.reset(env)
    obs = envs.observe(env, state, behavior)
    p = np.asarray(params, dtype=float)[None, :]
    rows, total = [], 0.0
    for t in range(max_steps):
        action = forward_batch(p, topology, obs[None, :])[0][0]
        out = envs.step(env, state, action, behavior)
        if bool(out.failed):
            raise NumericalFailure(f"non-finite state at replay step {t}")
        total += float(out.reward)
        rows.append(envs.trajectory_row(env, t, out))
        state, obs = out.state, out.observation
        if bool(out.done):
            break
    if trajectory_path is not None:
        envs.write_trajectory(trajectory_path, env, rows)
    return total, rows


def write_specialization(params, topology: NetworkTopology, env: str, seeds, max_steps: int, path):
    report = specialization_report(params, topology, env, seeds, max_steps)
    report.to_csv(path)
    return report


__all__ = [
    "RunConfig", "load_config", "parse_config_text", "run_experiment", "run_replication",
    "summarize", "summary_stats", "read_summary", "write_summary", "curve_files",
    "load_policy", "replay", "write_specialization",
]
