"""Feedforward policies with optional multiplicative neuro-regulation.

Genome layout (flat float64 vector)::

    [ W_in (n_hidden x n_inputs, row-major) | b_hidden (n_hidden)
      | W_out (n_outputs x n_hidden, row-major) | b_out (n_outputs) ]

With gating on, the hidden layer is split in two halves of size K.  The first
half uses tanh, the second half uses the logistic function and acts as a gate:
the effective hidden vector is ``tanh(z[:K]) * logistic(z[K:])`` followed by K
exact zeros.  The output weights reading from the gating half stay in the
genome but never touch the action.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import expit

from .exceptions import ConfigError, ParseError

PARAMS_MAGIC = "neuromod-params"
PARAMS_VERSION = "v1"


@dataclass(frozen=True)
class NetworkTopology:
    n_inputs: int
    n_hidden: int
    n_outputs: int
    gating: bool = False

    def __post_init__(self):
        if self.n_inputs < 1 or self.n_outputs < 1:
            raise ConfigError(f"need n_inputs >= 1 and n_outputs >= 1, got {self}")
        if self.n_hidden < 2:
            raise ConfigError(f"need n_hidden >= 2, got {self.n_hidden}")
        if self.gating and self.n_hidden % 2:
            raise ConfigError(f"gating requires an even hidden layer, got {self.n_hidden}")

    @property
    def n_gates(self) -> int:
        return self.n_hidden // 2 if self.gating else 0

    @property
    def n_params(self) -> int:
        return param_count(self)

    def slices(self) -> dict[str, slice]:
        """Offsets of each block inside the flat genome."""
        i, h, o = self.n_inputs, self.n_hidden, self.n_outputs
        bounds = np.cumsum([0, h * i, h, o * h, o])
        names = ("w_in", "b_hidden", "w_out", "b_out")
        return {n: slice(int(a), int(b)) for n, a, b in zip(names, bounds[:-1], bounds[1:])}


def param_count(topology: NetworkTopology) -> int:
    i, h, o = topology.n_inputs, topology.n_hidden, topology.n_outputs
    return h * i + h + o * h + o


def init_params(topology: NetworkTopology, seed: int) -> np.ndarray:
    """Gaussian weights with std 1/sqrt(fan_in) per layer, zero biases."""
    rng = np.random.Generator(np.random.PCG64(seed))
    s = topology.slices()
    params = np.zeros(param_count(topology))
    params[s["w_in"]] = rng.standard_normal(s["w_in"].stop - s["w_in"].start) / np.sqrt(topology.n_inputs)
    params[s["w_out"]] = rng.standard_normal(s["w_out"].stop - s["w_out"].start) / np.sqrt(topology.n_hidden)
    return params


def unpack(params: np.ndarray, topology: NetworkTopology):
    """Split a genome (or a batch of genomes, shape (P, D)) into weight blocks."""
    params = np.asarray(params, dtype=float)
    if params.shape[-1] != param_count(topology):
        raise ConfigError(
            f"genome length {params.shape[-1]} does not match topology ({param_count(topology)})"
        )
    lead = params.shape[:-1]
    i, h, o = topology.n_inputs, topology.n_hidden, topology.n_outputs
    s = topology.slices()
    w_in = params[..., s["w_in"]].reshape(*lead, h, i)
    b_h = params[..., s["b_hidden"]]
    w_out = params[..., s["w_out"]].reshape(*lead, o, h)
    b_out = params[..., s["b_out"]]
    return w_in, b_h, w_out, b_out


def forward_batch(params: np.ndarray, topology: NetworkTopology, obs: np.ndarray):
    """Forward a batch of genomes, one observation each.

    ``params`` has shape (P, D) and ``obs`` (P, n_inputs).  Returns
    ``(actions, gates)`` where ``gates`` is (P, K) for gated topologies and
    ``None`` otherwise.  Each row is computed independently of the others, so
    results do not depend on batch composition or order.
    """
    obs = np.asarray(obs, dtype=float)
    if obs.ndim != 2 or obs.shape[1] != topology.n_inputs:
        raise ConfigError(f"expected observations of shape (P, {topology.n_inputs}), got {obs.shape}")
    return forward_unpacked(unpack(params, topology), topology, obs)


def forward_unpacked(weights, topology: NetworkTopology, obs: np.ndarray):
    """Same as :func:`forward_batch` on weights already split by :func:`unpack`."""
    w_in, b_h, w_out, b_out = weights
    z = np.einsum("phi,pi->ph", w_in, obs) + b_h
    if not topology.gating:
        hidden = np.tanh(z)
        return np.tanh(np.einsum("poh,ph->po", w_out, hidden) + b_out), None
    k = topology.n_gates
    gates = expit(z[:, k:])
    effective = np.tanh(z[:, :k]) * gates
    # the gating half of the effective layer is exactly zero, so only the
    # first k output columns participate
    out = np.einsum("poh,ph->po", w_out[:, :, :k], effective) + b_out
    return np.tanh(out), gates


def _single(params, topology, obs):
    params = np.asarray(params, dtype=float)
    obs = np.asarray(obs, dtype=float)
    if params.ndim != 1:
        raise ConfigError("expected a single flat genome")
    if obs.shape != (topology.n_inputs,):
        raise ConfigError(f"observation length {obs.shape} does not match n_inputs={topology.n_inputs}")
    return params[None, :], obs[None, :]


def forward_standard(params, topology: NetworkTopology, obs) -> np.ndarray:
    """tanh hidden layer, tanh outputs."""
    if topology.gating:
        raise ConfigError("forward_standard called on a gated topology")
    p, o = _single(params, topology, obs)
    return forward_batch(p, topology, o)[0][0]


def forward_gated(params, topology: NetworkTopology, obs, trace: bool = False):
    """Gated forward pass; returns ``(action, gates or None)``."""
    if not topology.gating:
        raise ConfigError("forward_gated called on a topology without gating")
    p, o = _single(params, topology, obs)
    actions, gates = forward_batch(p, topology, o)
    return actions[0], (gates[0] if trace else None)


def forward(params, topology: NetworkTopology, obs) -> np.ndarray:
    if topology.gating:
        return forward_gated(params, topology, obs)[0]
    return forward_standard(params, topology, obs)


class GateTrace:
    """Per-step gate activations recorded during a rollout."""

    def __init__(self, n_gates: int):
        self.n_gates = n_gates
        self._steps: list[np.ndarray] = []

    def append(self, gates) -> None:
        gates = np.asarray(gates, dtype=float)
        if gates.shape != (self.n_gates,):
            raise ValueError(f"expected {self.n_gates} gate values, got shape {gates.shape}")
        self._steps.append(gates.copy())

    def __len__(self):
        return len(self._steps)

    def as_array(self) -> np.ndarray:
        if not self._steps:
            return np.zeros((0, self.n_gates))
        return np.stack(self._steps)

    def mean(self) -> np.ndarray:
        return self.as_array().mean(axis=0)


def save_params(path, params) -> None:
    params = np.asarray(params, dtype=float)
    if not np.all(np.isfinite(params)):
        raise ValueError("refusing to write a non-finite genome")
    lines = [f"{PARAMS_MAGIC} {PARAMS_VERSION} {params.size}"]
    # 17 significant digits round-trip any float64 exactly
    lines += [f"{float(v):.16e}" for v in params]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_params(path) -> np.ndarray:
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines:
        raise ParseError("empty parameter file", path, 1)
    header = lines[0].split()
    if len(header) != 3 or header[0] != PARAMS_MAGIC or header[1] != PARAMS_VERSION:
        raise ParseError(f"bad header {lines[0]!r}", path, 1)
    try:
        dim = int(header[2])
    except ValueError:
        raise ParseError(f"bad dimension {header[2]!r}", path, 1) from None
    body = lines[1:]
    if len(body) != dim:
        raise ParseError(f"header declares {dim} values, found {len(body)}", path, len(lines))
    values = np.empty(dim)
    for n, line in enumerate(body, start=2):
        try:
            values[n - 2] = float(line)
        except ValueError:
            raise ParseError(f"not a number: {line!r}", path, n) from None
    if not np.all(np.isfinite(values)):
        raise ParseError("non-finite parameter value", path)
    return values
