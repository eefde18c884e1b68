"""Binary checkpoint format.

Layout::

    b"NOMADQN\\0"                 8-byte magic
    uint64 little-endian          header length in bytes
    header                        UTF-8 JSON object
    payload                       float64 little-endian arrays, back to back

The header records ``version``, ``layer_sizes``, ``counters`` (integers and
floats such as gradient steps and epsilon), the agent configuration, and an
``arrays`` list. Each entry has ``name``, ``shape`` and ``offset`` (float64
element offset into the payload). Array names are ``eval.W0``, ``eval.b0``, ...,
``target.*``, ``adam_m.*`` and ``adam_v.*``.
"""

from __future__ import annotations

import dataclasses
import json
import struct
from pathlib import Path
from typing import Dict, List

import numpy as np

from .dqn import AgentConfig, DQNAgent, NetworkParameters, OptimizerState

MAGIC = b"NOMADQN\x00"
VERSION = 1


class CheckpointError(ValueError):
    pass


def _param_names(n_layers: int) -> List[str]:
    names = []
    for k in range(n_layers):
        names += [f"W{k}", f"b{k}"]
    return names


def save(path, agent: DQNAgent, extra_counters: Dict[str, float] = None) -> None:
    n_layers = len(agent.params.weights)
    names = _param_names(n_layers)
    groups = {
        "eval": agent.params.arrays(),
        "target": agent.target.arrays(),
        "adam_m": agent.opt_state.m,
        "adam_v": agent.opt_state.v,
    }
    entries, chunks, offset = [], [], 0
    for group, arrays in groups.items():
        for name, a in zip(names, arrays):
            entries.append({"name": f"{group}.{name}", "shape": list(a.shape), "offset": offset})
            chunks.append(np.ascontiguousarray(a, dtype="<f8").tobytes())
            offset += a.size
    counters = {
        "gradient_steps": agent.gradient_steps,
        "optimizer_steps": agent.opt_state.t,
        "epsilon": agent.epsilon,
        "n_actions": agent.n_actions,
    }
    counters.update(extra_counters or {})
    header = {
        "format": "noma-dqn-checkpoint",
        "version": VERSION,
        "dtype": "<f8",
        "layer_sizes": agent.params.layer_sizes,
        "agent_config": dataclasses.asdict(agent.cfg),
        "counters": counters,
        "arrays": entries,
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for c in chunks:
            fh.write(c)


def read(path):
    """Return ``(header, {name: array})``."""
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a noma-dqn checkpoint")
    (n,) = struct.unpack("<Q", raw[8:16])
    header = json.loads(raw[16:16 + n].decode("utf-8"))
    if header.get("version") != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {header.get('version')}")
    payload = np.frombuffer(raw[16 + n:], dtype="<f8")
    arrays = {}
    for e in header["arrays"]:
        size = int(np.prod(e["shape"], dtype=np.int64))
        if e["offset"] + size > payload.size:
            raise CheckpointError(f"{path}: truncated payload")
        arrays[e["name"]] = payload[e["offset"]:e["offset"] + size].reshape(e["shape"]).astype(float)
    return header, arrays


def load(path, rng=None) -> DQNAgent:
    header, arrays = read(path)
    cfg_dict = dict(header["agent_config"])
    cfg_dict["hidden_sizes"] = tuple(cfg_dict["hidden_sizes"])
    cfg = AgentConfig(**cfg_dict)
    sizes = header["layer_sizes"]
    agent = DQNAgent(sizes[0], sizes[-1], cfg, rng=rng)
    n_layers = len(sizes) - 1

    def net(group):
        return NetworkParameters([arrays[f"{group}.W{k}"] for k in range(n_layers)],
                                 [arrays[f"{group}.b{k}"] for k in range(n_layers)])

    agent.params = net("eval")
    agent.target = net("target")
    names = _param_names(n_layers)
    counters = header["counters"]
    agent.opt_state = OptimizerState([arrays[f"adam_m.{k}"] for k in names],
                                     [arrays[f"adam_v.{k}"] for k in names],
                                     int(counters["optimizer_steps"]))
    agent.gradient_steps = int(counters["gradient_steps"])
    agent.epsilon = float(counters["epsilon"])
    return agent
