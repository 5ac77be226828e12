"""Bundled desk-scale workloads: four model families on two synthetic graphs."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gnn import GnnModelSpec, random_layer
from .graphio import Graph, generate_graph

GRAPHS = {
    "er64": ("erdos_renyi", 64, 0.08),
    "pl64": ("power_law", 64, 2.5),
}
MODELS = ("gcn", "graphsage", "gin", "gat")
FEATURE_DIM = 32


@dataclass(frozen=True)
class Workload:
    name: str
    graph: Graph
    model: GnnModelSpec


def toy_graph(name: str, seed: int = 0) -> Graph:
    kind, n, param = GRAPHS[name]
    return generate_graph(kind, n, param, FEATURE_DIM, seed)


def _bn(dim: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    return rng.uniform(0.5, 1.5, dim), rng.uniform(-0.1, 0.1, dim)


def toy_model(family: str, seed: int = 0) -> GnnModelSpec:
    s = seed * 100
    if family == "gcn":
        layers = (random_layer(FEATURE_DIM, 16, s + 1),
                  random_layer(16, 8, s + 2, activation="softmax"))
    elif family == "graphsage":
        layers = (random_layer(FEATURE_DIM, 16, s + 1, reduce_op="mean", sample_cap=4,
                               sample_seed=seed),
                  random_layer(16, 8, s + 2, reduce_op="mean", sample_cap=4,
                               sample_seed=seed + 1, activation="softmax"))
    elif family == "gin":
        dims = [FEATURE_DIM] + [16] * 8
        layers = tuple(random_layer(dims[k], dims[k + 1], s + k + 1, gin_epsilon=0.1,
                                    batch_norm=_bn(dims[k + 1], s + 50 + k))
                       for k in range(8))
        return GnnModelSpec("gin", layers, readout="sum")
    elif family == "gat":
        layers = (random_layer(FEATURE_DIM, 8, s + 1, heads=8, concat=True,
                               activation="leaky_relu"),
                  random_layer(64, 8, s + 2, heads=1, concat=False, activation="softmax"))
    else:
        raise ValueError(f"unknown model family {family!r}")
    return GnnModelSpec(family, layers)


def bundled_workloads(seed: int = 0) -> list[Workload]:
    out = []
    for gname in GRAPHS:
        g = toy_graph(gname, seed)
        for fam in MODELS:
            out.append(Workload(f"{fam}/{gname}", g, toy_model(fam, seed)))
    return out


def get_workload(name: str, seed: int = 0) -> Workload:
    fam, gname = name.split("/")
    if fam not in MODELS or gname not in GRAPHS:
        raise KeyError(f"unknown workload {name!r}")
    return Workload(name, toy_graph(gname, seed), toy_model(fam, seed))
