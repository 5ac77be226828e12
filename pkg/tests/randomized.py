"""Seeded random workload generator shared by the scheduling tests."""
from __future__ import annotations

import numpy as np

from ghostsim.arch import ArchConfig
from ghostsim.gnn import GnnModelSpec, random_layer
from ghostsim.graphio import Graph
from oracles import random_simple_graph

FAMILIES = ("gcn", "graphsage", "gin", "gat")


def random_workload(rng: np.random.Generator, max_vertices: int = 64):
    """(graph, model, arch config) drawn from ``rng``; the config is always valid."""
    n = int(rng.integers(1, max_vertices + 1))
    src, dst = random_simple_graph(rng, n, float(rng.uniform(0.0, 0.3)))
    F = int(rng.integers(1, 40))
    g = Graph.from_edges(src, dst, n, F, rng.normal(size=(n, F)))
    fam = FAMILIES[int(rng.integers(4))]
    act = ["relu", "softmax", "none", "tanh"][int(rng.integers(4))]
    if fam == "gat":
        layers = (random_layer(F, int(rng.integers(1, 9)), 1, heads=int(rng.integers(1, 4)),
                               activation=act),)
    else:
        dims = [F] + [int(rng.integers(1, 40)) for _ in range(int(rng.integers(1, 3)))]
        layers = tuple(random_layer(dims[k], dims[k + 1], k, activation=act,
                                    reduce_op="mean" if fam == "graphsage" else "sum",
                                    gin_epsilon=0.1 if fam == "gin" else None,
                                    sample_cap=3 if fam == "graphsage" else None)
                       for k in range(len(dims) - 1))
    vec = (int(rng.integers(1, 24)), int(rng.integers(1, 24)), int(rng.integers(1, 19)),
           int(rng.integers(1, 21)), int(rng.integers(1, 24)))
    return g, GnnModelSpec(fam, layers), ArchConfig.from_vector(vec)
