"""Graph container, edge-list ingestion, synthetic generators and block partitioning.

Adjacency is stored destination-major: row ``v`` of the CSR holds the sorted
source vertices ``u`` of every edge ``u -> v``.
"""
from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, TextIO

import numpy as np


class GraphFormatError(ValueError):
    """Malformed edge-list or feature input."""

    def __init__(self, message: str, lineno: int | None = None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


class GraphValidationError(ValueError):
    """Structurally invalid graph (index out of range, bad shapes, bad params)."""


@dataclass(frozen=True, eq=False)
class Graph:
    num_vertices: int
    indptr: np.ndarray
    indices: np.ndarray
    feature_dim: int = 0
    features: np.ndarray | None = None
    edge_features: np.ndarray | None = None
    directed: bool = True

    def __post_init__(self):
        n = self.num_vertices
        if n < 0:
            raise GraphValidationError("num_vertices must be non-negative")
        if self.indptr.shape != (n + 1,) or self.indptr[0] != 0:
            raise GraphValidationError("indptr must have length num_vertices + 1 and start at 0")
        if np.any(np.diff(self.indptr) < 0):
            raise GraphValidationError("indptr must be non-decreasing")
        if self.indptr[-1] != len(self.indices):
            raise GraphValidationError("indptr[-1] must equal the edge count")
        if len(self.indices) and (self.indices.min() < 0 or self.indices.max() >= n):
            raise GraphValidationError("source index out of range")
        if len(self.indices) > 1:
            same_row = np.ones(len(self.indices) - 1, dtype=bool)
            starts = self.indptr[1:-1]
            starts = starts[(starts > 0) & (starts < len(self.indices))]
            same_row[starts - 1] = False
            if np.any(np.diff(self.indices)[same_row] <= 0):
                raise GraphValidationError("CSR rows must be strictly increasing")
        if self.features is not None and self.features.shape != (n, self.feature_dim):
            raise GraphValidationError(
                f"features shape {self.features.shape} != ({n}, {self.feature_dim})")
        if self.edge_features is not None and self.edge_features.shape[0] != len(self.indices):
            raise GraphValidationError("edge_features must have one entry per edge")

    @classmethod
    def from_edges(cls, src: Iterable[int], dst: Iterable[int], num_vertices: int,
                   feature_dim: int = 0, features: np.ndarray | None = None,
                   weights: Iterable[float] | None = None, directed: bool = True) -> Graph:
        """Build a graph from parallel source/destination lists.

        Duplicate edges collapse to one; the weight of the last duplicate wins.
        """
        src = np.asarray(list(src) if not isinstance(src, np.ndarray) else src, dtype=np.int64)
        dst = np.asarray(list(dst) if not isinstance(dst, np.ndarray) else dst, dtype=np.int64)
        if src.shape != dst.shape:
            raise GraphValidationError("src and dst must have equal length")
        w = None
        if weights is not None:
            w = np.asarray(list(weights) if not isinstance(weights, np.ndarray) else weights,
                           dtype=np.float64)
            if w.shape != src.shape:
                raise GraphValidationError("weights must have one entry per edge")
        if len(src) and (min(src.min(), dst.min()) < 0
                         or max(src.max(), dst.max()) >= num_vertices):
            raise GraphValidationError(
                f"edge index out of range for num_vertices={num_vertices}")
        if not directed and len(src):
            src, dst = np.concatenate([src, dst]), np.concatenate([dst, src])
            if w is not None:
                w = np.concatenate([w, w])
        key = dst * max(num_vertices, 1) + src
        # stable sort keeps input order among duplicates; take the last of each run
        order = np.argsort(key, kind="stable")
        key_sorted = key[order]
        if len(key_sorted):
            last = np.ones(len(key_sorted), dtype=bool)
            last[:-1] = key_sorted[1:] != key_sorted[:-1]
            order = order[last]
        dst_s, src_s = dst[order], src[order]
        counts = np.bincount(dst_s, minlength=num_vertices) if num_vertices else np.zeros(0, np.int64)
        indptr = np.zeros(num_vertices + 1, dtype=np.int64)
        np.cumsum(counts, out=indptr[1:])
        ef = w[order] if w is not None else None
        feats = None if features is None else np.asarray(features, dtype=np.float64)
        return cls(num_vertices, indptr, src_s.astype(np.int64), feature_dim, feats, ef, directed)

    @property
    def num_edges(self) -> int:
        return int(len(self.indices))

    def neighbors(self, v: int) -> np.ndarray:
        return self.indices[self.indptr[v]:self.indptr[v + 1]]

    def edge_slice(self, v: int) -> slice:
        return slice(int(self.indptr[v]), int(self.indptr[v + 1]))

    def in_degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    def edge_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Return (src, dst) arrays in CSR order."""
        dst = np.repeat(np.arange(self.num_vertices), self.in_degrees())
        return self.indices.copy(), dst

    def to_dense(self) -> np.ndarray:
        """Dense matrix ``A[dst, src]`` holding edge weights (1.0 when unweighted)."""
        a = np.zeros((self.num_vertices, self.num_vertices))
        src, dst = self.edge_arrays()
        vals = 1.0 if self.edge_features is None or self.edge_features.ndim != 1 else self.edge_features
        a[dst, src] = vals
        return a

    def with_features(self, features: np.ndarray) -> Graph:
        features = np.asarray(features, dtype=np.float64)
        return Graph(self.num_vertices, self.indptr, self.indices, features.shape[1],
                     features, self.edge_features, self.directed)

    def to_bytes(self) -> bytes:
        """Canonical byte serialization, used for determinism checks and hashing."""
        buf = io.BytesIO()
        buf.write(np.array([self.num_vertices, self.feature_dim, int(self.directed)],
                           dtype="<i8").tobytes())
        buf.write(self.indptr.astype("<i8").tobytes())
        buf.write(self.indices.astype("<i8").tobytes())
        if self.features is not None:
            buf.write(self.features.astype("<f8").tobytes())
        if self.edge_features is not None:
            buf.write(self.edge_features.astype("<f8").tobytes())
        return buf.getvalue()


def load_edge_list(source: TextIO | str, num_vertices: int, feature_dim: int = 0,
                   feature_source: TextIO | str | None = None,
                   undirected: bool = False) -> Graph:
    """Parse ``src dst [weight]`` lines; ``#`` lines and blank lines are skipped."""
    if isinstance(source, str):
        source = io.StringIO(source)
    src, dst, weights = [], [], []
    has_weight = None
    for lineno, raw in enumerate(source, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) not in (2, 3):
            raise GraphFormatError(f"expected 2 or 3 columns, got {len(parts)}", lineno)
        try:
            u, v = int(parts[0]), int(parts[1])
        except ValueError:
            raise GraphFormatError(f"non-integer vertex index in {line!r}", lineno) from None
        if u < 0 or v < 0:
            raise GraphFormatError("vertex indices must be non-negative", lineno)
        if u >= num_vertices or v >= num_vertices:
            raise GraphValidationError(
                f"line {lineno}: index out of range ({u}, {v}) for num_vertices={num_vertices}")
        this_weighted = len(parts) == 3
        if has_weight is None:
            has_weight = this_weighted
        elif has_weight != this_weighted:
            raise GraphFormatError("mixed weighted and unweighted lines", lineno)
        if this_weighted:
            try:
                weights.append(float(parts[2]))
            except ValueError:
                raise GraphFormatError(f"bad weight {parts[2]!r}", lineno) from None
        src.append(u)
        dst.append(v)

    features = None
    if feature_source is not None:
        features = load_features(feature_source, num_vertices, feature_dim)
    return Graph.from_edges(src, dst, num_vertices, feature_dim, features,
                            weights if has_weight else None, directed=not undirected)


def load_features(source: TextIO | str, num_vertices: int, feature_dim: int) -> np.ndarray:
    """Read a CSV feature matrix with one row per vertex."""
    if isinstance(source, str):
        source = io.StringIO(source)
    rows = []
    for lineno, raw in enumerate(source, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        try:
            rows.append([float(x) for x in line.split(",")])
        except ValueError:
            raise GraphFormatError("non-numeric feature value", lineno) from None
        if len(rows[-1]) != feature_dim:
            raise GraphFormatError(f"expected {feature_dim} features, got {len(rows[-1])}", lineno)
    if len(rows) != num_vertices:
        raise GraphValidationError(f"feature rows {len(rows)} != num_vertices {num_vertices}")
    return np.array(rows, dtype=np.float64).reshape(num_vertices, feature_dim)


def write_edge_list(g: Graph, out: TextIO, header: str | None = None) -> None:
    out.write(f"# {header or 'edge list'}: {g.num_vertices} vertices, {g.num_edges} edges\n")
    src, dst = g.edge_arrays()
    weighted = g.edge_features is not None and g.edge_features.ndim == 1
    for k, (u, v) in enumerate(zip(src.tolist(), dst.tolist())):
        if weighted:
            out.write(f"{u} {v} {g.edge_features[k]!r}\n")
        else:
            out.write(f"{u} {v}\n")


def write_features(g: Graph, out: TextIO) -> None:
    if g.features is None:
        return
    for row in g.features:
        out.write(",".join(repr(float(x)) for x in row) + "\n")


GRAPH_KINDS = ("erdos_renyi", "power_law", "star", "chain")


def generate_graph(kind: str, n: int, param: float = 0.0, feature_dim: int = 0,
                   seed: int = 0) -> Graph:
    """Seeded synthetic graph.

    erdos_renyi: every ordered pair ``u != v`` is an edge with probability ``param``.
    power_law: in-degrees drawn from a discrete power law with exponent ``param``,
    sources chosen uniformly without replacement. star: every leaf points at 0.
    chain: ``i -> i+1``.
    """
    if n < 1:
        raise GraphValidationError("n must be >= 1")
    rng = np.random.default_rng(seed)
    if kind == "erdos_renyi":
        if not 0.0 <= param <= 1.0:
            raise GraphValidationError("edge probability must be in [0, 1]")
        mask = rng.random((n, n)) < param
        np.fill_diagonal(mask, False)
        dst, src = np.nonzero(mask)
    elif kind == "power_law":
        if not param > 1.0:
            raise GraphValidationError("power-law exponent must be > 1")
        ks = np.arange(1, max(n, 2))
        p = ks.astype(np.float64) ** (-param)
        p /= p.sum()
        degrees = rng.choice(ks, size=n, p=p) if n > 1 else np.zeros(1, dtype=np.int64)
        src_l, dst_l = [], []
        for v in range(n):
            others = np.delete(np.arange(n), v)
            k = min(int(degrees[v]), len(others))
            picked = rng.choice(others, size=k, replace=False) if k else []
            src_l.extend(int(u) for u in picked)
            dst_l.extend([v] * k)
        src, dst = np.array(src_l, dtype=np.int64), np.array(dst_l, dtype=np.int64)
    elif kind == "star":
        src, dst = np.arange(1, n), np.zeros(n - 1, dtype=np.int64)
    elif kind == "chain":
        src, dst = np.arange(0, n - 1), np.arange(1, n)
    else:
        raise GraphValidationError(f"unknown graph kind {kind!r}; expected one of {GRAPH_KINDS}")
    features = rng.uniform(-1.0, 1.0, size=(n, feature_dim)) if feature_dim else None
    return Graph.from_edges(src, dst, n, feature_dim, features)


@dataclass(frozen=True)
class PartitionPlan:
    """V x N block decomposition of the adjacency matrix.

    ``nonzero_blocks[i]`` lists input groups ``j`` (ascending) whose block
    (output group i, input group j) holds at least one edge;
    ``block_edge_counts[i]`` is aligned with it.  ``lane_degrees[i]`` holds
    in-degree + 1 for every vertex of output group i.
    """
    num_vertices: int
    v_group_size: int
    n_group_size: int
    num_v_groups: int
    num_n_groups: int
    nonzero_blocks: tuple[tuple[int, ...], ...]
    block_edge_counts: tuple[tuple[int, ...], ...]
    per_group_max_degree: tuple[int, ...]
    lane_degrees: tuple[tuple[int, ...], ...]
    fetch_order: tuple[tuple[int, int], ...] = field(default=())

    def group_vertices(self, i: int) -> range:
        lo = i * self.v_group_size
        return range(lo, min(lo + self.v_group_size, self.num_vertices))

    def input_group_size(self, j: int) -> int:
        lo = j * self.n_group_size
        return min(lo + self.n_group_size, self.num_vertices) - lo

    def group_edge_count(self, i: int) -> int:
        return sum(self.block_edge_counts[i])

    @property
    def skipped_blocks(self) -> int:
        return self.num_v_groups * self.num_n_groups - sum(len(b) for b in self.nonzero_blocks)

    def to_json(self) -> str:
        doc = {
            "v_group_size": self.v_group_size,
            "n_group_size": self.n_group_size,
            "nonzero_blocks": [list(b) for b in self.nonzero_blocks],
            "per_group_max_degree": list(self.per_group_max_degree),
            "fetch_order": [list(p) for p in self.fetch_order],
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def build_partition_plan(g: Graph, v_group_size: int, n_group_size: int) -> PartitionPlan:
    if v_group_size < 1 or n_group_size < 1:
        raise GraphValidationError("group sizes must be >= 1")
    n = g.num_vertices
    n_v = math.ceil(n / v_group_size) if n else 0
    n_n = math.ceil(n / n_group_size) if n else 0
    blocks: list[dict[int, int]] = [dict() for _ in range(n_v)]
    degrees = g.in_degrees()
    for v in range(n):
        counts = blocks[v // v_group_size]
        for u in g.neighbors(v).tolist():
            j = u // n_group_size
            counts[j] = counts.get(j, 0) + 1
    nonzero, edge_counts, max_deg, lanes = [], [], [], []
    for i in range(n_v):
        js = sorted(blocks[i])
        nonzero.append(tuple(js))
        edge_counts.append(tuple(blocks[i][j] for j in js))
        lo, hi = i * v_group_size, min((i + 1) * v_group_size, n)
        lane = tuple(int(d) + 1 for d in degrees[lo:hi])
        lanes.append(lane)
        max_deg.append(max(lane))
    fetch_order = tuple((i, j) for i in range(n_v) for j in nonzero[i])
    return PartitionPlan(n, v_group_size, n_group_size, n_v, n_n, tuple(nonzero),
                         tuple(edge_counts), tuple(max_deg), tuple(lanes), fetch_order)
