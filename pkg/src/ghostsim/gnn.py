"""Functional GNN inference expressed as gather / reduce / transform / activate.

This is the numerical reference the performance engine schedules.  Every
layer is evaluated vertex by vertex through the four UDFs so the execution
order mirrors the accelerator's aggregate, combine and update phases.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .graphio import Graph

FAMILIES = ("gcn", "graphsage", "gin", "gat")
REDUCE_OPS = ("sum", "mean", "max")
ACTIVATIONS = ("relu", "leaky_relu", "sigmoid", "tanh", "softmax", "none")
GAT_SLOPE = 0.2


class ModelSpecError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class GatConfig:
    heads: int
    attention: np.ndarray          # (heads, 2 * out_dim)
    concat: bool = True


@dataclass(frozen=True, eq=False)
class LayerSpec:
    in_dim: int
    out_dim: int
    weights: np.ndarray            # (in_dim, out_dim), or (heads, in_dim, out_dim) for GAT
    reduce_op: str = "sum"
    activation: str = "relu"
    leaky_slope: float = 0.01
    batch_norm: tuple[np.ndarray, np.ndarray] | None = None
    gat: GatConfig | None = None
    gin_epsilon: float | None = None
    sample_cap: int | None = None
    sample_seed: int = 0
    normalize: bool = False

    def __post_init__(self):
        if self.reduce_op not in REDUCE_OPS:
            raise ModelSpecError(f"unknown reduce op {self.reduce_op!r}")
        if self.activation not in ACTIVATIONS:
            raise ModelSpecError(f"unknown activation {self.activation!r}")
        w = self.weights
        if self.gat is not None:
            if w.shape != (self.gat.heads, self.in_dim, self.out_dim):
                raise ModelSpecError(f"GAT weights shape {w.shape} != "
                                     f"({self.gat.heads}, {self.in_dim}, {self.out_dim})")
            if self.gat.attention.shape != (self.gat.heads, 2 * self.out_dim):
                raise ModelSpecError("attention vectors must be (heads, 2 * out_dim)")
        elif w.shape != (self.in_dim, self.out_dim):
            raise ModelSpecError(f"weights shape {w.shape} != ({self.in_dim}, {self.out_dim})")
        if self.batch_norm is not None:
            scale, shift = self.batch_norm
            if scale.shape != (self.output_dim,) or shift.shape != (self.output_dim,):
                raise ModelSpecError("batch-norm vectors must have length out_dim")
        if self.sample_cap is not None and self.sample_cap < 1:
            raise ModelSpecError("sample_cap must be >= 1")

    @property
    def heads(self) -> int:
        return self.gat.heads if self.gat is not None else 1

    @property
    def output_dim(self) -> int:
        if self.gat is not None and self.gat.concat:
            return self.out_dim * self.gat.heads
        return self.out_dim


@dataclass(frozen=True)
class GnnModelSpec:
    family: str
    layers: tuple[LayerSpec, ...]
    readout: str | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ModelSpecError(f"unknown family {self.family!r}")
        if not self.layers:
            raise ModelSpecError("a model needs at least one layer")
        for k in range(1, len(self.layers)):
            if self.layers[k - 1].output_dim != self.layers[k].in_dim:
                raise ModelSpecError(f"layer {k - 1} output dim {self.layers[k - 1].output_dim} "
                                     f"does not chain into layer {k} in_dim {self.layers[k].in_dim}")
        if self.family == "gat" and any(l.gat is None for l in self.layers):
            raise ModelSpecError("every GAT layer needs a gat config")
        if self.readout is not None and self.readout not in REDUCE_OPS:
            raise ModelSpecError(f"unknown readout {self.readout!r}")


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    values: np.ndarray
    quantized: bool = False
    bits: int = 0
    scale: float = 0.0

    @property
    def dim(self) -> int:
        return self.values.shape[1]


# --- UDFs -------------------------------------------------------------------

def gather(h_u: np.ndarray, h_v: np.ndarray | None = None, h_uv=None,
           in_dim: int | None = None) -> np.ndarray:
    """Message from source ``u``: its features, scaled elementwise by edge features."""
    h_u = np.asarray(h_u, dtype=np.float64)
    if in_dim is not None and h_u.shape != (in_dim,):
        raise ModelSpecError(f"message length {h_u.shape[0]} != layer in_dim {in_dim}")
    if h_uv is None:
        return h_u
    h_uv = np.asarray(h_uv, dtype=np.float64)
    if h_uv.ndim and h_uv.shape != h_u.shape:
        raise ModelSpecError(f"edge feature length {h_uv.shape} != message length {h_u.shape}")
    return h_u * h_uv


def reduce(h_v: np.ndarray, messages: Sequence[np.ndarray] | np.ndarray, op: str = "sum",
           gin_epsilon: float | None = None) -> np.ndarray:
    h_v = np.asarray(h_v, dtype=np.float64)
    if any(np.shape(m) != h_v.shape for m in messages):
        raise ModelSpecError("all messages must match the vertex feature length")
    msgs = np.asarray(messages, dtype=np.float64).reshape(-1, h_v.shape[0])
    if op == "max":
        return np.max(np.vstack([h_v[None, :], msgs]), axis=0)
    self_term = (1.0 + gin_epsilon) * h_v if gin_epsilon is not None else h_v
    total = msgs.sum(axis=0)
    if op == "sum":
        return self_term + total
    if op == "mean":
        return self_term + (total / len(msgs) if len(msgs) else 0.0)
    raise ModelSpecError(f"unknown reduce op {op!r}")


def transform(h: np.ndarray, layer: LayerSpec, head: int | None = None) -> np.ndarray:
    h = np.asarray(h, dtype=np.float64)
    if h.shape != (layer.in_dim,):
        raise ModelSpecError(f"input length {h.shape} != in_dim {layer.in_dim}")
    w = layer.weights if head is None else layer.weights[head]
    y = h @ w
    if layer.batch_norm is not None and head is None:
        y = apply_batch_norm(y, layer.batch_norm)
    return y


def apply_batch_norm(y: np.ndarray, bn: tuple[np.ndarray, np.ndarray]) -> np.ndarray:
    scale, shift = bn
    return scale * y + shift


def activate(y: np.ndarray, fn: str = "relu", slope: float = 0.01) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    if fn == "relu":
        return np.maximum(y, 0.0)
    if fn == "leaky_relu":
        return np.where(y >= 0, y, slope * y)
    if fn == "sigmoid":
        return 1.0 / (1.0 + np.exp(-y))
    if fn == "tanh":
        return np.tanh(y)
    if fn == "softmax":
        if y.shape[-1] < 1:
            raise ModelSpecError("softmax needs at least one element")
        z = np.exp(y - y.max(axis=-1, keepdims=True))
        return z / z.sum(axis=-1, keepdims=True)
    if fn == "none":
        return y
    raise ModelSpecError(f"unknown activation {fn!r}")


def gat_attention_coeffs(v: int, neighbors: Sequence[int], layer: LayerSpec, head: int,
                         H: np.ndarray, z: np.ndarray | None = None) -> np.ndarray:
    """Attention over ``[v] + neighbors`` (self first) for one head; sums to 1."""
    if layer.gat is None:
        raise ModelSpecError("layer has no gat configuration")
    if not 0 <= head < layer.gat.heads:
        raise ModelSpecError(f"head {head} out of range")
    if z is None:
        z = np.asarray(H, dtype=np.float64) @ layer.weights[head]
    a = layer.gat.attention[head]
    d = layer.out_dim
    members = [v, *neighbors]
    scores = np.array([a[:d] @ z[v] + a[d:] @ z[u] for u in members])
    return activate(activate(scores, "leaky_relu", GAT_SLOPE), "softmax")


# --- layer execution ----------------------------------------------------------

def sample_neighbors(g: Graph, cap: int, seed: int = 0) -> Graph:
    """Keep at most ``cap`` sources per vertex, picked by a seeded per-vertex draw."""
    src, dst, weights = [], [], []
    for v in range(g.num_vertices):
        nb = g.neighbors(v)
        sl = g.edge_slice(v)
        idx = np.arange(len(nb))
        if len(nb) > cap:
            rng = np.random.default_rng([seed, v])
            idx = np.sort(rng.choice(len(nb), size=cap, replace=False))
        src.extend(nb[idx].tolist())
        dst.extend([v] * len(idx))
        if g.edge_features is not None:
            weights.extend(g.edge_features[sl][idx].tolist())
    ef = None
    if g.edge_features is not None:
        ef = np.array(weights).reshape((-1,) + g.edge_features.shape[1:])
    out = Graph.from_edges(src, dst, g.num_vertices, g.feature_dim, g.features,
                           directed=g.directed)
    return out if ef is None else Graph(out.num_vertices, out.indptr, out.indices,
                                        out.feature_dim, out.features, ef, out.directed)


def effective_graph(g: Graph, layer: LayerSpec) -> Graph:
    if layer.sample_cap is None:
        return g
    return sample_neighbors(g, layer.sample_cap, layer.sample_seed)


def _edge_feature(g: Graph, k: int):
    return None if g.edge_features is None else g.edge_features[k]


def run_layer(g: Graph, layer: LayerSpec, H: FeatureMatrix | np.ndarray,
              family: str = "gcn") -> FeatureMatrix:
    values = H.values if isinstance(H, FeatureMatrix) else np.asarray(H, dtype=np.float64)
    if values.shape != (g.num_vertices, layer.in_dim):
        raise ModelSpecError(f"feature matrix {values.shape} does not match "
                             f"({g.num_vertices}, {layer.in_dim})")
    g = effective_graph(g, layer)
    if family == "gat":
        return FeatureMatrix(_run_gat_layer(g, layer, values))

    eps = layer.gin_epsilon if family == "gin" else None
    if layer.normalize:
        deg_hat = g.in_degrees() + 1.0
    out = np.empty((g.num_vertices, layer.output_dim))
    for v in range(g.num_vertices):
        sl = g.edge_slice(v)
        msgs = []
        for k, u in zip(range(sl.start, sl.stop), g.neighbors(v).tolist()):
            m = gather(values[u], values[v], _edge_feature(g, k), layer.in_dim)
            if layer.normalize:
                m = m / np.sqrt(deg_hat[u] * deg_hat[v])
            msgs.append(m)
        h_self = values[v] / deg_hat[v] if layer.normalize else values[v]
        h_a = reduce(h_self, msgs, layer.reduce_op, eps)
        out[v] = activate(transform(h_a, layer), layer.activation, layer.leaky_slope)
    return FeatureMatrix(out)


def _run_gat_layer(g: Graph, layer: LayerSpec, values: np.ndarray) -> np.ndarray:
    gat = layer.gat
    heads = []
    for h in range(gat.heads):
        z = values @ layer.weights[h]
        zh = np.empty((g.num_vertices, layer.out_dim))
        for v in range(g.num_vertices):
            nb = g.neighbors(v).tolist()
            alpha = gat_attention_coeffs(v, nb, layer, h, values, z)
            zh[v] = alpha @ z[[v, *nb]]
        heads.append(zh)
    y = np.concatenate(heads, axis=1) if gat.concat else np.mean(heads, axis=0)
    if layer.batch_norm is not None:
        y = apply_batch_norm(y, layer.batch_norm)
    return activate(y, layer.activation, layer.leaky_slope)


def run_model(g: Graph, spec: GnnModelSpec, H0: FeatureMatrix | np.ndarray | None = None,
              bits: int | None = None) -> tuple[FeatureMatrix, np.ndarray | None]:
    """Apply every layer in order; optionally fake-quantize weights and activations."""
    if H0 is None:
        if g.features is None:
            raise ModelSpecError("graph carries no features and none were given")
        H0 = g.features
    H = H0 if isinstance(H0, FeatureMatrix) else FeatureMatrix(np.asarray(H0, dtype=np.float64))
    for layer in spec.layers:
        if bits is not None:
            H = FeatureMatrix(quantize(H.values, bits).dequantize())
            layer = quantize_layer(layer, bits)
        H = run_layer(g, layer, H, spec.family)
    readout = None
    if spec.readout == "sum":
        readout = H.values.sum(axis=0)
    elif spec.readout == "mean":
        readout = H.values.mean(axis=0)
    elif spec.readout == "max":
        readout = H.values.max(axis=0)
    return H, readout


# --- quantization -------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class QuantizedTensor:
    levels: np.ndarray   # signed integer grid values
    scale: float
    bits: int

    def dequantize(self) -> np.ndarray:
        return self.levels.astype(np.float64) * self.scale


def quantize(x: np.ndarray, bits: int = 8) -> QuantizedTensor:
    """Symmetric per-tensor quantization; sign handled separately from magnitude."""
    if not 2 <= bits <= 16:
        raise ModelSpecError("bits must lie in [2, 16]")
    x = np.asarray(x, dtype=np.float64)
    top = 2 ** (bits - 1) - 1
    peak = float(np.max(np.abs(x))) if x.size else 0.0
    if peak == 0.0:
        return QuantizedTensor(np.zeros(x.shape, dtype=np.int32), 0.0, bits)
    scale = peak / top
    levels = np.clip(np.rint(x / scale), -top, top).astype(np.int32)
    return QuantizedTensor(levels, scale, bits)


def quantize_layer(layer: LayerSpec, bits: int) -> LayerSpec:
    w = quantize(layer.weights, bits).dequantize()
    gat = layer.gat
    if gat is not None:
        gat = GatConfig(gat.heads, quantize(gat.attention, bits).dequantize(), gat.concat)
    return replace(layer, weights=w, gat=gat)


# --- construction and file formats -------------------------------------------

def random_layer(in_dim: int, out_dim: int, seed: int, **kwargs) -> LayerSpec:
    """Glorot-uniform weights from a seeded generator (no training)."""
    rng = np.random.default_rng(seed)
    heads = kwargs.pop("heads", None)
    concat = kwargs.pop("concat", True)
    limit = np.sqrt(6.0 / (in_dim + out_dim))
    if heads is not None:
        w = rng.uniform(-limit, limit, size=(heads, in_dim, out_dim))
        att = rng.uniform(-limit, limit, size=(heads, 2 * out_dim))
        return LayerSpec(in_dim, out_dim, w, gat=GatConfig(heads, att, concat), **kwargs)
    w = rng.uniform(-limit, limit, size=(in_dim, out_dim))
    return LayerSpec(in_dim, out_dim, w, **kwargs)


WEIGHT_MAGIC = b"GHSW"


def write_weights(path: str | Path, w: np.ndarray) -> None:
    """Little-endian float32 matrix with a 16-byte header: magic, rows, cols, reserved."""
    w = np.asarray(w, dtype="<f4")
    if w.ndim != 2:
        raise ModelSpecError("weight files hold 2-D matrices")
    with open(path, "wb") as fh:
        fh.write(WEIGHT_MAGIC + struct.pack("<III", w.shape[0], w.shape[1], 0))
        fh.write(w.tobytes())


def read_weights(path: str | Path) -> np.ndarray:
    path = Path(path)
    if path.suffix.lower() == ".csv":
        return np.loadtxt(path, delimiter=",", ndmin=2, dtype=np.float64)
    raw = path.read_bytes()
    if len(raw) < 16 or raw[:4] != WEIGHT_MAGIC:
        raise ModelSpecError(f"{path}: not a GHSW weight file")
    rows, cols, _ = struct.unpack("<III", raw[4:16])
    body = raw[16:]
    if len(body) != 4 * rows * cols:
        raise ModelSpecError(f"{path}: payload size does not match {rows}x{cols}")
    return np.frombuffer(body, dtype="<f4").astype(np.float64).reshape(rows, cols)


def _layer_from_dict(doc: dict, base: Path, index: int, seed: int) -> LayerSpec:
    in_dim, out_dim = int(doc["in_dim"]), int(doc["out_dim"])
    gat_doc = doc.get("gat")
    kwargs = dict(reduce_op=doc.get("reduce_op", "sum"),
                  activation=doc.get("activation", "relu"),
                  leaky_slope=float(doc.get("leaky_slope", 0.01)),
                  gin_epsilon=doc.get("gin_epsilon"),
                  sample_cap=doc.get("sample_cap"),
                  sample_seed=int(doc.get("sample_seed", 0)),
                  normalize=bool(doc.get("normalize", False)))
    layer_seed = int(doc.get("seed", seed * 1000 + index))
    wsrc = doc.get("weights", "random")
    if gat_doc is not None:
        layer = random_layer(in_dim, out_dim, layer_seed, heads=int(gat_doc["heads"]),
                             concat=bool(gat_doc.get("concat", True)), **kwargs)
        if wsrc != "random":
            files = wsrc if isinstance(wsrc, list) else [wsrc]
            w = np.stack([read_weights(base / f) for f in files])
            layer = replace(layer, weights=w)
        if "attention" in gat_doc:
            att = np.asarray(gat_doc["attention"], dtype=np.float64)
            layer = replace(layer, gat=GatConfig(layer.gat.heads, att, layer.gat.concat))
    else:
        layer = random_layer(in_dim, out_dim, layer_seed, **kwargs)
        if wsrc != "random":
            layer = replace(layer, weights=read_weights(base / wsrc))
    bn = doc.get("batch_norm")
    if bn is not None:
        layer = replace(layer, batch_norm=(np.asarray(bn["scale"], dtype=np.float64),
                                           np.asarray(bn["shift"], dtype=np.float64)))
    return layer


def model_from_dict(doc: dict, base: str | Path = ".", seed: int = 0) -> GnnModelSpec:
    base = Path(base)
    layers = tuple(_layer_from_dict(l, base, k, seed) for k, l in enumerate(doc["layers"]))
    return GnnModelSpec(doc["family"], layers, doc.get("readout"))


def load_model(path: str | Path, seed: int = 0) -> GnnModelSpec:
    path = Path(path)
    return model_from_dict(json.loads(path.read_text()), path.parent, seed)
