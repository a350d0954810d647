"""
MIRG generation and degree extraction.

Given weights W (n x L) and one LayerSpec per layer, every unordered pair
i <= j (self-loops included) gets, independently,
    A_ijl ~ Poisson(g_l(W_il W_jl / T_l))      on multi-edge layers
    A_ijl ~ Bernoulli(g_l(W_il W_jl / T_l))    on single-edge layers
with T_l = sum_i W_il.

DEGREE CONVENTION: D_il = sum_j A_ijl, so a self-loop adds its multiplicity
ONCE. networkx and most graph libraries count self-loops twice.

generate_naive is the O(n^2 L) reference. generate_fast draws the identity
Poisson multigraph in O(n + m) from alias tables and derives every other
layer from it by thinning, except single-edge cap_one layers which use
sorted-weight skip sampling. It works on row chunks with one derived stream
each, so chunks of every layer can run on a process pool.
"""

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np
import pandas as pd

from app.models.errors import (
    DegenerateWeightsError,
    OutputError,
    ParameterError,
    RangeError,
    ShapeError,
)
from app.services.samplers import AliasTable, RngStream
from app.services.weights import WeightMatrix

logger = logging.getLogger(__name__)


# ============================================
# CONNECTION FUNCTIONS AND LAYERS
# ============================================

class ConnectionFn(Enum):
    """
    g_l with g(x) = c x + O(x^(1 + nu)). For the three bounded variants
    |g(x) - x| <= M x^2 on x < delta with M = delta = nu = 1.
    """

    IDENTITY = "identity"
    CAP_ONE = "cap_one"
    ODDS = "odds"
    EXP_COMPLEMENT = "exp_complement"

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self is ConnectionFn.IDENTITY:
            return x
        if self is ConnectionFn.CAP_ONE:
            return np.minimum(x, 1.0)
        if self is ConnectionFn.ODDS:
            return x / (1.0 + x)
        return -np.expm1(-x)

    def scalar(self, x: float) -> float:
        if self is ConnectionFn.IDENTITY:
            return x
        if self is ConnectionFn.CAP_ONE:
            return min(x, 1.0)
        if self is ConnectionFn.ODDS:
            return x / (1.0 + x)
        return -math.expm1(-x)

    @property
    def c(self) -> float:
        return 1.0

    @property
    def nu(self) -> float:
        return 1.0

    @property
    def M(self) -> float:
        return 0.0 if self is ConnectionFn.IDENTITY else 1.0

    @property
    def delta(self) -> float:
        return math.inf if self is ConnectionFn.IDENTITY else 1.0

    @property
    def bounded(self) -> bool:
        """True when the range lies in [0, 1], i.e. g can drive a single-edge layer."""
        return self is not ConnectionFn.IDENTITY

    def linearization_bound(self, w_i: float, w_max: float, total: float) -> float:
        """
        Bound on |sum_j g(w_i w_j / T) - c w_i|. It only holds while every argument
        stays below delta, i.e. w_i w_max / T < delta; outside that range it is inf.
        """
        if w_i * w_max / total >= self.delta:
            return math.inf
        return self.M * w_i ** (1.0 + self.nu) * (w_max / total) ** self.nu


class LayerKind(Enum):
    MULTI_EDGE = "multi_edge"
    SINGLE_EDGE = "single_edge"


@dataclass(frozen=True)
class LayerSpec:
    kind: LayerKind
    g: ConnectionFn

    def __post_init__(self):
        if self.kind is LayerKind.SINGLE_EDGE and not self.g.bounded:
            raise ParameterError(f"single-edge layers need g with range in [0, 1], got {self.g.value}")

    @classmethod
    def parse(cls, text: str) -> "LayerSpec":
        """Parse 'multi_edge:identity' style strings ('multi'/'single' accepted)."""
        try:
            kind, g = text.strip().split(":")
            kind = {"multi": "multi_edge", "single": "single_edge"}.get(kind, kind)
            return cls(LayerKind(kind), ConnectionFn(g))
        except ValueError as e:
            if isinstance(e, ParameterError):
                raise
            raise ParameterError(f"cannot parse layer spec {text!r}: expected kind:g") from e

    def __str__(self) -> str:
        return f"{self.kind.value}:{self.g.value}"


# ============================================
# GRAPH AND DEGREE CONTAINERS
# ============================================

@dataclass
class LayerEdges:
    """Edge list of one layer: 0-based endpoints i <= j, sorted, unique, multiplicity >= 1."""

    i: np.ndarray
    j: np.ndarray
    mult: np.ndarray

    @classmethod
    def empty(cls) -> "LayerEdges":
        return cls(np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0, np.int64))


@dataclass
class MultilayerGraph:
    n: int
    layers: List[LayerEdges]
    kinds: Optional[List[LayerKind]] = field(default=None, repr=False)

    def __post_init__(self):
        for l, edges in enumerate(self.layers):
            edges.i = np.asarray(edges.i, dtype=np.int64)
            edges.j = np.asarray(edges.j, dtype=np.int64)
            edges.mult = np.asarray(edges.mult, dtype=np.int64)
            if not (edges.i.shape == edges.j.shape == edges.mult.shape):
                raise ShapeError(f"layer {l}: endpoint and multiplicity arrays differ in length")
            if edges.i.size == 0:
                continue
            if edges.i.min() < 0 or edges.j.max() >= self.n or np.any(edges.i > edges.j):
                raise RangeError(f"layer {l}: edges must satisfy 0 <= i <= j < n")
            if edges.mult.min() < 1:
                raise ParameterError(f"layer {l}: multiplicities must be >= 1")
            keys = edges.i * self.n + edges.j
            if np.any(np.diff(keys) <= 0):
                raise ParameterError(f"layer {l}: edges must be sorted by (i, j) without duplicates")
            if self.kinds is not None and self.kinds[l] is LayerKind.SINGLE_EDGE and edges.mult.max() > 1:
                raise ParameterError(f"layer {l}: single-edge layer with multiplicity > 1")

    @property
    def L(self) -> int:
        return len(self.layers)

    def edge_count(self, layer: int) -> int:
        return int(self.layers[layer].mult.sum())

    def to_networkx(self, layer: int) -> nx.MultiGraph:
        """MultiGraph of one layer. Note networkx counts self-loops twice in degree()."""
        graph = nx.MultiGraph()
        graph.add_nodes_from(range(self.n))
        edges = self.layers[layer]
        for i, j, m in zip(edges.i.tolist(), edges.j.tolist(), edges.mult.tolist()):
            graph.add_edges_from([(i, j)] * m)
        return graph


@dataclass
class DegreeMatrix:
    d: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.d)
        if d.ndim != 2:
            raise ShapeError(f"degree matrix must be n x L, got shape {d.shape}")
        if d.size and (np.any(d < 0) or not np.all(np.equal(np.mod(d, 1), 0))):
            raise ParameterError("degrees must be nonnegative integers")
        self.d = d.astype(np.int64)

    @property
    def n(self) -> int:
        return self.d.shape[0]

    @property
    def L(self) -> int:
        return self.d.shape[1]


def layer_masses(w: WeightMatrix) -> np.ndarray:
    """T_l = sum_i W_il for every layer."""
    return w.w.sum(axis=0)


def _check_inputs(w: WeightMatrix, layers: Sequence[LayerSpec]) -> np.ndarray:
    if len(layers) != w.L:
        raise ShapeError(f"got {len(layers)} layer specs for {w.L} weight columns")
    masses = layer_masses(w)
    for l, total in enumerate(masses):
        if not total > 0:
            raise DegenerateWeightsError(f"layer {l + 1} has zero total weight T_l")
    return masses


def _accumulate(i: np.ndarray, j: np.ndarray, n: int) -> LayerEdges:
    """Collapse edge events into sorted unique (i <= j) cells with multiplicities."""
    if i.size == 0:
        return LayerEdges.empty()
    lo = np.minimum(i, j).astype(np.int64)
    hi = np.maximum(i, j).astype(np.int64)
    keys, counts = np.unique(lo * n + hi, return_counts=True)
    return LayerEdges(keys // n, keys % n, counts.astype(np.int64))


# ============================================
# REFERENCE GENERATOR
# ============================================

def generate_naive(w: WeightMatrix, layers: Sequence[LayerSpec], rng: RngStream) -> MultilayerGraph:
    """Draw every pair i <= j of every layer independently. O(n^2 L)."""
    masses = _check_inputs(w, layers)
    n = w.n
    out = []
    for l, spec in enumerate(layers):
        gen = rng.child("layer", l).generator()
        col = w.w[:, l]
        rows, cols, mults = [], [], []
        for i in range(n):
            p = spec.g(col[i] * col[i:] / masses[l])
            if spec.kind is LayerKind.MULTI_EDGE:
                counts = gen.poisson(p)
            else:
                counts = (gen.random(p.size) < p).astype(np.int64)
            hit = np.flatnonzero(counts)
            rows.append(np.full(hit.size, i, dtype=np.int64))
            cols.append(i + hit)
            mults.append(counts[hit])
        out.append(LayerEdges(np.concatenate(rows), np.concatenate(cols), np.concatenate(mults)))
    return MultilayerGraph(n, out, kinds=[spec.kind for spec in layers])


# ============================================
# FAST GENERATOR
# ============================================

# nodes per row chunk of the fast generator
DEFAULT_CHUNK_SIZE = 100_000

_NO_EVENTS = (np.zeros(0, np.int64), np.zeros(0, np.int64))


def _poisson_events(col: np.ndarray, size: int, total: float,
                    gen: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """
    Events of independent Poisson(col_i col_j / T) counts over the cells i <= j
    with i < size. Indices are relative to col, whose first size entries form
    the chunk.

    Inside the chunk, M ~ Poisson(S^2 / 2T) ordered endpoint pairs drawn with
    probabilities col / S give every off-diagonal cell rate col_i col_j / T but
    self-loops only half of col_i^2 / T; the missing half is added per node.
    Cells reaching past the chunk get Poisson(S S' / T) events, one end from the
    chunk and the other by inverse CDF over the rest of the column.
    """
    head, rest = col[:size], col[size:]
    s = float(head.sum())
    if s == 0.0:
        return _NO_EVENTS
    table = AliasTable(head)
    m = int(gen.poisson(s * s / (2.0 * total)))
    ends = table.draw(gen, 2 * m)
    extra = gen.poisson(head * head / (2.0 * total))
    loops = np.repeat(np.arange(size, dtype=np.int64), extra)
    i = [ends[:m], loops]
    j = [ends[m:], loops]

    s_rest = float(rest.sum())
    if s_rest > 0.0:
        m = int(gen.poisson(s * s_rest / total))
        i.append(table.draw(gen, m))
        cum = np.cumsum(rest)
        far = np.searchsorted(cum, gen.random(m) * cum[-1], side="right")
        j.append(size + np.minimum(far, rest.size - 1))

    i = np.concatenate(i).astype(np.int64)
    j = np.concatenate(j).astype(np.int64)
    return np.minimum(i, j), np.maximum(i, j)


def _skip_sample(col: np.ndarray, total: float, g: ConnectionFn, gen: np.random.Generator,
                 lo: int, hi: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Bernoulli(g(x_ij)) over cells i <= j for g <= min(x, 1), by geometric skips
    over partners in decreasing-weight order with the bound min(x, 1). Only rows
    at sorted positions lo..hi-1 are visited.
    """
    order = np.argsort(-col, kind="stable")
    ws = col[order].tolist()
    n = len(ws)
    rows, cols = [], []
    for a in range(lo, min(hi, n)):
        wa = ws[a]
        if wa == 0.0:
            break
        b = a
        p = min(wa * ws[b] / total, 1.0)
        while b < n and p > 0.0:
            if p < 1.0:
                b += int(math.floor(math.log(1.0 - gen.random()) / math.log1p(-p)))
            if b < n:
                x = wa * ws[b] / total
                if gen.random() < g.scalar(x) / p:
                    rows.append(a)
                    cols.append(b)
                p = min(x, 1.0)
                b += 1
    i = order[np.asarray(rows, dtype=np.int64)]
    j = order[np.asarray(cols, dtype=np.int64)]
    return i, j


@dataclass
class _Chunk:
    """
    Rows lo..hi-1 of one layer. col is the layer column from lo onwards, or the
    whole column for skip sampling, where lo and hi are sorted positions.
    """

    layer: int
    spec: LayerSpec
    col: np.ndarray
    total: float
    n: int
    lo: int
    hi: int
    stream: RngStream

    @property
    def skip_sampled(self) -> bool:
        return self.spec.kind is LayerKind.SINGLE_EDGE and self.spec.g is ConnectionFn.CAP_ONE


def _draw_chunk(chunk: _Chunk) -> LayerEdges:
    spec, col, total = chunk.spec, chunk.col, chunk.total
    gen = chunk.stream.generator()
    if chunk.skip_sampled:
        i, j = _skip_sample(col, total, spec.g, gen, chunk.lo, chunk.hi)
        return _accumulate(i, j, chunk.n)

    i, j = _poisson_events(col, chunk.hi - chunk.lo, total, gen)

    if spec.kind is LayerKind.MULTI_EDGE:
        if spec.g is not ConnectionFn.IDENTITY:
            # thinning a Poisson(x) count with retention g(x)/x leaves Poisson(g(x))
            x = col[i] * col[j] / total
            keep = gen.random(x.size) < spec.g(x) / x
            i, j = i[keep], j[keep]
        return _accumulate(i + chunk.lo, j + chunk.lo, chunk.n)

    # single edge: 1{Poisson(x) >= 1} ~ Bernoulli(1 - e^-x), which dominates odds
    edges = _accumulate(i, j, col.size)
    i, j = edges.i, edges.j
    if spec.g is ConnectionFn.ODDS:
        x = col[i] * col[j] / total
        keep = gen.random(x.size) < ConnectionFn.ODDS(x) / ConnectionFn.EXP_COMPLEMENT(x)
        i, j = i[keep], j[keep]
    return LayerEdges(i + chunk.lo, j + chunk.lo, np.ones(i.size, dtype=np.int64))


def _merge(parts: Sequence[LayerEdges], n: int) -> LayerEdges:
    """Chunks own disjoint cells; put them back in (i, j) order."""
    parts = [p for p in parts if p.i.size]
    if not parts:
        return LayerEdges.empty()
    i = np.concatenate([p.i for p in parts])
    j = np.concatenate([p.j for p in parts])
    mult = np.concatenate([p.mult for p in parts])
    order = np.argsort(i * n + j, kind="stable")
    return LayerEdges(i[order], j[order], mult[order])


def generate_fast(w: WeightMatrix, layers: Sequence[LayerSpec], rng: RngStream,
                  workers: int = 1, chunk_size: int = DEFAULT_CHUNK_SIZE) -> MultilayerGraph:
    """
    Same conditional law as generate_naive in expected O(n + m) per layer.

    Every layer is cut into row chunks of chunk_size nodes. Chunk c of layer l
    draws from rng.child("layer", l, "chunk", c) and owns the cells whose smaller
    index it holds, so chunks run in any order on a process pool and the graph
    depends on chunk_size but not on workers.
    """
    masses = _check_inputs(w, layers)
    if chunk_size < 1:
        raise ParameterError(f"chunk_size must be >= 1, got {chunk_size}")
    n = w.n
    chunks = []
    for l, spec in enumerate(layers):
        for c, lo in enumerate(range(0, n, chunk_size)):
            chunk = _Chunk(l, spec, w.w[:, l], float(masses[l]), n, lo, min(lo + chunk_size, n),
                           rng.child("layer", l, "chunk", c))
            if not chunk.skip_sampled:
                chunk.col = w.w[lo:, l]
            chunks.append(chunk)

    if workers <= 1 or len(chunks) <= 1:
        parts = [_draw_chunk(chunk) for chunk in chunks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_draw_chunk, chunks))

    out = []
    for l, spec in enumerate(layers):
        edges = _merge([part for chunk, part in zip(chunks, parts) if chunk.layer == l], n)
        logger.debug(f"Layer {l + 1} ({spec}): {edges.i.size} cells, {int(edges.mult.sum())} edges")
        out.append(edges)
    logger.debug(f"Fast generation: {len(chunks)} chunk(s) on {max(workers, 1)} worker(s)")
    return MultilayerGraph(n, out, kinds=[spec.kind for spec in layers])


def generate(w: WeightMatrix, layers: Sequence[LayerSpec], rng: RngStream, method: str = "fast",
             workers: int = 1, chunk_size: int = DEFAULT_CHUNK_SIZE) -> MultilayerGraph:
    """workers and chunk_size only affect the fast method."""
    if method == "fast":
        return generate_fast(w, layers, rng, workers=workers, chunk_size=chunk_size)
    if method == "naive":
        return generate_naive(w, layers, rng)
    raise ParameterError(f"unknown generation method {method!r}; use fast or naive")


# ============================================
# DEGREES
# ============================================

def degrees(graph: MultilayerGraph) -> DegreeMatrix:
    """D_il = sum_j A_ijl; self-loops counted once."""
    d = np.zeros((graph.n, graph.L), dtype=np.int64)
    for l, edges in enumerate(graph.layers):
        off = edges.i != edges.j
        d[:, l] += np.bincount(edges.i, weights=edges.mult, minlength=graph.n).astype(np.int64)
        d[:, l] += np.bincount(edges.j[off], weights=edges.mult[off], minlength=graph.n).astype(np.int64)
    return DegreeMatrix(d)


def sample_asymptotic_degrees(w: WeightMatrix, c: Sequence[float], rng: RngStream) -> DegreeMatrix:
    """Mixed-Poisson limit law: row i has independent Poisson(c_l w_il) entries."""
    c = np.asarray(c, dtype=float).ravel()
    if c.size != w.L:
        raise ShapeError(f"need one constant per layer: got {c.size} for {w.L} layers")
    if np.any(~(c > 0)):
        raise ParameterError("linearization constants c_l must be > 0")
    return DegreeMatrix(rng.generator().poisson(w.w * c))


def conditional_mean_degree(w: WeightMatrix, layers: Sequence[LayerSpec], i: int) -> np.ndarray:
    """sum_j g_l(w_il w_jl / T_l) for every layer l; i is a 0-based node index."""
    masses = _check_inputs(w, layers)
    if not 0 <= i < w.n:
        raise RangeError(f"node index {i} outside [0, {w.n})")
    return np.array([
        float(np.sum(spec.g(w.w[i, l] * w.w[:, l] / masses[l])))
        for l, spec in enumerate(layers)
    ])


# ============================================
# FILE FORMATS
# ============================================

def edges_frame(graph: MultilayerGraph) -> pd.DataFrame:
    frames = [
        pd.DataFrame({"layer": l + 1, "i": e.i + 1, "j": e.j + 1, "multiplicity": e.mult})
        for l, e in enumerate(graph.layers)
    ]
    if not frames:
        return pd.DataFrame(columns=["layer", "i", "j", "multiplicity"])
    return pd.concat(frames, ignore_index=True)


def write_edge_list(graph: MultilayerGraph, path: str) -> str:
    """TSV lines layer, i, j, multiplicity; 1-based, i <= j, sorted by (layer, i, j)."""
    try:
        edges_frame(graph).to_csv(path, sep="\t", header=False, index=False, lineterminator="\n")
    except OSError as e:
        raise OutputError(f"could not write edge list to {path}: {e}") from e
    logger.info(f"Wrote {sum(graph.edge_count(l) for l in range(graph.L))} edges to {path}")
    return path


def read_edge_list(path: str, n: Optional[int] = None, L: Optional[int] = None) -> MultilayerGraph:
    if not os.path.exists(path):
        raise OutputError(f"edge list not found: {path}")
    try:
        frame = pd.read_csv(path, sep="\t", header=None, names=["layer", "i", "j", "multiplicity"])
    except pd.errors.EmptyDataError:
        frame = pd.DataFrame(columns=["layer", "i", "j", "multiplicity"], dtype=np.int64)

    if n is None:
        n = int(frame[["i", "j"]].to_numpy().max()) if len(frame) else 0
        logger.warning(f"{path}: node count inferred as n={n} from the largest id; "
                       f"isolated nodes above it are lost, pass n to keep them")
    if L is None:
        L = int(frame["layer"].max()) if len(frame) else 1
    frame = frame.sort_values(["layer", "i", "j"])
    layers = []
    for l in range(1, L + 1):
        part = frame[frame["layer"] == l]
        layers.append(LayerEdges(part["i"].to_numpy() - 1, part["j"].to_numpy() - 1,
                                 part["multiplicity"].to_numpy()))
    return MultilayerGraph(n, layers)


def degrees_frame(d: DegreeMatrix) -> pd.DataFrame:
    frame = pd.DataFrame(d.d, columns=[f"d{l + 1}" for l in range(d.L)])
    frame.insert(0, "node", np.arange(1, d.n + 1))
    return frame


def write_degrees_csv(d: DegreeMatrix, path: str) -> str:
    try:
        degrees_frame(d).to_csv(path, index=False, lineterminator="\n")
    except OSError as e:
        raise OutputError(f"could not write degrees to {path}: {e}") from e
    return path


def read_degrees_csv(path: str) -> DegreeMatrix:
    if not os.path.exists(path):
        raise OutputError(f"degree file not found: {path}")
    frame = pd.read_csv(path)
    columns = [c for c in frame.columns if c.startswith("d")]
    if "node" not in frame.columns or not columns:
        raise ShapeError(f"{path}: expected header node,d1,...,dL")
    return DegreeMatrix(frame.sort_values("node")[columns].to_numpy())
