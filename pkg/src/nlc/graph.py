"""Undirected interaction graphs and the matrices derived from them.

Vertices are 0-based in the Python API. Edge-list files, JSON specs and CLI
output use 1-based indices.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Iterable, Mapping

import numpy as np

from .errors import (
    ConnectivityError,
    DisconnectedSampleError,
    IsolatedVertexError,
    SpecError,
)

ER_MAX_RETRIES = 1000

GRAPH_KINDS = ("complete", "line", "complete_bipartite", "erdos_renyi", "edge_list")


@dataclass(frozen=True, eq=False)
class Graph:
    """Simple undirected graph with no isolated vertices.

    ``edges`` holds sorted 0-based pairs ``(i, j)`` with ``i < j``.
    """

    n: int
    edges: tuple[tuple[int, int], ...]
    spec: Mapping[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.n < 1:
            raise SpecError(f"graph needs at least one vertex, got n={self.n}")
        canon = set()
        for i, j in self.edges:
            if i == j:
                raise SpecError(f"self-loop at vertex {i + 1}")
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise SpecError(f"edge ({i + 1}, {j + 1}) out of range for n={self.n}")
            canon.add((min(i, j), max(i, j)))
        object.__setattr__(self, "edges", tuple(sorted(canon)))
        isolated = np.flatnonzero(self.degrees == 0)
        if isolated.size:
            raise IsolatedVertexError(
                "isolated vertices (degree 0): " + ", ".join(str(v + 1) for v in isolated)
            )

    @cached_property
    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.n, self.n))
        if self.edges:
            i, j = np.array(self.edges).T
            a[i, j] = 1.0
            a[j, i] = 1.0
        a.setflags(write=False)
        return a

    @cached_property
    def degrees(self) -> np.ndarray:
        d = np.zeros(self.n, dtype=np.int64)
        for i, j in self.edges:
            d[i] += 1
            d[j] += 1
        d.setflags(write=False)
        return d

    @cached_property
    def neighborhoods(self) -> tuple[frozenset[int], ...]:
        nbrs: list[set[int]] = [set() for _ in range(self.n)]
        for i, j in self.edges:
            nbrs[i].add(j)
            nbrs[j].add(i)
        return tuple(frozenset(s) for s in nbrs)

    @cached_property
    def matrices(self) -> DerivedMatrices:
        return DerivedMatrices.from_graph(self)

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        return self.n == other.n and self.edges == other.edges

    def __hash__(self):
        return hash((self.n, self.edges))

    def __repr__(self):
        kind = self.spec.get("kind", "custom") if self.spec else "custom"
        return f"Graph(kind={kind!r}, n={self.n}, m={len(self.edges)})"


@dataclass(frozen=True)
class DerivedMatrices:
    normalized_adjacency: np.ndarray  # D^-1 A
    laplacian: np.ndarray  # D - A
    degree: np.ndarray  # diagonal D

    @classmethod
    def from_graph(cls, g: Graph) -> DerivedMatrices:
        a = g.adjacency
        d = g.degrees.astype(float)
        w = a / d[:, None]
        lap = np.diag(d) - a
        for m in (w, lap):
            m.setflags(write=False)
        deg = np.diag(d)
        deg.setflags(write=False)
        return cls(normalized_adjacency=w, laplacian=lap, degree=deg)


# -- constructors -----------------------------------------------------------


def complete(n: int) -> Graph:
    _check_n(n)
    edges = tuple((i, j) for i in range(n) for j in range(i + 1, n))
    return Graph(n, edges, spec={"kind": "complete", "n": n})


def line(n: int) -> Graph:
    _check_n(n)
    return Graph(n, tuple((i, i + 1) for i in range(n - 1)), spec={"kind": "line", "n": n})


def complete_bipartite(p: int, q: int) -> Graph:
    if p < 1 or q < 1:
        raise SpecError(f"complete_bipartite needs p, q >= 1, got ({p}, {q})")
    edges = tuple((i, p + j) for i in range(p) for j in range(q))
    return Graph(p + q, edges, spec={"kind": "complete_bipartite", "p": p, "q": q})


def erdos_renyi(n: int, p: float, seed: int | np.random.Generator | None = None,
                max_retries: int = ER_MAX_RETRIES) -> Graph:
    """G(n, p) sample, redrawn until connected.

    Every pair is drawn independently with probability ``p`` from the upper
    triangle in row-major order. Raises :class:`DisconnectedSampleError` once
    ``max_retries`` draws have all been disconnected or had isolated vertices.
    """
    _check_n(n)
    if not 0.0 < p <= 1.0:
        raise SpecError(f"erdos_renyi needs 0 < p <= 1, got {p}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    iu, ju = np.triu_indices(n, k=1)
    spec = {"kind": "erdos_renyi", "n": n, "p": p,
            "seed": None if isinstance(seed, np.random.Generator) else seed}
    for attempt in range(max_retries):
        keep = rng.random(iu.size) < p
        edges = tuple(zip(iu[keep].tolist(), ju[keep].tolist()))
        deg = np.bincount(iu[keep], minlength=n) + np.bincount(ju[keep], minlength=n)
        if np.any(deg == 0):
            continue
        g = Graph(n, edges, spec={**spec, "attempts": attempt + 1})
        if is_connected(g):
            return g
    raise DisconnectedSampleError(
        f"no connected G({n}, {p}) sample in {max_retries} attempts"
    )


def from_edge_list(pairs: Iterable[Iterable[int]], n: int | None = None) -> Graph:
    """Graph from 1-based vertex pairs; ``n`` defaults to the largest index."""
    pairs = [tuple(int(v) for v in pair) for pair in pairs]
    for pair in pairs:
        if len(pair) != 2:
            raise SpecError(f"edge must have two endpoints, got {pair}")
    if n is None:
        n = max((max(pair) for pair in pairs), default=0)
    if any(min(pair) < 1 for pair in pairs):
        raise SpecError("edge-list vertices are 1-based")
    edges = tuple((i - 1, j - 1) for i, j in pairs)
    return Graph(n, edges, spec={"kind": "edge_list", "n": n,
                                 "edges": [list(pair) for pair in pairs]})


def read_edge_list(path: str | Path, n: int | None = None) -> Graph:
    """Parse ``i j`` lines (1-based) with ``#`` comments."""
    pairs = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        text = raw.split("#", 1)[0].strip()
        if not text:
            continue
        parts = text.split()
        if len(parts) != 2:
            raise SpecError(f"{path}:{lineno}: expected 'i j', got {raw!r}")
        try:
            pairs.append((int(parts[0]), int(parts[1])))
        except ValueError as exc:
            raise SpecError(f"{path}:{lineno}: non-integer vertex in {raw!r}") from exc
    return from_edge_list(pairs, n=n)


def write_edge_list(g: Graph, path: str | Path) -> None:
    lines = [f"# n={g.n}"] + [f"{i + 1} {j + 1}" for i, j in g.edges]
    Path(path).write_text("\n".join(lines) + "\n")


def build_graph(spec: Mapping[str, Any]) -> Graph:
    """Build a graph from a JSON-style spec such as ``{"kind": "line", "n": 6}``."""
    if not isinstance(spec, Mapping) or "kind" not in spec:
        raise SpecError(f"graph spec must be an object with a 'kind', got {spec!r}")
    if any(k in spec for k in ("weights", "weight", "weighted")):
        raise SpecError("weighted graphs are not supported")
    kind = spec["kind"]
    try:
        if kind == "complete":
            return complete(int(spec["n"]))
        if kind == "line":
            return line(int(spec["n"]))
        if kind == "complete_bipartite":
            return complete_bipartite(int(spec["p"]), int(spec["q"]))
        if kind == "erdos_renyi":
            return erdos_renyi(int(spec["n"]), float(spec["p"]), spec.get("seed"))
        if kind == "edge_list":
            if "path" in spec:
                return read_edge_list(spec["path"], n=spec.get("n"))
            return from_edge_list(spec["edges"], n=spec.get("n"))
    except KeyError as exc:
        raise SpecError(f"graph spec {kind!r} missing field {exc.args[0]!r}") from exc
    except (TypeError, ValueError) as exc:
        if isinstance(exc, SpecError):
            raise
        raise SpecError(f"malformed graph spec {spec!r}: {exc}") from exc
    raise SpecError(f"unknown graph kind {kind!r}; expected one of {GRAPH_KINDS}")


def _check_n(n):
    if int(n) != n or n < 2:
        raise SpecError(f"need an integer n >= 2, got {n!r}")


# -- structural queries ------------------------------------------------------


def is_connected(g: Graph) -> bool:
    seen = {0}
    queue = deque([0])
    nbrs = g.neighborhoods
    while queue:
        v = queue.popleft()
        for u in nbrs[v]:
            if u not in seen:
                seen.add(u)
                queue.append(u)
    return len(seen) == g.n


def require_connected(g: Graph) -> None:
    if not is_connected(g):
        raise ConnectivityError(f"{g!r} is not connected")


@dataclass(frozen=True)
class EigenSummary:
    eigenvalues: np.ndarray  # of D^-1 A, descending
    unit_count: int
    max_other_modulus: float
    row_sum_deviation: float
    bipartite_boundary: bool
    violations: tuple[str, ...]

    @property
    def ok(self) -> bool:
        return not self.violations


def spectral_check(g: Graph, tol: float = 1e-9) -> EigenSummary:
    """Spectrum of D^-1 A via the symmetric similar matrix D^-1/2 A D^-1/2.

    Checks for a simple unit eigenvalue with every other eigenvalue strictly
    inside the unit disk. An eigenvalue at -1 (bipartite graphs) is reported
    as a violation with ``bipartite_boundary`` set.
    """
    require_connected(g)
    d_isqrt = 1.0 / np.sqrt(g.degrees.astype(float))
    sym = d_isqrt[:, None] * g.adjacency * d_isqrt[None, :]
    mu = np.linalg.eigvalsh(sym)[::-1]
    w = g.matrices.normalized_adjacency
    row_dev = float(np.max(np.abs(w @ np.ones(g.n) - 1.0)))

    unit = np.abs(mu - 1.0) <= tol
    others = np.abs(mu[~unit])
    max_other = float(others.max()) if others.size else 0.0
    boundary = bool(np.any(np.abs(mu + 1.0) <= tol))

    violations = []
    if unit.sum() != 1:
        violations.append(f"eigenvalue 1 has multiplicity {int(unit.sum())}")
    if max_other >= 1.0 - tol:
        msg = f"non-unit eigenvalue with modulus {max_other:.12g}"
        if boundary:
            msg += " (eigenvalue -1: bipartite graph)"
        violations.append(msg)
    if row_dev > tol:
        violations.append(f"row sums deviate from 1 by {row_dev:.3g}")
    return EigenSummary(mu, int(unit.sum()), max_other, row_dev, boundary, tuple(violations))


def symmetric_pairs(g: Graph) -> list[tuple[int, int]]:
    """Pairs ``i < j`` whose neighborhoods coincide, possibly after removing
    each other when they are adjacent."""
    nbrs = g.neighborhoods
    out = []
    for i in range(g.n):
        for j in range(i + 1, g.n):
            ni, nj = nbrs[i], nbrs[j]
            if ni == nj or (i in nj and j in ni and ni - {j} == nj - {i}):
                out.append((i, j))
    return out


def synchrony_groups(pairs: Iterable[tuple[int, int]], n: int) -> list[list[int]]:
    """Connected components of the symmetric-pair relation (singletons dropped)."""
    parent = list(range(n))

    def find(v):
        while parent[v] != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return v

    for i, j in pairs:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)
    groups: dict[int, list[int]] = {}
    for v in range(n):
        groups.setdefault(find(v), []).append(v)
    return [grp for grp in groups.values() if len(grp) > 1]
