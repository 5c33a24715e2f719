"""Undirected host networks: construction, adjacency queries, edge-list I/O."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import IndexOutOfRange, InvalidProbability, SelfLoop


@dataclass(frozen=True)
class Network:
    """Immutable undirected graph over hosts 0..n-1.

    Edges are stored canonically as (min, max) pairs; the adjacency matrix is
    a dense symmetric 0-1 array with zero diagonal.
    """

    n: int
    edges: tuple
    adjacency: np.ndarray = field(repr=False)
    degrees: np.ndarray = field(repr=False)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def neighbors(self, i: int) -> np.ndarray:
        return np.nonzero(self.adjacency[i])[0]

    def csr(self):
        """Adjacency in CSR form (indptr, indices), int32, for the kernels."""
        indptr = np.zeros(self.n + 1, dtype=np.int32)
        indptr[1:] = np.cumsum(self.degrees).astype(np.int32)
        indices = np.concatenate(
            [np.nonzero(self.adjacency[i])[0] for i in range(self.n)]
        ).astype(np.int32) if self.n_edges else np.zeros(0, dtype=np.int32)
        return indptr, indices


def from_edge_list(n: int, pairs) -> Network:
    """Build a Network from unordered host pairs, deduplicating symmetric entries."""
    if n < 1:
        raise ValueError("need at least one host")
    canonical = set()
    for i, j in pairs:
        i, j = int(i), int(j)
        if not (0 <= i < n and 0 <= j < n):
            raise IndexOutOfRange(f"edge ({i},{j}) outside [0,{n})")
        if i == j:
            raise SelfLoop(f"edge ({i},{i})")
        canonical.add((min(i, j), max(i, j)))
    edges = tuple(sorted(canonical))
    adjacency = np.zeros((n, n))
    for i, j in edges:
        adjacency[i, j] = adjacency[j, i] = 1.0
    degrees = adjacency.sum(axis=1).astype(np.int64)
    return Network(n=n, edges=edges, adjacency=adjacency, degrees=degrees)


def erdos_renyi(n: int, p: float, seed: int) -> Network:
    """G(n, p) sample, reproducible for a fixed seed.

    Each unordered pair is included independently with probability p; the
    draw order is the upper triangle row by row.
    """
    if not 0.0 <= p <= 1.0:
        raise InvalidProbability(f"edge probability {p} outside [0,1]")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    draws = rng.random((n, n))
    iu = np.triu_indices(n, 1)
    keep = draws[iu] < p
    pairs = [(int(i), int(j)) for i, j, k in zip(iu[0], iu[1], keep) if k]
    return from_edge_list(n, pairs)


def save_edge_list(net: Network, path) -> None:
    """Text format: first line "n m", then one "i j" line per edge."""
    with open(path, "w", newline="\n") as fh:
        fh.write(f"{net.n} {net.n_edges}\n")
        for i, j in net.edges:
            fh.write(f"{i} {j}\n")


def load_edge_list(path) -> Network:
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ValueError(f"{path}: expected 'n m' header")
        n, m = int(header[0]), int(header[1])
        pairs = []
        for line in fh:
            if line.strip():
                i, j = line.split()
                pairs.append((int(i), int(j)))
    if len(pairs) != m:
        raise ValueError(f"{path}: header promises {m} edges, found {len(pairs)}")
    return from_edge_list(n, pairs)
