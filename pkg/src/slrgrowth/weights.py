"""
Row-standardized binary contiguity weights and Moran's I.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import sparse, stats

__all__ = [
    "ContiguityWeights",
    "IsolatedUnitError",
    "MoranResult",
    "build_weights",
    "spatial_lag",
    "morans_i",
    "read_pairs",
]


class IsolatedUnitError(ValueError):
    """A unit has no neighbors after island repair."""


@dataclass(frozen=True, eq=False)
class ContiguityWeights:
    """Row-standardized contiguity operator over a fixed ordering of ids.

    The binary structure ``A`` is symmetric; the standardized operator is
    ``W = D^-1 A`` with ``D`` the degree matrix, so ``W`` itself is not
    symmetric in general. Its eigenvalues are nevertheless real because
    ``W`` is similar to ``D^-1/2 A D^-1/2``.

    Attributes
    ----------
    ids : tuple of str
        Unit labels in matrix order.
    neighbors : tuple of ndarray
        Sorted neighbor indices per row.
    island_links : frozenset of (str, str)
        Undirected links added by island repair.
    """

    ids: tuple[str, ...]
    neighbors: tuple[np.ndarray, ...]
    island_links: frozenset = field(default_factory=frozenset)

    @property
    def n(self) -> int:
        return len(self.ids)

    @cached_property
    def index(self) -> dict[str, int]:
        return {fid: i for i, fid in enumerate(self.ids)}

    @cached_property
    def degree(self) -> np.ndarray:
        return np.array([len(nb) for nb in self.neighbors], dtype=float)

    @cached_property
    def binary(self) -> sparse.csr_matrix:
        rows = np.repeat(np.arange(self.n), self.degree.astype(int))
        cols = np.concatenate(self.neighbors) if self.n else np.array([], dtype=int)
        data = np.ones(rows.size)
        return sparse.csr_matrix((data, (rows, cols)), shape=(self.n, self.n))

    @cached_property
    def sparse(self) -> sparse.csr_matrix:
        """Row-standardized ``W`` in CSR form."""
        return sparse.diags(1.0 / self.degree) @ self.binary

    @property
    def values(self) -> tuple[np.ndarray, ...]:
        """Per-row standardized weights aligned with :attr:`neighbors`."""
        return tuple(np.full(len(nb), 1.0 / len(nb)) for nb in self.neighbors)

    @property
    def s0(self) -> float:
        return float(self.sparse.sum())

    def dense(self) -> np.ndarray:
        return self.sparse.toarray()

    def lag(self, x: np.ndarray) -> np.ndarray:
        return spatial_lag(self, x)

    @cached_property
    def eigenvalues(self) -> np.ndarray:
        """Real spectrum of ``W``, ascending.

        Computed once per operator from the symmetric similar matrix and
        shared read-only by every fit that uses this ``W``.
        """
        dinv = 1.0 / np.sqrt(self.degree)
        sym = (sparse.diags(dinv) @ self.binary @ sparse.diags(dinv)).toarray()
        return np.linalg.eigvalsh(sym)

    def subset(self, ids: Iterable[str], drop_isolated: bool = False) -> "ContiguityWeights":
        """Operator restricted to ``ids`` (in the order given).

        Units left without neighbors raise :class:`IsolatedUnitError`, or are
        removed iteratively when ``drop_isolated`` is true.
        """
        keep = list(ids)
        while True:
            pos = {fid: i for i, fid in enumerate(keep)}
            nbrs = []
            for fid in keep:
                old = self.neighbors[self.index[fid]]
                nb = sorted(pos[self.ids[j]] for j in old if self.ids[j] in pos)
                nbrs.append(np.array(nb, dtype=int))
            lonely = [keep[i] for i, nb in enumerate(nbrs) if nb.size == 0]
            if not lonely:
                break
            if not drop_isolated:
                raise IsolatedUnitError(f"units without neighbors: {', '.join(lonely[:10])}")
            gone = set(lonely)
            keep = [fid for fid in keep if fid not in gone]
        kept = set(keep)
        links = frozenset(p for p in self.island_links if p[0] in kept and p[1] in kept)
        return ContiguityWeights(ids=tuple(keep), neighbors=tuple(nbrs), island_links=links)


def build_weights(
    ids: Sequence[str],
    adjacency: Iterable[tuple[str, str]],
    island_links: Iterable[tuple[str, str]] = (),
) -> ContiguityWeights:
    """Build the symmetric binary contiguity structure, then row-standardize.

    Parameters
    ----------
    ids : sequence of str
        Units in the desired matrix order.
    adjacency : iterable of (a, b)
        Undirected common-border pairs. Duplicates are harmless.
    island_links : iterable of (a, b)
        Extra undirected links joining island units to the coastal units
        around them.

    Raises
    ------
    KeyError
        A pair references an unknown id.
    ValueError
        A pair links a unit to itself.
    IsolatedUnitError
        Some unit has no neighbors after island repair.
    """
    ids = tuple(ids)
    index = {fid: i for i, fid in enumerate(ids)}
    if len(index) != len(ids):
        raise ValueError("duplicate ids")
    adj: list[set[int]] = [set() for _ in ids]
    links = set()

    def add(a: str, b: str) -> None:
        if a not in index or b not in index:
            missing = a if a not in index else b
            raise KeyError(f"unknown unit id {missing!r}")
        if a == b:
            raise ValueError(f"self-neighbor pair for {a!r}")
        i, j = index[a], index[b]
        adj[i].add(j)
        adj[j].add(i)

    for a, b in adjacency:
        add(a, b)
    for a, b in island_links:
        add(a, b)
        links.add((a, b) if a < b else (b, a))

    lonely = [ids[i] for i, nb in enumerate(adj) if not nb]
    if lonely:
        raise IsolatedUnitError(f"units without neighbors: {', '.join(lonely[:10])}")
    return ContiguityWeights(
        ids=ids,
        neighbors=tuple(np.array(sorted(nb), dtype=int) for nb in adj),
        island_links=frozenset(links),
    )


def read_pairs(path: str | Path) -> list[tuple[str, str]]:
    """Read an undirected ``fips_a,fips_b`` pair list."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if not {"fips_a", "fips_b"} <= set(reader.fieldnames or []):
            raise ValueError(f"{path}: expected columns fips_a,fips_b")
        return [(r["fips_a"].strip(), r["fips_b"].strip()) for r in reader]


def spatial_lag(W: ContiguityWeights, x) -> np.ndarray:
    """``W @ x`` for a vector or an ``n x k`` matrix."""
    x = np.asarray(x, dtype=float)
    if x.shape[0] != W.n:
        raise ValueError(f"dimension mismatch: W is {W.n}x{W.n}, x has {x.shape[0]} rows")
    return W.sparse @ x


@dataclass(frozen=True)
class MoranResult:
    I: float
    expected: float
    variance: float
    z: float
    p: float


def morans_i(x, W: ContiguityWeights) -> MoranResult:
    """Moran's I with a normal approximation under randomization.

    ``I = (n / S0) z'Wz / z'z`` for deviations ``z`` from the mean. The mean
    and variance of ``I`` are the exact permutation moments (Cliff and Ord),
    and the p-value is two-sided. Below four units the randomization
    variance is undefined; the statistic is still returned, with ``nan``
    variance, z and p.
    """
    x = np.asarray(x, dtype=float)
    n = W.n
    if x.shape != (n,):
        raise ValueError(f"dimension mismatch: expected ({n},), got {x.shape}")
    if n < 2:
        raise ValueError("Moran's I needs at least two units")
    z = x - x.mean()
    zz = z @ z
    if zz <= 1e-14 * max(1.0, float(np.abs(x).max()) ** 2) * n:
        raise ValueError("Moran's I is undefined for a constant vector")

    Ws = W.sparse
    s0 = Ws.sum()
    stat = (n / s0) * (z @ (Ws @ z)) / zz

    sym = Ws + Ws.T
    s1 = 0.5 * sym.multiply(sym).sum()
    s2 = float(np.sum((np.asarray(Ws.sum(axis=1)).ravel() + np.asarray(Ws.sum(axis=0)).ravel()) ** 2))
    b2 = n * np.sum(z**4) / zz**2
    ei = -1.0 / (n - 1)
    if n < 4:
        nan = float("nan")
        return MoranResult(I=float(stat), expected=ei, variance=nan, z=nan, p=nan)
    num = n * ((n * n - 3 * n + 3) * s1 - n * s2 + 3 * s0**2) - b2 * (
        (n * n - n) * s1 - 2 * n * s2 + 6 * s0**2
    )
    vi = num / ((n - 1) * (n - 2) * (n - 3) * s0**2) - ei**2
    zval = (stat - ei) / np.sqrt(vi)
    p = 2.0 * stats.norm.sf(abs(zval))
    return MoranResult(I=float(stat), expected=ei, variance=float(vi), z=float(zval), p=float(p))
