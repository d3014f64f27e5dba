"""Random active path instances as sparse factor graphs.

An instance has ``p`` populations of ``N`` binary weights.  Variable ``j`` of
population ``k`` carries the global index ``k * N + j``.  Each of the ``M``
interactions picks one variable per population uniformly at random and gets
the coupling ``J_a = prod_i w0_i`` of a hidden planted configuration ``w0``,
so the planted configuration reaches the minimal energy ``-M``.
"""

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property

import numpy as np
from scipy import sparse, stats
from scipy.sparse.csgraph import connected_components

from ._rng import derive_rng

__all__ = [
    "RapParams",
    "FactorGraph",
    "DegreeStats",
    "build_rap",
    "hamiltonian",
    "degree_histogram",
    "poisson_pmf",
    "poisson_goodness_of_fit",
    "lambda_from_dropconnect",
    "dropconnect_from_lambda",
    "is_acyclic",
    "dump_graph",
    "load_graph",
    "write_degree_csv",
]


class GraphFormatError(ValueError):
    pass


@dataclass(frozen=True)
class RapParams:
    population_size: int
    depth: int
    num_paths: int
    seed: int = 0

    def __post_init__(self):
        if self.population_size < 1:
            raise ValueError(f"population_size must be >= 1, got {self.population_size}")
        if self.depth < 2:
            raise ValueError(f"depth must be >= 2, got {self.depth}")
        if self.num_paths < 0:
            raise ValueError(f"num_paths must be >= 0, got {self.num_paths}")
        if not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must fit in 64 unsigned bits, got {self.seed}")

    @property
    def mean_degree(self):
        return self.num_paths / self.population_size

    @classmethod
    def from_lambda(cls, population_size, depth, lam, seed=0):
        """Parameters with ``M = round(lam * N)`` interactions."""
        if lam < 0 or not math.isfinite(lam):
            raise ValueError(f"mean degree must be finite and >= 0, got {lam}")
        return cls(population_size, depth, int(round(lam * population_size)), seed)


@dataclass(frozen=True, eq=False)
class FactorGraph:
    """Immutable RAP factor graph.

    ``members[a, k]`` is the global index of the population-``k`` variable of
    interaction ``a``; ``couplings[a]`` is ``J_a`` in {-1, +1}.
    """

    population_size: int
    depth: int
    members: np.ndarray
    couplings: np.ndarray
    seed: int = 0

    def __post_init__(self):
        members = np.ascontiguousarray(self.members, dtype=np.int64).reshape(-1, self.depth)
        couplings = np.ascontiguousarray(self.couplings, dtype=np.int8).reshape(-1)
        if members.shape[0] != couplings.shape[0]:
            raise ValueError("members and couplings disagree on the number of interactions")
        if couplings.size and not np.all(np.abs(couplings) == 1):
            raise ValueError("couplings must be +1 or -1")
        lo = np.arange(self.depth) * self.population_size
        if members.size and (np.any(members < lo) or np.any(members >= lo + self.population_size)):
            raise ValueError("every interaction must touch exactly one variable per population")
        members.setflags(write=False)
        couplings.setflags(write=False)
        object.__setattr__(self, "members", members)
        object.__setattr__(self, "couplings", couplings)

    @property
    def num_variables(self):
        return self.depth * self.population_size

    @property
    def num_interactions(self):
        return self.members.shape[0]

    @cached_property
    def degrees(self):
        d = np.bincount(self.members.ravel(), minlength=self.num_variables)
        d.setflags(write=False)
        return d

    @cached_property
    def variable_adjacency(self):
        """CSR view ``(indptr, edges)`` of the flat edge ids ``a * p + k`` around each variable."""
        flat = self.members.ravel()
        edges = np.argsort(flat, kind="stable").astype(np.int64)
        indptr = np.zeros(self.num_variables + 1, dtype=np.int64)
        np.cumsum(self.degrees, out=indptr[1:])
        edges.setflags(write=False)
        indptr.setflags(write=False)
        return indptr, edges

    def neighbors(self, i):
        """Interaction indices ``∂i`` of variable ``i`` (with multiplicity)."""
        indptr, edges = self.variable_adjacency
        return edges[indptr[i]:indptr[i + 1]] // self.depth

    def __eq__(self, other):
        if not isinstance(other, FactorGraph):
            return NotImplemented
        return (
            self.population_size == other.population_size
            and self.depth == other.depth
            and self.seed == other.seed
            and np.array_equal(self.members, other.members)
            and np.array_equal(self.couplings, other.couplings)
        )

    __hash__ = None


def build_rap(params):
    """Sample a RAP instance; returns ``(graph, planted)``.

    ``planted`` is an int8 array of +-1 over all ``p * N`` variables.  The
    planted configuration and the path choices use separate derived streams,
    so the same seed with a larger ``M`` keeps ``w0`` fixed.
    """
    N, p, M = params.population_size, params.depth, params.num_paths
    planted = derive_rng(params.seed, "planted").integers(0, 2, size=p * N, dtype=np.int8)
    planted = (2 * planted - 1).astype(np.int8)
    picks = derive_rng(params.seed, "paths").integers(0, N, size=(M, p), dtype=np.int64)
    members = picks + np.arange(p, dtype=np.int64) * N
    couplings = np.prod(planted[members], axis=1, dtype=np.int64).astype(np.int8)
    return FactorGraph(N, p, members, couplings, params.seed), planted


def hamiltonian(graph, config):
    """Energy ``-sum_a J_a prod_{i in ∂a} w_i`` as an exact int."""
    w = np.asarray(config)
    if w.shape != (graph.num_variables,):
        raise ValueError(f"config must assign all {graph.num_variables} variables, got shape {w.shape}")
    if not np.all(np.abs(w) == 1):
        raise ValueError("config entries must be +1 or -1")
    if graph.num_interactions == 0:
        return 0
    terms = graph.couplings.astype(np.int64) * np.prod(w[graph.members].astype(np.int64), axis=1)
    return -int(terms.sum())


@dataclass
class DegreeStats:
    histogram: dict
    mean_degree: Fraction
    population_split: np.ndarray
    num_variables: int = 0

    def counts(self, kmax=None):
        kmax = max(self.histogram) if kmax is None else kmax
        return np.array([self.histogram.get(k, 0) for k in range(kmax + 1)])

    def total_variation(self, lam=None):
        """TV distance between the empirical degree law and Poisson(lam)."""
        lam = float(self.mean_degree) if lam is None else lam
        kmax = max(max(self.histogram), int(lam + 20 * math.sqrt(lam + 1) + 20))
        emp = self.counts(kmax) / self.num_variables
        pmf = np.array([poisson_pmf(lam, k) for k in range(kmax + 1)])
        return 0.5 * (np.abs(emp - pmf).sum() + max(0.0, 1.0 - pmf.sum()))


def degree_histogram(graph):
    degrees = graph.degrees
    ks, counts = np.unique(degrees, return_counts=True)
    split = degrees.reshape(graph.depth, graph.population_size).mean(axis=1)
    return DegreeStats(
        histogram={int(k): int(c) for k, c in zip(ks, counts)},
        mean_degree=Fraction(graph.depth * graph.num_interactions, graph.num_variables),
        population_split=split,
        num_variables=graph.num_variables,
    )


def poisson_pmf(lam, k):
    """``exp(-lam) lam**k / k!`` evaluated in log space."""
    if lam < 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    if k < 0:
        return 0.0
    if lam == 0:
        return 1.0 if k == 0 else 0.0
    return math.exp(-lam + k * math.log(lam) - math.lgamma(k + 1))


def poisson_goodness_of_fit(stats_, lam, min_expected=5.0):
    """Pearson chi-square test of a degree histogram against Poisson(lam).

    Tail bins are merged until every bin expects at least ``min_expected``
    counts.  Returns ``(chi2, dof, p_value)``; the mean is not fitted, so
    ``dof = bins - 1``.
    """
    n = stats_.num_variables
    kmax = max(max(stats_.histogram), int(lam * 4 + 20))
    observed = stats_.counts(kmax).astype(float)
    expected = n * np.array([poisson_pmf(lam, k) for k in range(kmax + 1)])
    expected[-1] += n - expected.sum()

    obs_bins, exp_bins = [], []
    o_acc = e_acc = 0.0
    for o, e in zip(observed, expected):
        o_acc += o
        e_acc += e
        if e_acc >= min_expected:
            obs_bins.append(o_acc)
            exp_bins.append(e_acc)
            o_acc = e_acc = 0.0
    if e_acc > 0 or o_acc > 0:
        obs_bins[-1] += o_acc
        exp_bins[-1] += e_acc
    obs_bins, exp_bins = np.array(obs_bins), np.array(exp_bins)
    chi2 = float(((obs_bins - exp_bins) ** 2 / exp_bins).sum())
    dof = len(obs_bins) - 1
    return chi2, dof, float(stats.chi2.sf(chi2, dof))


def lambda_from_dropconnect(p_dc, N, depth=3):
    """Mean degree ``N * p_dc**depth`` for keep probability ``p_dc``.

    With ``depth`` populations on layers of equal width, a path survives with
    probability ``p_dc**depth``; the three-population case gives
    ``lam = N p_dc^3``.
    """
    if not 0.0 <= p_dc <= 1.0:
        raise ValueError(f"p_dc must lie in [0, 1], got {p_dc}")
    return N * p_dc**depth


def dropconnect_from_lambda(lam, N, depth=3):
    """Inverse of :func:`lambda_from_dropconnect`: ``(lam / N) ** (1 / depth)``."""
    if lam < 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    if lam > N:
        raise ValueError(f"lambda={lam} exceeds N={N}; keep probability would exceed 1")
    return (lam / N) ** (1.0 / depth)


def is_acyclic(graph):
    """True when the bipartite variable/interaction graph is a forest."""
    n, m, p = graph.num_variables, graph.num_interactions, graph.depth
    if m == 0:
        return True
    rows = graph.members.ravel()
    cols = n + np.repeat(np.arange(m), p)
    adj = sparse.coo_matrix((np.ones(rows.size), (rows, cols)), shape=(n + m, n + m))
    ncomp, _ = connected_components(adj, directed=False)
    return rows.size == (n + m) - ncomp


def dump_graph(graph, path):
    """Write the line format ``RAP v1 N p M seed`` / ``a J i_1 .. i_p``."""
    lines = [f"RAP v1 {graph.population_size} {graph.depth} {graph.num_interactions} {graph.seed}"]
    for a, (J, row) in enumerate(zip(graph.couplings, graph.members)):
        lines.append(f"{a} {int(J)} " + " ".join(str(int(i)) for i in row))
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_graph(path):
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 6 or header[:2] != ["RAP", "v1"]:
            raise GraphFormatError(f"bad header in {path!r}: {' '.join(header)!r}")
        N, p, M, seed = (int(x) for x in header[2:])
        members = np.empty((M, p), dtype=np.int64)
        couplings = np.empty(M, dtype=np.int8)
        count = 0
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if len(parts) != p + 2:
                raise GraphFormatError(f"interaction line has {len(parts)} fields, expected {p + 2}")
            a = int(parts[0])
            if a != count or a >= M:
                raise GraphFormatError(f"interaction index {a} out of order")
            couplings[a] = int(parts[1])
            members[a] = [int(x) for x in parts[2:]]
            count += 1
    if count != M:
        raise GraphFormatError(f"expected {M} interactions, found {count}")
    return FactorGraph(N, p, members, couplings, seed)


def write_degree_csv(stats_, path, lam=None):
    """CSV with columns ``k,count,poisson_pmf``."""
    lam = float(stats_.mean_degree) if lam is None else lam
    with open(path, "w", newline="\n") as fh:
        fh.write("k,count,poisson_pmf\n")
        for k in range(max(stats_.histogram) + 1):
            fh.write(f"{k},{stats_.histogram.get(k, 0)},{poisson_pmf(lam, k)!r}\n")
