"""Exhaustive enumeration of the RAP Boltzmann measure on small instances.

Configurations are visited in Gray-code order, so each step flips one
weight and updates the energy in O(degree).  Energies are integers in
[-M, M]; the walk only accumulates the density of states and, per energy
level, the summed configuration.  All Boltzmann sums are formed afterwards
in log space from these exact integer tables.
"""

import math
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.special import logsumexp

from ._rng import derive_rng
from .graph import RapParams, build_rap, is_acyclic
from .solver import SolverConfig, bethe_energy, bethe_free_energy, bp_iterate, init_messages, marginals

__all__ = [
    "ExactResult",
    "DiscrepancyReport",
    "MAX_VARIABLES",
    "exact_enumerate",
    "compare_bp_exact",
    "oracle_suite",
]

MAX_VARIABLES = 24


class EnumerationTooLarge(ValueError):
    pass


@dataclass
class ExactResult:
    log_Z: float
    energy: float
    entropy: float
    marginals: np.ndarray
    ground_energy: int
    free_energy: float = math.nan


@njit(cache=True)
def _gray_walk(n, M, indptr, adj, couplings):
    counts = np.zeros(2 * M + 1, dtype=np.int64)
    wsums = np.zeros((2 * M + 1, n), dtype=np.int64)
    w = np.ones(n, dtype=np.int64)
    terms = couplings.astype(np.int64).copy()
    H = 0
    for a in range(M):
        H -= terms[a]
    counts[H + M] += 1
    for j in range(n):
        wsums[H + M, j] += 1
    total = np.int64(1) << n
    for g in range(1, total):
        # index of the lowest set bit of g is the variable to flip
        i = 0
        x = g
        while (x & 1) == 0:
            x >>= 1
            i += 1
        dH = 0
        for e in range(indptr[i], indptr[i + 1]):
            a = adj[e]
            dH += 2 * terms[a]
            terms[a] = -terms[a]
        H += dH
        w[i] = -w[i]
        counts[H + M] += 1
        for j in range(n):
            wsums[H + M, j] += w[j]
    return counts, wsums


def exact_enumerate(graph, beta=1.0):
    """Exact ``log Z``, mean energy, entropy, marginals and ground energy."""
    n, M = graph.num_variables, graph.num_interactions
    if n > MAX_VARIABLES:
        raise EnumerationTooLarge(f"{n} variables exceeds the enumeration limit of {MAX_VARIABLES}")
    indptr, edges = graph.variable_adjacency
    adj = (edges // graph.depth).astype(np.int64)
    counts, wsums = _gray_walk(n, M, indptr.astype(np.int64), adj, graph.couplings)

    levels = np.nonzero(counts)[0]
    E = (levels - M).astype(np.float64)
    g = counts[levels].astype(np.float64)
    logw = np.log(g) - beta * E
    log_Z = float(logsumexp(logw))
    p = np.exp(logw - log_Z)
    energy = float(np.dot(p, E))
    mags = np.zeros(n)
    for j in range(n):
        b = wsums[levels, j].astype(np.float64)
        if np.any(b):
            # per-level sums of w_j can be negative; keep the sign separately
            lse, sign = logsumexp(-beta * E, b=b, return_sign=True)
            mags[j] = sign * math.exp(lse - log_Z)
    return ExactResult(
        log_Z=log_Z,
        energy=energy,
        entropy=log_Z + beta * energy,
        marginals=mags,
        ground_energy=int(levels[0] - M),
        free_energy=-log_Z / beta,
    )


@dataclass
class DiscrepancyReport:
    acyclic: bool
    converged: bool
    rows: list

    @property
    def max_abs(self):
        return max((r[3] for r in self.rows), default=0.0)

    def as_dict(self):
        out = {"acyclic": self.acyclic, "converged": self.converged}
        out.update((q, d) for q, _, _, d in self.rows)
        return out


def compare_bp_exact(graph, solver_config=SolverConfig()):
    """Run BP and enumeration on the same instance.

    Rows are ``(quantity, bp, exact, abs_diff)`` for the total free energy,
    total energy and the largest single-site marginal discrepancy.  BP is
    exact only on forests; on loopy instances the numbers are a report.
    """
    beta = solver_config.beta
    exact = exact_enumerate(graph, beta)
    msg, converged, _ = bp_iterate(graph, init_messages(graph, solver_config), solver_config)
    F = bethe_free_energy(graph, msg, beta)
    E = bethe_energy(graph, msg, beta)
    m_bp = marginals(graph, msg)
    dm = np.abs(m_bp - exact.marginals)
    j = int(np.argmax(dm)) if dm.size else 0
    rows = [
        ("free_energy", F, exact.free_energy, abs(F - exact.free_energy)),
        ("energy", E, exact.energy, abs(E - exact.energy)),
        ("max_marginal", float(m_bp[j]) if dm.size else 0.0,
         float(exact.marginals[j]) if dm.size else 0.0, float(dm.max()) if dm.size else 0.0),
    ]
    for _, a, b, d in rows:
        if not (math.isfinite(a) and math.isfinite(b) and math.isfinite(d)):
            raise ArithmeticError("non-finite value in BP/exact comparison")
    return DiscrepancyReport(is_acyclic(graph), converged, rows)


def oracle_suite(num_acyclic=50, num_loopy=20, max_vars=20, seed=0):
    """Seeded small instances for BP-versus-enumeration checks.

    Depths alternate between 2 and 3.  Forests come from rejection sampling
    with ``1 <= M < N``; loopy instances use ``M = 2N`` (mean degree 2) and
    are resampled until they contain a cycle.
    """
    if max_vars > MAX_VARIABLES:
        raise EnumerationTooLarge(f"max_vars={max_vars} exceeds the enumeration limit of {MAX_VARIABLES}")
    out = []
    for kind, count in (("acyclic", num_acyclic), ("loopy", num_loopy)):
        for j in range(count):
            depth = 2 + j % 2
            N = max(2, max_vars // depth)
            rng = derive_rng(seed, "oracle-suite", kind, j)
            for _ in range(10_000):
                M = int(rng.integers(1, N)) if kind == "acyclic" else 2 * N
                graph, _ = build_rap(RapParams(N, depth, M, int(rng.integers(0, 2**63))))
                if is_acyclic(graph) == (kind == "acyclic"):
                    out.append(graph)
                    break
            else:
                raise RuntimeError(f"could not sample a {kind} instance with N={N}, p={depth}")
    return out
