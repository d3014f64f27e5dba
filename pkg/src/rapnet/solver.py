"""Belief propagation and Bethe thermodynamics for the RAP model.

Messages live on the edges of the factor graph and are stored as two
``(M, p)`` arrays aligned with ``graph.members``:

* ``var_to_fac[a, k]``  -- cavity magnetisation of variable ``members[a, k]``
  with interaction ``a`` removed, in [-1, 1];
* ``fac_to_var[a, k]``  -- field sent by ``a`` to that variable, bounded by
  ``tanh(beta)`` in absolute value.

Updates are random-sequential over interactions.  The solver keeps the
per-variable total field ``h_i = sum_b atanh(fac_to_var[b -> i])`` and reads
the cavity field as ``h_i - atanh(fac_to_var[a -> i])``, so one sweep costs
O(p M).

Free energies are *physical*: ``F = -ln(Z) / beta``, which makes the
bookkeeping identity ``S = beta * (E - F)`` hold at every temperature.
"""

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from numba import njit

from ._rng import derive_int, derive_rng
from .graph import RapParams, build_rap

__all__ = [
    "SolverConfig",
    "Messages",
    "ThermoObservables",
    "CriticalPoint",
    "BetheDomainError",
    "init_messages",
    "bp_iterate",
    "bethe_free_energy",
    "bethe_energy",
    "entropy",
    "marginals",
    "solve",
    "paramagnetic_observables",
    "sweep_lambda",
    "find_lambda_c",
    "frozen_energy_curve",
]

_ATANH_CLAMP = 1.0 - 1e-15


class BetheDomainError(ArithmeticError):
    """A local partition function of the Bethe expression is not positive."""


class BracketError(ValueError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    beta: float = 1.0
    damping: float = 0.0
    tol: float = 1e-10
    max_iters: int = 10_000
    init_mode: str = "zero"
    amplitude: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if not 0.0 <= self.damping < 1.0:
            raise ValueError(f"damping must lie in [0, 1), got {self.damping}")
        if self.init_mode not in ("zero", "random"):
            raise ValueError(f"init_mode must be 'zero' or 'random', got {self.init_mode!r}")
        if not 0.0 <= self.amplitude < 1.0:
            raise ValueError(f"amplitude must lie in [0, 1), got {self.amplitude}")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


@dataclass
class Messages:
    var_to_fac: np.ndarray
    fac_to_var: np.ndarray

    def copy(self):
        return Messages(self.var_to_fac.copy(), self.fac_to_var.copy())


@dataclass
class ThermoObservables:
    """Per-weight observables; totals are these times ``num_variables``."""

    free_energy: float
    energy: float
    entropy: float
    converged: bool
    iterations: int
    num_variables: int
    marginals: np.ndarray = None


@dataclass(frozen=True)
class CriticalPoint:
    lambda_c: float
    e_c: float
    method: str = "analytic"
    tol: float = 0.0

    def to_json(self):
        return json.dumps(
            {"lambda_c": self.lambda_c, "e_c": self.e_c, "method": self.method, "tol": self.tol},
            indent=2,
            sort_keys=True,
        )


@njit(cache=True)
def _atanh(x):
    if x > _ATANH_CLAMP:
        x = _ATANH_CLAMP
    elif x < -_ATANH_CLAMP:
        x = -_ATANH_CLAMP
    return math.atanh(x)


@njit(cache=True)
def _total_fields(members, mh, n):
    h = np.zeros(n)
    M, p = members.shape
    for a in range(M):
        for k in range(p):
            h[members[a, k]] += _atanh(mh[a, k])
    return h


@njit(cache=True)
def _sweep(members, tb, m, mh, h, order, damping):
    p = members.shape[1]
    delta = 0.0
    for t in range(order.size):
        a = order[t]
        for k in range(p):
            i = members[a, k]
            new = math.tanh(h[i] - _atanh(mh[a, k]))
            new = damping * m[a, k] + (1.0 - damping) * new
            d = abs(new - m[a, k])
            if d > delta:
                delta = d
            m[a, k] = new
        for k in range(p):
            prod = tb[a]
            for l in range(p):
                if l != k:
                    prod *= m[a, l]
            new = damping * mh[a, k] + (1.0 - damping) * prod
            old = mh[a, k]
            d = abs(new - old)
            if d > delta:
                delta = d
            i = members[a, k]
            h[i] += _atanh(new) - _atanh(old)
            mh[a, k] = new
    return delta


def _coupling_tanh(graph, beta):
    return np.tanh(beta * graph.couplings.astype(np.float64))


def _fac_update(graph, m, beta):
    """One application of the interaction-to-variable update on all edges."""
    p = graph.depth
    tb = _coupling_tanh(graph, beta)
    out = np.empty_like(m)
    for k in range(p):
        out[:, k] = tb * np.prod(np.delete(m, k, axis=1), axis=1)
    return out


def init_messages(graph, config):
    shape = (graph.num_interactions, graph.depth)
    if config.init_mode == "zero" or config.amplitude == 0.0:
        return Messages(np.zeros(shape), np.zeros(shape))
    rng = derive_rng(config.seed, "init")
    m = rng.uniform(-config.amplitude, config.amplitude, size=shape)
    return Messages(m, _fac_update(graph, m, config.beta))


def bp_iterate(graph, messages, config):
    """Iterate random-sequential sweeps to a fixed point.

    Returns ``(messages, converged, iterations)``.  The input messages are not
    modified.  Non-convergence is reported, not raised.
    """
    msg = messages.copy()
    M = graph.num_interactions
    if M == 0:
        return msg, True, 0
    members = graph.members
    tb = _coupling_tanh(graph, config.beta)
    rng = derive_rng(config.seed, "schedule")
    converged = False
    it = 0
    while it < config.max_iters:
        it += 1
        h = _total_fields(members, msg.fac_to_var, graph.num_variables)
        order = rng.permutation(M)
        delta = _sweep(members, tb, msg.var_to_fac, msg.fac_to_var, h, order, config.damping)
        if delta < config.tol:
            converged = True
            break
    return msg, converged, it


def _scatter(index, weights, n):
    # bincount returns int64 when weights is empty
    return np.bincount(index, weights=weights, minlength=n).astype(np.float64, copy=False)


def _edge_log_weights(graph, messages):
    """Per-variable ``ln prod_b (1 + mh)`` and ``ln prod_b (1 - mh)``."""
    mh = messages.fac_to_var.ravel()
    if np.any(np.abs(mh) >= 1.0):
        raise BetheDomainError("interaction-to-variable message reached +-1")
    var = graph.members.ravel()
    n = graph.num_variables
    lp = _scatter(var, np.log1p(mh), n)
    lm = _scatter(var, np.log1p(-mh), n)
    return lp, lm


def _log_partition(graph, messages, beta):
    lp, lm = _edge_log_weights(graph, messages)
    var = graph.members.ravel()
    lc = np.full(graph.num_interactions, math.log(math.cosh(beta)))
    ln_zi = _scatter(var, np.repeat(lc, graph.depth), graph.num_variables)
    ln_zi += np.logaddexp(lp, lm)
    c = np.prod(messages.var_to_fac, axis=1)
    za = 1.0 + _coupling_tanh(graph, beta) * c
    if np.any(za <= 0):
        raise BetheDomainError("interaction partition function is not positive")
    ln_za = lc + np.log(za)
    return math.fsum(ln_zi) - (graph.depth - 1) * math.fsum(ln_za)


def bethe_free_energy(graph, messages, beta=1.0):
    """Total Bethe free energy ``-(1/beta) [sum_i ln Z_i - sum_a (|∂a|-1) ln Z_a]``.

    Isolated variables contribute ``Z_i = 2``.  The messages are assumed to
    be a fixed point; nothing checks that.
    """
    return -_log_partition(graph, messages, beta) / beta


def bethe_energy(graph, messages, beta=1.0):
    """Total Bethe energy ``-sum_i dE_i + sum_a (|∂a|-1) dE_a``.

    ``dE_i`` and ``dE_a`` are the beta-derivatives of ``ln Z_i`` and
    ``ln Z_a``; the ratio ``G_i(x) / H_i(x)`` is summed edge by edge so
    no product of cosh factors is ever formed.
    """
    p = graph.depth
    m, mh = messages.var_to_fac, messages.fac_to_var
    J = graph.couplings.astype(np.float64)
    tb = _coupling_tanh(graph, beta)
    lp, lm = _edge_log_weights(graph, messages)
    norm = np.logaddexp(lp, lm)
    w_plus, w_minus = np.exp(lp - norm), np.exp(lm - norm)

    excl = np.empty_like(m)
    for k in range(p):
        excl[:, k] = np.prod(np.delete(m, k, axis=1), axis=1)
    Jb = np.repeat(J, p).reshape(-1, p)
    tbb = np.repeat(tb, p).reshape(-1, p)
    var = graph.members.ravel()
    n = graph.num_variables
    r_plus = Jb * tbb + Jb * (1.0 - tbb**2) * excl / (1.0 + mh)
    r_minus = Jb * tbb - Jb * (1.0 - tbb**2) * excl / (1.0 - mh)
    de_i = w_plus * _scatter(var, r_plus.ravel(), n)
    de_i += w_minus * _scatter(var, r_minus.ravel(), n)

    c = np.prod(m, axis=1)
    de_a = J * (tb + c) / (1.0 + tb * c)
    return -math.fsum(de_i) + (p - 1) * math.fsum(de_a)


def entropy(F, E, beta=1.0):
    """``S = beta (E - F)``; at beta = 1 this is ``-F + E``."""
    return beta * (E - F)


def marginals(graph, messages):
    """Single-site magnetisations ``<w_i>`` from the fixed-point messages."""
    lp, lm = _edge_log_weights(graph, messages)
    return np.tanh(0.5 * (lp - lm))


def solve(graph, config=SolverConfig()):
    """Initialise, iterate, and evaluate per-weight observables."""
    msg, converged, iters = bp_iterate(graph, init_messages(graph, config), config)
    n = graph.num_variables
    F = bethe_free_energy(graph, msg, config.beta)
    E = bethe_energy(graph, msg, config.beta)
    return ThermoObservables(
        free_energy=F / n,
        energy=E / n,
        entropy=entropy(F, E, config.beta) / n,
        converged=converged,
        iterations=iters,
        num_variables=n,
        marginals=marginals(graph, msg),
    )


def paramagnetic_observables(lam, beta=1.0, depth=3):
    """Closed-form per-weight ``(f, e, s)`` at the all-zero fixed point.

    ``-beta f = ln 2 + (lam/p) ln cosh(beta)``, ``e = -(lam/p) tanh(beta)``.
    """
    if lam < 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    ratio = lam / depth
    f = -(math.log(2.0) + ratio * math.log(math.cosh(beta))) / beta
    e = -ratio * math.tanh(beta)
    return f, e, beta * (e - f)


@dataclass(frozen=True)
class InstanceRow:
    lam: float
    sample: int
    f: float
    e: float
    s: float
    converged: bool
    iters: int


@dataclass(frozen=True)
class AggregateRow:
    lam: float
    f_mean: float
    f_stderr: float
    e_mean: float
    e_stderr: float
    s_mean: float
    s_stderr: float
    converged_fraction: float


@dataclass
class SweepResult:
    instances: list
    aggregate: list

    def instance_table(self):
        cols = ["lambda", "sample", "f", "e", "s", "converged", "iters"]
        rows = [[r.lam, r.sample, r.f, r.e, r.s, int(r.converged), r.iters] for r in self.instances]
        return cols, rows

    def aggregate_table(self):
        cols = ["lambda", "e_mean", "e_stderr", "s_mean", "s_stderr"]
        rows = [[r.lam, r.e_mean, r.e_stderr, r.s_mean, r.s_stderr] for r in self.aggregate]
        return cols, rows


def _instance_seed(root_seed, lam, sample):
    # keyed by the lambda value (micro-units) so overlapping grids share instances
    return derive_int(root_seed, "instance", int(round(lam * 1_000_000)), sample)


def _run_instance(task):
    N, depth, lam, sample, config, root_seed = task
    seed = _instance_seed(root_seed, lam, sample)
    graph, _ = build_rap(RapParams.from_lambda(N, depth, lam, seed))
    obs = solve(graph, replace(config, seed=seed))
    return InstanceRow(lam, sample, obs.free_energy, obs.energy, obs.entropy, obs.converged, obs.iterations)


def _stderr(values):
    if len(values) < 2:
        return 0.0
    return float(np.std(values, ddof=1) / math.sqrt(len(values)))


def sweep_lambda(N, lambda_grid, num_samples, solver_config=SolverConfig(), root_seed=0, depth=3, threads=1):
    """Sample-averaged observables on a grid of mean degrees.

    Each ``(lambda, sample)`` instance has ``M = round(lambda * N)`` paths and
    a seed derived from ``root_seed``, so results do not depend on
    ``threads``.
    """
    grid = [float(x) for x in lambda_grid]
    if not grid:
        raise ValueError("lambda grid is empty")
    if num_samples < 1:
        raise ValueError("num_samples must be >= 1")
    tasks = [(N, depth, lam, s, solver_config, root_seed) for lam in grid for s in range(num_samples)]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(_run_instance, tasks, chunksize=1))
    else:
        rows = [_run_instance(t) for t in tasks]

    aggregate = []
    for j, lam in enumerate(grid):
        chunk = rows[j * num_samples:(j + 1) * num_samples]
        f = [r.f for r in chunk]
        e = [r.e for r in chunk]
        s = [r.s for r in chunk]
        aggregate.append(AggregateRow(
            lam,
            float(np.mean(f)), _stderr(f),
            float(np.mean(e)), _stderr(e),
            float(np.mean(s)), _stderr(s),
            sum(r.converged for r in chunk) / len(chunk),
        ))
    return SweepResult(rows, aggregate)


def _bisect(fn, lo, hi, tol):
    s_lo, s_hi = fn(lo), fn(hi)
    if not (s_lo > 0 > s_hi):
        raise BracketError(f"entropy must change sign on [{lo}, {hi}]: s(lo)={s_lo}, s(hi)={s_hi}")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if fn(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def find_lambda_c(
    N=None,
    solver_config=SolverConfig(),
    bracket=(1.0, 10.0),
    bisect_tol=None,
    mode="analytic",
    num_samples=10,
    root_seed=0,
    depth=3,
):
    """Locate the zero-entropy mean degree by bisection.

    ``mode="analytic"`` bisects the paramagnetic closed form;
    ``mode="bp"`` bisects the sample-averaged BP entropy on instances of
    population size ``N``.
    """
    lo, hi = bracket
    beta = solver_config.beta
    if mode == "analytic":
        tol = 1e-13 if bisect_tol is None else bisect_tol
        lam_c = _bisect(lambda lam: paramagnetic_observables(lam, beta, depth)[2], lo, hi, tol)
        return CriticalPoint(lam_c, paramagnetic_observables(lam_c, beta, depth)[1], "analytic", tol)
    if mode != "bp":
        raise ValueError(f"unknown mode {mode!r}")
    if N is None:
        raise ValueError("BP mode needs a population size N")
    tol = 1e-3 if bisect_tol is None else bisect_tol

    def averaged(lam):
        return sweep_lambda(N, [lam], num_samples, solver_config, root_seed, depth).aggregate[0]

    lam_c = _bisect(lambda lam: averaged(lam).s_mean, lo, hi, tol)
    return CriticalPoint(lam_c, averaged(lam_c).e_mean, "bp", tol)


def frozen_energy_curve(lambda_grid, critical, beta=1.0, depth=3):
    """Energy per weight under the frozen ansatz: paramagnetic below
    ``lambda_c``, pinned at ``e_c`` from there on."""
    out = []
    for lam in lambda_grid:
        lam = float(lam)
        e = critical.e_c if lam >= critical.lambda_c else paramagnetic_observables(lam, beta, depth)[1]
        out.append((lam, e))
    return out
