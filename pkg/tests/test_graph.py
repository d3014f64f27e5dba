import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rapnet.graph import (
    FactorGraph,
    GraphFormatError,
    RapParams,
    build_rap,
    degree_histogram,
    dropconnect_from_lambda,
    dump_graph,
    hamiltonian,
    is_acyclic,
    lambda_from_dropconnect,
    load_graph,
    poisson_goodness_of_fit,
    poisson_pmf,
    write_degree_csv,
)

# mpmath, 30 digits
EXP_MINUS_ONE = 0.367879441171442321595523770161
EXP_MINUS_6336 = 0.00177137357903762547731983088787
PDC_6336_2000 = 0.146868409240999253709488309897


class TestParams:
    @pytest.mark.parametrize("args", [(0, 3, 1), (5, 1, 1), (5, 3, -1)])
    def test_invalid(self, args):
        with pytest.raises(ValueError):
            RapParams(*args)

    def test_from_lambda_rounds(self):
        assert RapParams.from_lambda(2000, 3, 6.336).num_paths == 12672
        assert RapParams.from_lambda(2000, 3, 6.336).mean_degree == pytest.approx(6.336)


class TestBuild:
    def test_single_interaction(self):
        g, w0 = build_rap(RapParams(1, 3, 1, seed=11))
        assert g.members.tolist() == [[0, 1, 2]]
        assert g.couplings[0] == w0[0] * w0[1] * w0[2]

    @given(
        N=st.integers(1, 30),
        p=st.integers(2, 5),
        M=st.integers(0, 80),
        seed=st.integers(0, 2**64 - 1),
    )
    @settings(max_examples=60, deadline=None)
    def test_structure_and_planted_energy(self, N, p, M, seed):
        g, w0 = build_rap(RapParams(N, p, M, seed))
        assert g.num_variables == p * N
        # one variable per population
        assert np.all(g.members // N == np.arange(p))
        assert np.all(np.abs(g.couplings) == 1)
        assert g.degrees.sum() == p * M
        assert hamiltonian(g, w0) == -M

    def test_deterministic(self):
        a, wa = build_rap(RapParams(50, 3, 200, 99))
        b, wb = build_rap(RapParams(50, 3, 200, 99))
        c, _ = build_rap(RapParams(50, 3, 200, 100))
        assert a == b and np.array_equal(wa, wb)
        assert a != c

    def test_immutable(self):
        g, _ = build_rap(RapParams(5, 3, 4, 0))
        with pytest.raises(ValueError):
            g.members[0, 0] = 1

    def test_rejects_cross_population_member(self):
        with pytest.raises(ValueError):
            FactorGraph(2, 2, [[0, 1]], [1])

    def test_neighbors_match_members(self):
        g, _ = build_rap(RapParams(10, 3, 40, 3))
        for i in range(g.num_variables):
            expect = sorted(a for a in range(g.num_interactions) if i in g.members[a])
            assert sorted(g.neighbors(i).tolist()) == expect


class TestHamiltonian:
    def test_flip_one_variable(self):
        g, w0 = build_rap(RapParams(20, 3, 60, 5))
        i = int(np.argmax(g.degrees))
        w = w0.copy()
        w[i] = -w[i]
        assert hamiltonian(g, w) == -g.num_interactions + 2 * g.degrees[i]

    def test_empty_graph(self):
        g, w0 = build_rap(RapParams(4, 3, 0, 1))
        assert hamiltonian(g, w0) == 0

    def test_missing_assignment(self):
        g, w0 = build_rap(RapParams(4, 3, 2, 1))
        with pytest.raises(ValueError):
            hamiltonian(g, w0[:-1])

    def test_bounds(self):
        g, _ = build_rap(RapParams(6, 3, 30, 2))
        rng = np.random.default_rng(0)
        for _ in range(20):
            w = rng.choice([-1, 1], size=g.num_variables)
            assert -30 <= hamiltonian(g, w) <= 30


class TestDegrees:
    def test_single_interaction(self):
        g, _ = build_rap(RapParams(1, 3, 1, 0))
        stats = degree_histogram(g)
        assert stats.histogram == {1: 3}
        assert stats.mean_degree == 1

    def test_mean_degree_large_instance(self):
        g, _ = build_rap(RapParams(2000, 3, 12672, 1))
        stats = degree_histogram(g)
        assert float(stats.mean_degree) == 6.336
        assert sum(k * c for k, c in stats.histogram.items()) == 3 * 12672
        np.testing.assert_allclose(stats.population_split, 6.336)

    def test_degree_zero_fraction(self):
        # pooled over seeds: 60000 variables, sd of the fraction ~1.7e-4
        zeros = total = 0
        for seed in range(10):
            stats = degree_histogram(build_rap(RapParams(2000, 3, 12672, seed))[0])
            zeros += stats.histogram.get(0, 0)
            total += stats.num_variables
        sd = math.sqrt(EXP_MINUS_6336 * (1 - EXP_MINUS_6336) / total)
        assert abs(zeros / total - EXP_MINUS_6336) < 4 * sd

    @pytest.mark.parametrize("seed", range(5))
    def test_total_variation_to_poisson(self, seed):
        stats = degree_histogram(build_rap(RapParams(2000, 3, 12672, seed))[0])
        assert stats.total_variation(6.336) < 5 / math.sqrt(stats.num_variables)

    def test_degree_csv(self, tmp_path):
        g, _ = build_rap(RapParams(50, 3, 100, 0))
        path = tmp_path / "deg.csv"
        write_degree_csv(degree_histogram(g), path)
        lines = path.read_text().splitlines()
        assert lines[0] == "k,count,poisson_pmf"
        assert sum(int(line.split(",")[1]) for line in lines[1:]) == 150


class TestPoisson:
    def test_values(self):
        assert poisson_pmf(0, 0) == 1.0
        assert poisson_pmf(0, 3) == 0.0
        assert poisson_pmf(1, 1) == pytest.approx(EXP_MINUS_ONE, rel=1e-14)
        assert poisson_pmf(6.336, 0) == pytest.approx(EXP_MINUS_6336, rel=1e-14)

    def test_normalised(self):
        assert abs(sum(poisson_pmf(6.336, k) for k in range(201)) - 1.0) < 1e-12

    def test_large_k_is_finite(self):
        assert 0.0 < poisson_pmf(500.0, 500) < 1.0

    def test_negative_lambda(self):
        with pytest.raises(ValueError):
            poisson_pmf(-1.0, 0)

    def test_goodness_of_fit_rejects_wrong_mean(self):
        stats = degree_histogram(build_rap(RapParams(2000, 3, 12672, 0))[0])
        assert poisson_goodness_of_fit(stats, 6.336)[2] > 0.01
        assert poisson_goodness_of_fit(stats, 5.5)[2] < 1e-6


class TestDropconnectMap:
    def test_values(self):
        assert lambda_from_dropconnect(1.0, 2000) == 2000
        assert lambda_from_dropconnect(0.0, 2000) == 0
        assert dropconnect_from_lambda(6.336, 2000) == pytest.approx(PDC_6336_2000, rel=1e-13)

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            dropconnect_from_lambda(2001, 2000)
        with pytest.raises(ValueError):
            lambda_from_dropconnect(1.5, 2000)

    # below ~1e-6 the product p**depth underflows relative precision
    @given(st.one_of(st.just(0.0), st.floats(1e-6, 1.0)), st.integers(1, 10**6), st.integers(2, 6))
    def test_inverse(self, p, N, depth):
        lam = lambda_from_dropconnect(p, N, depth)
        assert dropconnect_from_lambda(lam, N, depth) == pytest.approx(p, rel=1e-12)


class TestAcyclic:
    def test_single_and_empty(self):
        assert is_acyclic(build_rap(RapParams(1, 3, 1, 0))[0])
        assert is_acyclic(build_rap(RapParams(3, 3, 0, 0))[0])

    def test_duplicate_interaction_is_cycle(self):
        g = FactorGraph(2, 2, [[0, 2], [0, 2]], [1, 1])
        assert not is_acyclic(g)

    def test_chain(self):
        # 0-2, 2-1 via variable 2 shared -> path, no cycle
        g = FactorGraph(2, 2, [[0, 2], [1, 2]], [1, -1])
        assert is_acyclic(g)
        g = FactorGraph(2, 2, [[0, 2], [1, 2], [1, 3], [0, 3]], [1, 1, 1, 1])
        assert not is_acyclic(g)


class TestDumpLoad:
    def test_round_trip(self, tmp_path):
        g, _ = build_rap(RapParams(30, 3, 75, 2**63 + 5))
        path = tmp_path / "g.rap"
        dump_graph(g, path)
        assert path.read_text().splitlines()[0] == f"RAP v1 30 3 75 {2**63 + 5}"
        assert load_graph(path) == g

    def test_bad_header(self, tmp_path):
        path = tmp_path / "g.rap"
        path.write_text("RAP v2 1 3 0 0\n")
        with pytest.raises(GraphFormatError):
            load_graph(path)

    def test_truncated(self, tmp_path):
        path = tmp_path / "g.rap"
        path.write_text("RAP v1 1 3 2 0\n0 1 0 1 2\n")
        with pytest.raises(GraphFormatError):
            load_graph(path)
