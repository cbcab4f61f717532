import numpy as np
import pytest

from conftest import HOMOGENEOUS_BETA
from ecoinfer.analyses import (
    PLEBISCITE_COLUMNS,
    age_party_curve,
    pair_rounds,
    plebiscite_cross,
    point_matrix,
    transition_matrix,
)
from ecoinfer.errors import MarginalMismatch, NoPairedPrecincts, RollDriftExceeded
from ecoinfer.estimators import McmcConfig
from ecoinfer.model import BracketPartition, OptionSet, PrecinctRecord, cell_matrix
from ecoinfer.synth import SimConfig, simulate_election, simulate_plebiscite

QUICK = McmcConfig(chains=2, iterations=1500, burn_in=300, thinning=2, seed=1)


class TestAgeCurves:
    def test_point_estimators_pass_through_known_values(self, homogeneous, two_brackets, two_options):
        for method in ("weighted_average", "goodman"):
            c = age_party_curve(homogeneous, two_brackets, two_options, method)
            np.testing.assert_allclose(c.curves["yes"], HOMOGENEOUS_BETA[:, 0], atol=1e-9)
            np.testing.assert_allclose(c.curves["no"], HOMOGENEOUS_BETA[:, 1], atol=1e-9)
            assert c.sd is None
            assert c.brackets == ("18-44", "45+")

    def test_md_has_sd_band(self, homogeneous, two_brackets, two_options):
        c = age_party_curve(homogeneous, two_brackets, two_options, "md", QUICK)
        np.testing.assert_allclose(c.curves["yes"], HOMOGENEOUS_BETA[:, 0], atol=0.05)
        assert set(c.sd) == {"yes", "no"}
        assert all(np.all(v >= 0) for v in c.sd.values())

    def test_width_one_partition_gives_one_point_per_age(self):
        part = BracketPartition.uniform(1, max_age=40, open_ended=False)
        opts = OptionSet(("a", "b", "abstain"), abstain="abstain")
        beta = cell_matrix(np.tile([0.4, 0.4, 0.2], (len(part), 1)), part.labels, opts.options)
        age_pyramid = {a: 1.0 for a in range(18, 41)}
        truth = simulate_election(SimConfig(n_precincts=60, beta_true=beta, partition=part,
                                            options=opts, age_clustering=0.6, seed=3,
                                            age_pyramid=age_pyramid))
        c = age_party_curve(truth.records, part, opts, "weighted_average")
        assert len(c.midpoints) == 40 - 18 + 1
        assert all(len(v) == len(c.midpoints) for v in c.curves.values())
        assert "abstain" in c.curves
        np.testing.assert_array_equal(c.midpoints, np.arange(18, 41))


def _records(rows):
    return [PrecinctRecord(pid, (sum(v),), v) for pid, v in rows]


class TestPairRounds:
    def test_pairs_by_id_and_reports_unpaired(self):
        r1 = _records([("a", (5, 5)), ("b", (3, 7)), ("c", (1, 1))])
        r2 = _records([("b", (4, 6)), ("a", (5, 5)), ("z", (1, 1))])
        data = pair_rounds(r1, r2, ("x", "y"), ("x", "y"))
        assert data.precinct_ids == ("a", "b")
        np.testing.assert_array_equal(data.second, [[5, 5], [4, 6]])
        assert data.unpaired == ("c", "z")

    def test_disjoint(self):
        with pytest.raises(NoPairedPrecincts):
            pair_rounds(_records([("a", (1, 1))]), _records([("b", (1, 1))]), ("x", "y"), ("x", "y"))

    def test_drift_absorbed_by_abstention(self):
        o2 = OptionSet(("x", "abstain"), abstain="abstain")
        r1 = _records([("a", (600, 400))])
        r2 = _records([("a", (600, 395))])
        data = pair_rounds(r1, r2, ("x", "y"), o2)
        np.testing.assert_array_equal(data.second, [[600, 400]])
        assert data.drift[0] == pytest.approx(0.005)

    def test_drift_over_threshold(self):
        o2 = OptionSet(("x", "abstain"), abstain="abstain")
        with pytest.raises(RollDriftExceeded):
            pair_rounds(_records([("a", (600, 400))]), _records([("a", (600, 380))]), ("x", "y"), o2)

    def test_drift_without_abstention_column(self):
        with pytest.raises(RollDriftExceeded):
            pair_rounds(_records([("a", (600, 400))]), _records([("a", (600, 399))]), ("x", "y"),
                        ("x", "y"))


class TestTransitionMatrix:
    def test_identical_rounds_give_identity(self):
        # unanimous precincts pin every cell; a diverse set pins Goodman exactly
        r = _records([(f"p{i}", (20 + 7 * i, 50 - 3 * i)) for i in range(8)])
        data = pair_rounds(r, r, ("x", "y"), ("x", "y"))
        np.testing.assert_allclose(transition_matrix(data, "goodman").beta, np.eye(2), atol=1e-9)
        pinned = _records([("u1", (30, 0)), ("u2", (0, 40)), ("u3", (25, 0))])
        data = pair_rounds(pinned, pinned, ("x", "y"), ("x", "y"))
        for method in ("weighted_average", "goodman"):
            np.testing.assert_allclose(transition_matrix(data, method).beta, np.eye(2), atol=1e-12)
        np.testing.assert_array_equal(transition_matrix(data, "md", QUICK).mean.beta, np.eye(2))

    def test_label_permutation_equivariance(self):
        rng = np.random.default_rng(0)
        P = np.array([[0.8, 0.1, 0.1], [0.2, 0.7, 0.1], [0.1, 0.2, 0.7]])
        first = rng.multinomial(300, [0.5, 0.3, 0.2], size=40)
        first = np.array([rng.multinomial(300, rng.dirichlet([2, 2, 2])) for _ in range(40)])
        second = np.array([sum(rng.multinomial(n, P[r]) for r, n in enumerate(row)) for row in first])
        r1 = [PrecinctRecord(f"p{i}", (300,), tuple(first[i])) for i in range(40)]
        r2 = [PrecinctRecord(f"p{i}", (300,), tuple(second[i])) for i in range(40)]
        perm1, perm2 = [2, 0, 1], [1, 2, 0]
        r1p = [PrecinctRecord(r.precinct_id, r.electors, tuple(np.array(r.votes)[perm1])) for r in r1]
        r2p = [PrecinctRecord(r.precinct_id, r.electors, tuple(np.array(r.votes)[perm2])) for r in r2]
        for method in ("weighted_average", "goodman"):
            base = transition_matrix(pair_rounds(r1, r2, "abc", "xyz"), method).beta
            perm = transition_matrix(pair_rounds(r1p, r2p, "cab", "yzx"), method).beta
            np.testing.assert_allclose(perm, base[np.ix_(perm1, perm2)], atol=1e-9)

    def test_outputs_are_row_stochastic(self):
        r1 = _records([("a", (30, 20)), ("b", (10, 40)), ("c", (25, 25))])
        r2 = _records([("a", (28, 22)), ("b", (15, 35)), ("c", (20, 30))])
        data = pair_rounds(r1, r2, ("x", "y"), ("x", "y"))
        for method in ("weighted_average", "goodman", "md"):
            b = point_matrix(transition_matrix(data, method, QUICK)).beta
            np.testing.assert_allclose(b.sum(axis=1), 1.0, atol=1e-9)
            assert np.all((b >= 0) & (b <= 1))


class TestPlebiscite:
    def test_all_si_forces_rows(self):
        r1 = _records([("a", (30, 20)), ("b", (10, 40))])
        out = plebiscite_cross(r1, {"a": 50, "b": 50}, ("x", "y"), "md", QUICK)
        np.testing.assert_array_equal(out.mean.beta, [[1, 0], [1, 0]])
        assert out.mean.col_labels == PLEBISCITE_COLUMNS

    def test_si_exceeding_total(self):
        with pytest.raises(MarginalMismatch):
            plebiscite_cross(_records([("a", (3, 2))]), {"a": 6}, ("x", "y"), "goodman")

    def test_unpaired(self):
        with pytest.raises(NoPairedPrecincts):
            plebiscite_cross(_records([("a", (3, 2))]), {"b": 1}, ("x", "y"), "goodman")

    def test_recovers_two_party_split(self):
        part = BracketPartition.parse("18-39,40+")
        opts = OptionSet(("A", "B"))
        beta = cell_matrix([[0.8, 0.2], [0.25, 0.75]], part.labels, opts.options)
        first = simulate_election(SimConfig(n_precincts=80, beta_true=beta, partition=part,
                                            options=opts, age_clustering=0.9, seed=5))
        si, _ = simulate_plebiscite(first, [0.2, 0.8], seed=6)
        cfg = McmcConfig(chains=2, iterations=4000, burn_in=1000, thinning=2, seed=1)
        for method in ("goodman", "md"):
            est = point_matrix(plebiscite_cross(first.records, si, opts, method, cfg)).beta
            np.testing.assert_allclose(est, [[0.2, 0.8], [0.8, 0.2]], atol=0.05)
