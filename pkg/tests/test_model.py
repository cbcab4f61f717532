import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import naive_tables
from ecoinfer.errors import (
    AgeBelowMinimum,
    AgeNotCovered,
    MarginalMismatch,
    NegativeCount,
    UnknownOption,
    ValidationError,
)
from ecoinfer.model import (
    BracketPartition,
    CellProbabilityMatrix,
    OptionSet,
    PrecinctRecord,
    aggregate_padron,
    duncan_davis_bounds,
    validate_precinct,
)

WITH_ABSTAIN = OptionSet(("A", "B", "abstain"), abstain="abstain")
NO_ABSTAIN = OptionSet(("A", "B"))


class TestOptionSet:
    def test_needs_two_unique_options(self):
        with pytest.raises(ValidationError):
            OptionSet(("only",))
        with pytest.raises(ValidationError):
            OptionSet(("A", "A"))
        with pytest.raises(ValidationError):
            OptionSet(("A", " "))

    def test_abstain_must_be_an_option(self):
        with pytest.raises(UnknownOption):
            OptionSet(("A", "B"), abstain="abstain")


class TestBracketPartition:
    def test_parse(self):
        p = BracketPartition.parse("18-24,25-29,30+")
        assert p.brackets == ((18, 24), (25, 29), (30, None))
        assert len(p) == 3
        assert p.labels == ("18-24", "25-29", "30+")

    @pytest.mark.parametrize("text", ["18-24,26-30", "18-24,24-30", "19-24", "18-24,25+,40-50",
                                      "30-20", "18-x"])
    def test_rejects_gaps_overlaps_and_garbage(self, text):
        with pytest.raises(ValidationError):
            BracketPartition.parse(text)

    def test_width_one_gives_one_bracket_per_age(self):
        p = BracketPartition.uniform(1, max_age=90)
        assert len(p) == 90 - 18 + 1
        assert p.brackets[0] == (18, 18)
        assert p.brackets[-1] == (90, None)
        assert BracketPartition.parse(",".join(p.labels_spec())) == p

    def test_width_five(self):
        p = BracketPartition.uniform(5, max_age=90)
        assert p.brackets[:2] == ((18, 22), (23, 27))
        assert p.open_ended

    def test_bracket_of(self):
        p = BracketPartition.parse("18-24,25-29")
        assert p.bracket_of(24) == 0
        assert p.bracket_of(25) == 1
        with pytest.raises(AgeBelowMinimum):
            p.bracket_of(17)
        with pytest.raises(AgeNotCovered):
            p.bracket_of(30)


class TestValidatePrecinct:
    def test_balanced_with_abstain(self):
        r = PrecinctRecord("m1", (200, 200), (150, 150, 100))
        assert validate_precinct(r, WITH_ABSTAIN) is r

    def test_mismatch_reports_sums_and_id(self):
        r = PrecinctRecord("m1", (200, 200), (150, 150, 101))
        with pytest.raises(MarginalMismatch) as exc:
            validate_precinct(r, WITH_ABSTAIN)
        assert exc.value.precinct_id == "m1"
        assert (exc.value.row_total, exc.value.col_total) == (400, 401)

    def test_turnout_below_roll_without_abstain(self):
        r = PrecinctRecord("m1", (200, 200), (150, 150))
        assert validate_precinct(r, NO_ABSTAIN) is r

    def test_turnout_above_roll_without_abstain(self):
        with pytest.raises(MarginalMismatch):
            validate_precinct(PrecinctRecord("m1", (10, 10), (15, 15)), NO_ABSTAIN)

    def test_negative(self):
        with pytest.raises(NegativeCount):
            validate_precinct(PrecinctRecord("m1", (10, -1), (5, 4)), NO_ABSTAIN)

    def test_column_count_must_match_options(self):
        with pytest.raises(UnknownOption):
            validate_precinct(PrecinctRecord("m1", (10,), (5, 4, 1)), NO_ABSTAIN)


class TestAggregatePadron:
    def test_direct_binning(self):
        p = BracketPartition.parse("18-24,25+")
        rows = [("m", 18, 2), ("m", 19, 1), ("m", 65, 1)]
        assert aggregate_padron(rows, p) == {"m": (3, 1)}

    def test_single_bracket_is_identity(self):
        p = BracketPartition.parse("18+")
        rows = [("m", 18, 2), ("m", 40, 7), ("m", 90, 1)]
        assert aggregate_padron(rows, p) == {"m": (10,)}

    def test_inclusive_hi(self):
        p = BracketPartition.parse("18-24,25-29")
        assert aggregate_padron([("m", 24, 5), ("m", 25, 5)], p) == {"m": (5, 5)}

    def test_errors(self):
        p = BracketPartition.parse("18-24,25-29")
        with pytest.raises(AgeBelowMinimum):
            aggregate_padron([("m", 16, 1)], p)
        with pytest.raises(AgeNotCovered):
            aggregate_padron([("m", 31, 1)], p)
        with pytest.raises(NegativeCount):
            aggregate_padron([("m", 20, -1)], p)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.tuples(st.sampled_from(["a", "b", "c"]), st.integers(18, 95),
                              st.integers(0, 50)), max_size=30), st.randoms())
    def test_permutation_invariant_and_total_preserving(self, rows, rnd):
        p = BracketPartition.parse("18-29,30-49,50+")
        shuffled = list(rows)
        rnd.shuffle(shuffled)
        out = aggregate_padron(rows, p)
        assert out == aggregate_padron(shuffled, p)
        assert sum(map(sum, out.values())) == sum(c for _, _, c in rows)


class TestCellProbabilityMatrix:
    def test_rows_must_sum_to_one(self):
        with pytest.raises(ValidationError):
            CellProbabilityMatrix(np.array([[0.5, 0.4]]), ("g",), ("a", "b"))
        with pytest.raises(ValidationError):
            CellProbabilityMatrix(np.array([[1.5, -0.5]]), ("g",), ("a", "b"))

    def test_is_read_only(self):
        m = CellProbabilityMatrix(np.array([[0.5, 0.5]]), ("g",), ("a", "b"))
        with pytest.raises(ValueError):
            m.beta[0, 0] = 1.0


class TestDuncanDavisBounds:
    def test_unanimous_precinct(self):
        b = duncan_davis_bounds([PrecinctRecord("m", (50, 50), (100, 0))])
        np.testing.assert_array_equal(b.lo[0], [[1, 0], [1, 0]])
        np.testing.assert_array_equal(b.hi[0], [[1, 0], [1, 0]])

    def test_two_by_two_against_enumeration(self):
        tables = naive_tables((60, 40), (50, 50))
        n11 = [t[0, 0] for t in tables]
        assert (min(n11), max(n11)) == (10, 50)
        b = duncan_davis_bounds([PrecinctRecord("m", (60, 40), (50, 50))])
        assert b.lo[0, 0, 0] == pytest.approx(10 / 60)
        assert b.hi[0, 0, 0] == pytest.approx(50 / 60)

    def test_single_row_is_determined(self):
        b = duncan_davis_bounds([PrecinctRecord("m", (40,), (10, 25, 5))])
        np.testing.assert_allclose(b.lo[0, 0], [10 / 40, 25 / 40, 5 / 40])
        np.testing.assert_allclose(b.hi[0, 0], [10 / 40, 25 / 40, 5 / 40])

    def test_empty_bracket_convention(self):
        b = duncan_davis_bounds([PrecinctRecord("m", (0, 10), (4, 6))])
        np.testing.assert_array_equal(b.lo[0, 0], [0, 0])
        np.testing.assert_array_equal(b.hi[0, 0], [0, 0])

    def test_aggregate_is_elector_weighted(self):
        recs = [PrecinctRecord("a", (60, 40), (50, 50)), PrecinctRecord("b", (20, 80), (100, 0))]
        b = duncan_davis_bounds(recs)
        assert b.agg_lo[0, 0] == pytest.approx((60 * 10 / 60 + 20 * 1.0) / 80)
        assert b.agg_hi[0, 0] == pytest.approx((50 + 20) / 80)

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.integers(0, 4), min_size=2, max_size=3),
           st.lists(st.integers(0, 4), min_size=2, max_size=3), st.randoms())
    def test_every_feasible_table_lies_inside(self, x, shape_t, rnd):
        n = sum(x)
        # random column margins with the same total
        cuts = sorted(rnd.randint(0, n) for _ in range(len(shape_t) - 1))
        t = [b - a for a, b in zip([0] + cuts, cuts + [n])]
        rec = PrecinctRecord("m", tuple(x), tuple(t))
        b = duncan_davis_bounds([rec])
        xs = np.array(x, dtype=float)[:, None]
        for tab in naive_tables(x, t):
            frac = np.divide(tab, xs, out=np.zeros(tab.shape), where=xs > 0)
            assert b.contains(frac[None]).all()

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.integers(0, 30), min_size=3, max_size=4), st.data())
    def test_merging_rows_stays_inside_weighted_combination(self, x, data):
        n = sum(x)
        t1 = data.draw(st.integers(0, n))
        t = (t1, n - t1)
        rec = PrecinctRecord("m", tuple(x), t)
        merged = PrecinctRecord("m", (x[0] + x[1],) + tuple(x[2:]), t)
        b, bm = duncan_davis_bounds([rec]), duncan_davis_bounds([merged])
        w = x[0] + x[1]
        if w == 0:
            return
        combo_lo = (x[0] * b.lo[0, 0] + x[1] * b.lo[0, 1]) / w
        combo_hi = (x[0] * b.hi[0, 0] + x[1] * b.hi[0, 1]) / w
        assert np.all(bm.lo[0, 0] >= combo_lo - 1e-12)
        assert np.all(bm.hi[0, 0] <= combo_hi + 1e-12)
        assert np.all(bm.lo[0, 0] <= bm.hi[0, 0])
