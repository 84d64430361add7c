import pytest
from hypothesis import given
from hypothesis import strategies as st

from dpledger.queries import (
    ColumnSpec,
    Predicate,
    QueryDescriptor,
    QueryKind,
    Schema,
    UnknownColumnError,
    UnsupportedQueryError,
    canonical_key,
    validate_descriptor,
)

finite_floats = st.floats(allow_nan=False, allow_infinity=False, width=64)

descriptors = st.one_of(
    st.builds(lambda p: QueryDescriptor(QueryKind.COUNT, None, p),
              st.none() | st.builds(Predicate, st.sampled_from(["age", "salary"]),
                                    st.sampled_from(["<", "<=", "=", ">=", ">"]),
                                    finite_floats)),
    st.builds(lambda k, c, p: QueryDescriptor(k, c, p),
              st.sampled_from([QueryKind.SUM, QueryKind.MEAN]),
              st.sampled_from(["age", "salary"]),
              st.none() | st.builds(Predicate, st.sampled_from(["age", "salary"]),
                                    st.sampled_from(["<", "<=", "=", ">=", ">"]),
                                    finite_floats)),
)


class TestValidation:
    def test_count_takes_no_column(self):
        with pytest.raises(UnsupportedQueryError):
            QueryDescriptor(QueryKind.COUNT, column="age")

    def test_sum_requires_column(self):
        with pytest.raises(UnsupportedQueryError):
            QueryDescriptor(QueryKind.SUM)

    def test_bad_comparator(self):
        with pytest.raises(UnsupportedQueryError):
            Predicate("age", "!=", 3.0)

    def test_non_finite_constant(self):
        with pytest.raises(ValueError):
            Predicate("age", ">", float("inf"))

    def test_unknown_column_against_schema(self, schema):
        desc = QueryDescriptor(QueryKind.SUM, column="height")
        with pytest.raises(UnknownColumnError):
            validate_descriptor(desc, schema)

    def test_unknown_predicate_column(self, schema):
        desc = QueryDescriptor(
            QueryKind.COUNT, predicate=Predicate("height", ">", 0.0)
        )
        with pytest.raises(UnknownColumnError):
            validate_descriptor(desc, schema)

    def test_schema_rejects_inverted_bounds(self):
        with pytest.raises(ValueError):
            ColumnSpec("age", 10.0, 5.0)

    def test_schema_rejects_duplicates(self):
        with pytest.raises(ValueError):
            Schema((ColumnSpec("a", 0, 1), ColumnSpec("a", 0, 1)))


class TestCanonicalKey:
    def test_identical_descriptors_same_key(self, count_over_30):
        other = QueryDescriptor(
            QueryKind.COUNT, predicate=Predicate("age", ">", 30.0)
        )
        assert canonical_key(count_over_30) == canonical_key(other)

    def test_different_constant_different_key(self):
        a = QueryDescriptor(QueryKind.COUNT, predicate=Predicate("age", ">", 30.0))
        b = QueryDescriptor(QueryKind.COUNT, predicate=Predicate("age", ">", 31.0))
        assert canonical_key(a) != canonical_key(b)

    def test_different_kind_different_key(self):
        a = QueryDescriptor(QueryKind.SUM, column="salary")
        b = QueryDescriptor(QueryKind.MEAN, column="salary")
        assert canonical_key(a) != canonical_key(b)

    def test_negative_zero_normalized(self):
        a = QueryDescriptor(QueryKind.COUNT, predicate=Predicate("age", ">", 0.0))
        b = QueryDescriptor(QueryKind.COUNT, predicate=Predicate("age", ">", -0.0))
        assert canonical_key(a) == canonical_key(b)

    def test_key_is_32_bytes(self, count_all):
        assert len(canonical_key(count_all)) == 32

    @given(desc=descriptors)
    def test_round_trip_preserves_key(self, desc):
        again = QueryDescriptor.from_dict(desc.to_dict())
        assert again == desc
        assert canonical_key(again) == canonical_key(desc)

    @given(desc=descriptors, other=descriptors)
    def test_distinct_descriptors_distinct_keys(self, desc, other):
        if desc != other:
            assert canonical_key(desc) != canonical_key(other)


class TestRender:
    def test_count_all(self, count_all):
        assert count_all.render() == "COUNT(*)"

    def test_sum_with_predicate(self):
        desc = QueryDescriptor(
            QueryKind.SUM, column="salary", predicate=Predicate("age", ">=", 30.0)
        )
        assert desc.render() == "SUM(salary) WHERE age >= 30"


class TestPredicate:
    @pytest.mark.parametrize(
        "comparator,value,expected",
        [
            ("<", 29.0, True),
            ("<", 30.0, False),
            ("<=", 30.0, True),
            ("=", 30.0, True),
            ("=", 31.0, False),
            (">=", 30.0, True),
            (">", 30.0, False),
            (">", 31.0, True),
        ],
    )
    def test_matches(self, comparator, value, expected):
        assert Predicate("age", comparator, 30.0).matches(value) is expected
