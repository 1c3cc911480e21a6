import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tablemark.errors import ValidationError
from tablemark.tableio import (
    CATEGORICAL,
    NUMERICAL,
    Column,
    Table,
    TableSchema,
    infer_schema,
    load_schema,
    load_table,
    save_schema,
    save_table,
)


def make_schema():
    return TableSchema(
        columns=(
            Column(name="v", kind=NUMERICAL),
            Column(name="k", kind=CATEGORICAL, domain=("p", "q")),
        )
    )


def test_schema_rejects_duplicate_names():
    with pytest.raises(ValidationError):
        TableSchema(columns=(Column(name="a", kind=NUMERICAL), Column(name="a", kind=NUMERICAL)))


def test_schema_rejects_empty_domain():
    with pytest.raises(ValidationError):
        TableSchema(columns=(Column(name="a", kind=CATEGORICAL, domain=()),))


def test_table_rejects_out_of_domain_value():
    with pytest.raises(ValidationError):
        Table(schema=make_schema(), rows=((1.0, "zzz"),))


def test_table_rejects_non_finite():
    with pytest.raises(ValidationError):
        Table(schema=make_schema(), rows=((float("nan"), "p"),))


def test_table_rejects_bad_row_length():
    with pytest.raises(ValidationError):
        Table(schema=make_schema(), rows=((1.0,),))


def test_csv_round_trip(tmp_path):
    schema = make_schema()
    table = Table(schema=schema, rows=((1.5, "p"), (-2.25, "q"), (0.1, "p")))
    path = tmp_path / "t.csv"
    save_table(table, path)
    loaded = load_table(path, schema)
    assert loaded.rows == table.rows


def test_schema_round_trip(tmp_path):
    schema = make_schema()
    path = tmp_path / "s.json"
    save_schema(schema, path)
    assert load_schema(path) == schema


@settings(max_examples=50, deadline=None)
@given(
    vals=st.lists(
        st.floats(allow_nan=False, allow_infinity=False, width=64, min_value=-1e12, max_value=1e12),
        min_size=1,
        max_size=30,
    ),
    cats=st.lists(st.sampled_from(["p", "q"]), min_size=1, max_size=30),
)
def test_csv_round_trip_exact_floats(tmp_path_factory, vals, cats):
    n = min(len(vals), len(cats))
    schema = make_schema()
    table = Table(schema=schema, rows=tuple((vals[i], cats[i]) for i in range(n)))
    path = tmp_path_factory.mktemp("rt") / "t.csv"
    save_table(table, path)
    loaded = load_table(path, schema)
    for (a, ka), (b, kb) in zip(table.rows, loaded.rows):
        assert ka == kb
        assert math.isclose(a, b, rel_tol=0, abs_tol=0) or a == b


def test_infer_schema(tmp_path):
    path = tmp_path / "d.csv"
    lines = ["num,cat"] + [f"{i + 0.5},{'x' if i % 2 else 'y'}" for i in range(30)]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    schema = infer_schema(path)
    kinds = {c.name: c.kind for c in schema.columns}
    assert kinds == {"num": NUMERICAL, "cat": CATEGORICAL}
    cat = [c for c in schema.columns if c.name == "cat"][0]
    assert cat.domain == ("x", "y")  # sorted lexicographically


def test_infer_schema_threshold(tmp_path):
    # a numeric column with many distinct values stays numerical
    path = tmp_path / "d.csv"
    lines = ["v"] + [str(i + 0.5) for i in range(50)]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    schema = infer_schema(path)
    assert schema.columns[0].kind == NUMERICAL


def test_load_table_header_mismatch(tmp_path):
    path = tmp_path / "t.csv"
    path.write_text("wrong,k\n1.0,p\n", encoding="utf-8")
    with pytest.raises(ValidationError):
        load_table(path, make_schema())
