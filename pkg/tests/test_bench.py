import pytest

from dcnn.bench import loglog_slope, param_table, run_bench


def test_param_table_reference_row():
    row = next(r for r in param_table() if (r["width"], r["depth"]) == (3072, 2))
    assert row["dc_complex_weights"] == 12_288
    assert row["dense_complex_weights"] == 3072 * 3072 * 2  # about 18.9 million
    assert all(r["matches_formula"] for r in param_table())


def test_slope_fit():
    sizes = [2, 4, 8, 16]
    assert loglog_slope(sizes, [s ** 2 for s in sizes]) == pytest.approx(2.0)


def test_small_run_shape():
    rep = run_bench([16, 32, 64], reps=5)
    assert len(rep.dense_median_s) == 3 and all(t > 0 for t in rep.circulant_median_s)
    assert rep.to_dict()["slope_check"] in ("ok", "warning")


def test_validation():
    with pytest.raises(ValueError):
        run_bench([64, 32], reps=5)
    with pytest.raises(ValueError):
        run_bench([16, 32], reps=2)
