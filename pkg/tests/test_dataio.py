import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hyperspot.dataio import (
    ExpressionMatrix,
    SpatialCoords,
    TissueMask,
    align_coords,
    apply_tissue_mask,
    generate_synthetic,
    load_coords,
    load_expression,
    log1p_normalize,
    write_coords,
    write_expression,
)
from hyperspot.errors import ValidationError


def test_load_expression_basic(tmp_path):
    p = tmp_path / "expr.csv"
    p.write_text("spot,g1,g2\na,1.0,2.0\nb,3.5,0.0\nc,0.25,4\n")
    expr = load_expression(str(p))
    assert expr.n_spots == 3
    assert expr.n_genes == 2
    assert expr.spot_ids == ("a", "b", "c")
    assert expr.gene_ids == ("g1", "g2")
    assert expr.values[1, 0] == 3.5


def test_load_expression_missing_file(tmp_path):
    with pytest.raises(ValidationError, match="not found"):
        load_expression(str(tmp_path / "nope.csv"))


def test_load_expression_duplicate_spot(tmp_path):
    p = tmp_path / "expr.csv"
    p.write_text("spot,g1\na,1\na,2\n")
    with pytest.raises(ValidationError, match="duplicate spot id 'a'"):
        load_expression(str(p))


def test_load_expression_nan_cell_reports_location(tmp_path):
    p = tmp_path / "expr.csv"
    p.write_text("spot,g1,g2\na,1,2\nb,NaN,3\n")
    with pytest.raises(ValidationError, match="row 2, column 1"):
        load_expression(str(p))


def test_load_expression_non_numeric_reports_location(tmp_path):
    p = tmp_path / "expr.csv"
    p.write_text("spot,g1,g2\na,1,x\n")
    with pytest.raises(ValidationError, match="row 1, column 2"):
        load_expression(str(p))


def test_load_expression_ragged_row(tmp_path):
    p = tmp_path / "expr.csv"
    p.write_text("spot,g1,g2\na,1\n")
    with pytest.raises(ValidationError, match="row 1 has 2 fields"):
        load_expression(str(p))


def test_expression_rejects_negative():
    with pytest.raises(ValidationError, match="negative"):
        ExpressionMatrix(np.array([[1.0, -0.5]]), ("a",), ("g1", "g2"))


def test_roundtrip_expression(tmp_path, rng):
    values = rng.uniform(0, 100, size=(7, 5))
    expr = ExpressionMatrix(values, tuple(f"s{i}" for i in range(7)),
                            tuple(f"g{j}" for j in range(5)))
    p = tmp_path / "expr.csv"
    write_expression(expr, str(p))
    back = load_expression(str(p))
    assert back.spot_ids == expr.spot_ids
    assert back.gene_ids == expr.gene_ids
    assert np.array_equal(back.values, expr.values)  # repr round-trip is exact


def test_load_coords_basic(tmp_path):
    p = tmp_path / "coords.csv"
    p.write_text("spot_id,x,y\na,0.5,1.5\nb,2,3\nc,-1,0\n")
    coords = load_coords(str(p))
    assert coords.n_spots == 3
    assert coords.positions[2, 0] == -1.0


def test_load_coords_infinite(tmp_path):
    p = tmp_path / "coords.csv"
    p.write_text("spot_id,x,y\na,inf,1\n")
    with pytest.raises(ValidationError, match="non-finite"):
        load_coords(str(p))


def test_roundtrip_coords(tmp_path, rng):
    coords = SpatialCoords(rng.normal(size=(6, 2)), tuple(f"s{i}" for i in range(6)))
    p = tmp_path / "c.csv"
    write_coords(coords, str(p))
    back = load_coords(str(p))
    assert np.array_equal(back.positions, coords.positions)


def test_align_coords_reorders_by_id():
    coords = SpatialCoords(np.array([[0.0, 0], [1, 1], [2, 2]]), ("a", "b", "c"))
    out = align_coords(coords, ("c", "a", "b"))
    assert out.spot_ids == ("c", "a", "b")
    assert np.array_equal(out.positions, np.array([[2.0, 2], [0, 0], [1, 1]]))


def test_align_coords_missing_spot_named():
    coords = SpatialCoords(np.array([[0.0, 0]]), ("a",))
    with pytest.raises(ValidationError, match="spot 'z'"):
        align_coords(coords, ("z",))


def test_align_coords_extra_spot_named():
    coords = SpatialCoords(np.array([[0.0, 0], [1, 1]]), ("a", "b"))
    with pytest.raises(ValidationError, match="spot 'b'"):
        align_coords(coords, ("a",))
    assert align_coords(coords, ("a",), allow_extra=True).spot_ids == ("a",)


def test_generate_synthetic_shapes_and_balance():
    expr, coords, truth = generate_synthetic(3, 50, 40, 0.1, 0.0, 7)
    assert expr.values.shape == (150, 40)
    assert coords.n_spots == 150
    assert np.array_equal(np.bincount(truth.labels), [50, 50, 50])


def test_generate_synthetic_zero_noise_identical_rows():
    expr, _, truth = generate_synthetic(4, 6, 9, 0.0, 0.0, 3)
    for d in range(4):
        rows = expr.values[truth.labels == d]
        assert np.array_equal(rows, np.tile(rows[0], (rows.shape[0], 1)))


def test_generate_synthetic_deterministic():
    a = generate_synthetic(2, 8, 6, 0.2, 0.25, 42)
    b = generate_synthetic(2, 8, 6, 0.2, 0.25, 42)
    assert np.array_equal(a[0].values, b[0].values)
    assert np.array_equal(a[1].positions, b[1].positions)
    assert np.array_equal(a[2].labels, b[2].labels)


def test_generate_synthetic_distinct_signatures():
    expr, _, truth = generate_synthetic(3, 4, 6, 0.0, 0.0, 0)
    sigs = {tuple(expr.values[truth.labels == d][0]) for d in range(3)}
    assert len(sigs) == 3


def test_generate_synthetic_mix_changes_expression_not_labels():
    clean, _, truth_clean = generate_synthetic(3, 20, 12, 0.0, 0.0, 5)
    mixed, _, truth_mixed = generate_synthetic(3, 20, 12, 0.0, 0.4, 5)
    assert np.array_equal(truth_clean.labels, truth_mixed.labels)
    changed = (clean.values != mixed.values).any(axis=1)
    assert changed.sum() == round(0.4 * 60)


def test_generate_synthetic_validation():
    with pytest.raises(ValidationError):
        generate_synthetic(0, 5, 5, 0.1, 0.0, 0)
    with pytest.raises(ValidationError):
        generate_synthetic(2, 5, 5, 0.1, 1.0, 0)
    with pytest.raises(ValidationError):
        generate_synthetic(6, 5, 5, 0.1, 0.0, 0)  # fewer genes than domains


def test_apply_tissue_mask_drops_rows():
    expr = ExpressionMatrix(np.arange(8, dtype=float).reshape(4, 2),
                            ("a", "b", "c", "d"), ("g0", "g1"))
    coords = SpatialCoords(np.arange(8, dtype=float).reshape(4, 2),
                           ("a", "b", "c", "d"))
    mask = TissueMask(np.array([True, False, True, True]))
    expr2, coords2 = apply_tissue_mask(expr, coords, mask)
    assert expr2.spot_ids == ("a", "c", "d")
    assert coords2.spot_ids == ("a", "c", "d")
    assert np.array_equal(expr2.values, expr.values[[0, 2, 3]])


def test_apply_tissue_mask_all_true_is_identity():
    expr = ExpressionMatrix(np.ones((3, 2)), ("a", "b", "c"), ("g0", "g1"))
    coords = SpatialCoords(np.zeros((3, 2)), ("a", "b", "c"))
    expr2, coords2 = apply_tissue_mask(expr, coords, TissueMask(np.ones(3, bool)))
    assert expr2.spot_ids == expr.spot_ids
    assert np.array_equal(expr2.values, expr.values)


def test_all_false_mask_rejected_at_construction():
    with pytest.raises(ValidationError, match="no spots"):
        TissueMask(np.zeros(4, bool))


def test_apply_tissue_mask_length_mismatch():
    expr = ExpressionMatrix(np.ones((3, 2)), ("a", "b", "c"), ("g0", "g1"))
    coords = SpatialCoords(np.zeros((3, 2)), ("a", "b", "c"))
    with pytest.raises(ValidationError, match="mask length"):
        apply_tissue_mask(expr, coords, TissueMask(np.array([True, False])))


@settings(max_examples=30, deadline=None)
@given(st.lists(st.booleans(), min_size=1, max_size=30).filter(any))
def test_mask_popcount_property(flags):
    n = len(flags)
    expr = ExpressionMatrix(np.ones((n, 2)), tuple(f"s{i}" for i in range(n)),
                            ("g0", "g1"))
    coords = SpatialCoords(np.zeros((n, 2)), expr.spot_ids)
    expr2, coords2 = apply_tissue_mask(expr, coords, TissueMask(np.array(flags)))
    assert expr2.n_spots == sum(flags)
    assert coords2.n_spots == sum(flags)


def test_log1p_normalize():
    expr = ExpressionMatrix(np.array([[0.0, np.e - 1.0]]), ("a",), ("g0", "g1"))
    out = log1p_normalize(expr)
    assert out.values[0, 0] == 0.0
    assert out.values[0, 1] == pytest.approx(1.0, abs=1e-15)
