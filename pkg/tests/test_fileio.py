import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mrmlr.fileio import (
    format_group_spec,
    load_path,
    parse_group_spec,
    read_design,
    read_group_spec,
    read_matrix,
    read_response,
    save_path,
    spec_from_structure,
    write_labels,
    write_matrix,
)
from mrmlr.prox import CoarseStructure
from mrmlr.selection import build_grid
from mrmlr.solver import fit_path
from synthetic import make_instance

PBMC = """\
# fine types in column order
categories: CD14 Mono, CD16 Mono, B naive, B memory, NK
Monocytes: CD14 Mono, CD16 Mono
B cells [weight=2.5]: B naive, B memory
"""


def test_parse_monocyte_group():
    S, spec = parse_group_spec(PBMC)
    assert S.n_categories == 5 and S.n_groups == 2
    assert S.groups[0].tolist() == [0, 1]
    assert spec.group_names == ["Monocytes", "B cells"]
    assert spec.groups[0] == ["CD14 Mono", "CD16 Mono"]
    assert S.weights.tolist() == [1.0, 2.5]


def test_categories_only_gives_empty_structure():
    S, spec = parse_group_spec("categories: a, b, c\n")
    assert S.n_groups == 0 and S.n_categories == 3 and spec.groups == []


def test_unknown_member_is_named_in_error():
    with pytest.raises(ValueError, match="CD8 T"):
        parse_group_spec("categories: a, b\nG: a, CD8 T\n")


@pytest.mark.parametrize("text", [
    "G: a, b\n",
    "categories: a\n",
    "categories: a, a\n",
    "categories: a, b\ncategories: a, b\n",
    "categories: a, b\nG: a\n",
    "categories: a, b\nG: a, a\n",
    "categories: a, b\nG: a, b\nG: a, b\n",
    "categories: a, b\nG [weight=0]: a, b\n",
    "categories: a, b\nG [weight=x]: a, b\n",
    "categories: a, b\nno colon here\n",
    "",
])
def test_malformed_specs_rejected(text):
    with pytest.raises(ValueError):
        parse_group_spec(text)


def test_group_spec_format_round_trip(tmp_path):
    _, spec = parse_group_spec(PBMC)
    text = format_group_spec(spec)
    S2, spec2 = parse_group_spec(text)
    assert spec2 == spec
    f = tmp_path / "groups.txt"
    f.write_text(text)
    S3, spec3 = read_group_spec(f)
    assert spec3 == spec and S3.groups[1].tolist() == [2, 3]


def test_spec_from_structure_defaults():
    spec = spec_from_structure(CoarseStructure.consecutive(2, 2))
    assert spec.category_names == ["c0", "c1", "c2", "c3"]
    assert spec.group_names == ["A1", "A2"] and spec.groups == [["c0", "c1"], ["c2", "c3"]]


finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.lists(finite, min_size=3, max_size=3), min_size=1, max_size=6))
def test_matrix_round_trip_is_bit_exact(tmp_path_factory, rows):
    A = np.array(rows)
    f = tmp_path_factory.mktemp("m") / "a.csv"
    write_matrix(f, A, ["a", "b", "c"])
    B, header = read_matrix(f)
    assert header == ["a", "b", "c"]
    assert np.array_equal(A, B)


def test_matrix_errors(tmp_path):
    f = tmp_path / "a.csv"
    with pytest.raises(ValueError):
        write_matrix(f, np.zeros((2, 2)), ["a"])
    f.write_text("a,b\n1,2,3\n")
    with pytest.raises(ValueError):
        read_matrix(f)
    f.write_text("a,b\n1,nan\n")
    with pytest.raises(ValueError):
        read_matrix(f)
    f.write_text("")
    with pytest.raises(ValueError):
        read_matrix(f)
    f.write_text("a,b\n")
    with pytest.raises(ValueError):
        read_design(f)


def test_response_labels_and_counts(tmp_path):
    f = tmp_path / "y.csv"
    Y = np.eye(3)[[0, 2, 1, 2]]
    write_labels(f, Y)
    R, _ = read_response(f, 3)
    assert np.array_equal(R, Y)
    write_matrix(f, np.array([[2, 0, 1]]), ["a", "b", "c"])
    R, _ = read_response(f, 3)
    assert R.tolist() == [[2, 0, 1]]
    with pytest.raises(ValueError):
        read_response(f, 4)
    write_matrix(f, np.array([[0.5], [1.0]]), ["label"])
    with pytest.raises(ValueError):
        read_response(f, 3)
    write_matrix(f, np.array([[-1.0, 2.0]]), ["a", "b"])
    with pytest.raises(ValueError):
        read_response(f)


def test_model_directory_round_trip(tmp_path):
    X, Y = make_instance(0)
    S = CoarseStructure.consecutive(2, 3)
    path = fit_path(X, Y, S, build_grid(X, Y, S, 2, 1, 0.1))
    spec = spec_from_structure(S)
    names = ["(intercept)"] + [f"x{j}" for j in range(1, X.shape[1])]
    save_path(tmp_path, path, spec, intercept=True, predictor_names=names, meta={"seed": 3})
    loaded, spec2, manifest = load_path(tmp_path)
    assert spec2 == spec and manifest["seed"] == 3 and manifest["predictor_names"] == names
    assert np.array_equal(loaded.gammas, path.gammas)
    for key, res in path.cells():
        r2 = loaded[key]
        assert np.array_equal(r2.beta, res.beta)
        assert r2.objective == res.objective and r2.kkt_residual == res.kkt_residual
        assert np.array_equal(r2.penalized, res.penalized)


def test_load_rejects_non_model_directory(tmp_path):
    with pytest.raises(ValueError):
        load_path(tmp_path)
