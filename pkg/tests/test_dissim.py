import dataclasses

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from qcshape.conformal import PlanarEmbedding
from qcshape.curvature import curvature_field
from qcshape.dissim import (ComponentCache, DissimilarityMatrix, IndexWeights, ShapeFields, build_matrix,
                            dissimilarity, shape_index_components, shape_index_delta)
from qcshape.errors import MeshError, NumericalError
from qcshape.mesh import LandmarkCorrespondence
from qcshape.register import inconsistent_planar_register
from qcshape.shapes import disk_mesh


@pytest.fixture(scope="module")
def self_reg():
    m = disk_mesh(8, height=lambda x, y: 0.2 * np.exp(-3 * (x * x + y * y)))
    emb = PlanarEmbedding(m.vertices[:, :2], m)
    I = 0.5 + 0.4 * np.sin(2 * m.vertices[:, 0])
    return inconsistent_planar_register(emb, emb, I, I, LandmarkCorrespondence([0, 7], [0, 7])), m


def fields(H, K):
    return ShapeFields(np.asarray(H, float), np.asarray(K, float))


def test_weights_validation():
    IndexWeights(0.2, 0.3, 0.5)
    with pytest.raises(ValueError):
        IndexWeights(0.5, 0.5, 0.5)
    with pytest.raises(ValueError):
        IndexWeights(-0.1, 0.6, 0.5)


def test_self_delta_is_zero(self_reg):
    reg, m = self_reg
    c = curvature_field(m)
    assert shape_index_delta(reg, c, c, IndexWeights(0.2, 0.3, 0.5)) == 0.0


def test_uniform_mu_delta(self_reg):
    reg, m = self_reg
    r = dataclasses.replace(reg, mu_abs=np.full(m.n_faces, 0.5))
    f = fields(np.zeros(m.n_vertices), np.zeros(m.n_vertices))
    assert shape_index_delta(r, f, f, IndexWeights(1, 0, 0)) == pytest.approx(0.5, abs=1e-15)


def test_maximal_mean_curvature_mismatch(self_reg):
    reg, m = self_reg
    n = m.n_vertices
    d = shape_index_delta(reg, fields(np.ones(n), np.zeros(n)), fields(-np.ones(n), np.zeros(n)),
                          IndexWeights(0, 1, 0))
    assert d == pytest.approx(1.0, abs=1e-15)


def test_empty_common_region(self_reg):
    reg, m = self_reg
    r = dataclasses.replace(reg, omega1=np.zeros(m.n_faces, bool))
    f = fields(np.zeros(m.n_vertices), np.zeros(m.n_vertices))
    with pytest.raises(NumericalError):
        shape_index_delta(r, f, f, IndexWeights(1, 0, 0))


unit = st.floats(0, 1)


@given(st.integers(0, 2**31), unit, unit)
def test_delta_affine_bounded_monotone(self_reg, seed, a, b):
    reg, m = self_reg
    rng = np.random.default_rng(seed)
    n = m.n_vertices
    f1 = fields(rng.uniform(-1, 1, n), rng.uniform(-1, 1, n))
    f2 = fields(rng.uniform(-1, 1, n), rng.uniform(-1, 1, n))
    mu = rng.uniform(0, 0.9, m.n_faces)
    r = dataclasses.replace(reg, mu_abs=mu)
    if a + b > 1:
        a, b = a / (a + b), b / (a + b)
    c = max(0.0, 1 - a - b)
    w = IndexWeights(a, b, c)
    d = shape_index_delta(r, f1, f2, w)
    basis = [shape_index_delta(r, f1, f2, IndexWeights(*e)) for e in np.eye(3)]
    assert abs(d - (a * basis[0] + b * basis[1] + c * basis[2])) <= 1e-12
    assert 0 <= d <= 1
    bigger = dataclasses.replace(reg, mu_abs=np.minimum(mu + rng.uniform(0, 0.09, m.n_faces), 0.99))
    if a > 0:
        assert shape_index_delta(bigger, f1, f2, w) >= d


@pytest.mark.parametrize("d12,d21,d", [(0.3, 0.5, 0.3), (0, 0, 0), (0.7, 0.7, 0.7)])
def test_dissimilarity(d12, d21, d):
    assert dissimilarity(d12, d21) == d


def test_build_matrix_examples():
    dm = build_matrix([[0, 0.4], [0.6, 0]], ["a", "b"])
    assert np.array_equal(dm.D, [[0, 0.4], [0.4, 0]])
    assert np.array_equal(build_matrix([[0.3]], ["x"]).D, [[0]])
    with pytest.raises(ValueError, match="outside"):
        build_matrix([[0, 1.3], [0.2, 0]], ["a", "b"])
    with pytest.raises(MeshError, match="missing"):
        build_matrix([[0, np.nan], [0.2, 0]], ["a", "b"])


@given(arrays(float, st.tuples(st.integers(1, 9)).map(lambda t: (t[0], t[0])), elements=st.floats(0, 1)))
def test_build_matrix_invariants(delta):
    n = len(delta)
    dm = build_matrix(delta, [f"s{i}" for i in range(n)])
    assert np.array_equal(dm.D, dm.D.T)
    assert np.all(np.diag(dm.D) == 0)
    assert dm.D.min() >= 0 and dm.D.max() <= 1


def test_matrix_csv_roundtrip(tmp_path):
    dm = build_matrix(np.random.default_rng(0).uniform(0, 1, (4, 4)), list("abcd"))
    dm.to_csv(tmp_path / "D.csv")
    back = DissimilarityMatrix.from_csv(tmp_path / "D.csv")
    assert np.array_equal(back.D, dm.D) and back.ids == dm.ids
    assert (tmp_path / "D.csv").read_text().startswith("id,a,b,c,d\n")


def test_component_cache(tmp_path, self_reg):
    reg, m = self_reg
    comps = np.random.default_rng(1).uniform(0, 1, (3, 3, 3))
    cache = ComponentCache(comps, ("a", "b", "c"))
    cache.save(tmp_path)
    back = ComponentCache.load(tmp_path)
    assert np.array_equal(back.components, comps)
    w = IndexWeights(0.25, 0.25, 0.5)
    assert np.allclose(back.deltas(w), 0.25 * comps[0] + 0.25 * comps[1] + 0.5 * comps[2], atol=1e-15)
    with pytest.raises(MeshError):
        ComponentCache.load(tmp_path / "missing")


def test_components_use_target_pullback(self_reg):
    reg, m = self_reg
    n = m.n_vertices
    H1 = np.linspace(-1, 1, n)
    comps = shape_index_components(reg, fields(H1, H1), fields(H1, -H1))
    assert comps[0] == 0 and comps[1] == 0 and comps[2] > 0
