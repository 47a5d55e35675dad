import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as sps

from relu_constructor import targets as T


def test_smoothness_split():
    assert T.smoothness_split(2.0) == (1, 1.0)
    assert T.smoothness_split(0.5) == (0, 0.5)
    s, r = T.smoothness_split(2.5)
    assert s == 2 and r == pytest.approx(0.5)
    with pytest.raises(ValueError):
        T.smoothness_split(0.0)


def test_multi_indices_counts():
    assert T.multi_indices(2, 1) == [(0, 0), (1, 0), (0, 1)]
    for d in (1, 2, 3):
        for k in range(4):
            assert len(T.multi_indices(d, k)) == math.comb(d + k, k)


def test_constant_partials_vanish():
    tg = T.builtin_target("constant", 2, 3.0, 1.0, value=0.7)
    x = np.random.default_rng(0).uniform(size=(50, 2))
    np.testing.assert_array_equal(tg(x), 0.7)
    for a, p in tg.partials.items():
        if sum(a):
            np.testing.assert_array_equal(p(x), 0.0)


def test_affine_requires_unit_radius():
    with pytest.raises(ValueError):
        T.builtin_target("affine", 3, 1.0, 0.9)
    tg = T.builtin_target("affine", 3, 1.0, 1.0)
    x = np.random.default_rng(1).uniform(size=(20, 3))
    np.testing.assert_allclose(tg(x), x.mean(axis=1))


def test_unknown_and_invalid_targets():
    with pytest.raises(ValueError):
        T.builtin_target("sine", 1, 1.0, 1.0)
    with pytest.raises(ValueError):
        T.builtin_target("abs_power", 1, 1.5, 1.0)


def test_abs_power_holder_constant_by_ratio_scan():
    tg = T.builtin_target("abs_power", 1, 0.5, 1.0)
    rng = np.random.default_rng(2)
    x, y = rng.uniform(size=(2, 100_000, 1))
    ratio = np.abs(tg(x) - tg(y)) / np.abs(x - y)[:, 0] ** 0.5
    assert ratio.max() <= 1.0 + 1e-9
    assert ratio.max() > 0.9


HOLDER_CASES = [(name, d, beta) for name in ("constant", "affine", "cosine_product", "poly")
                for d in (1, 2, 3) for beta in (0.5, 1.0, 2.0, 2.5, 3.0)]
HOLDER_CASES += [("abs_power", d, beta) for d in (1, 2, 3) for beta in (0.3, 0.5, 1.0)]


@pytest.mark.parametrize("name,d,beta", HOLDER_CASES)
def test_holder_spot_check(name, d, beta):
    B0 = 1.5
    tg = T.builtin_target(name, d, beta, B0)
    rng = np.random.default_rng(3)
    grid = rng.uniform(size=(20_000, d))
    for a in T.multi_indices(d, tg.s):
        part = tg.partials.get(a) or T.finite_difference_partial(tg, a, 1e-3)
        assert np.abs(part(grid)).max() <= B0 + 1e-6
    x, y = rng.uniform(size=(2, 10_000, d))
    gap = np.linalg.norm(x - y, axis=1) ** tg.r
    for a in T.multi_indices(d, tg.s, tg.s):
        part = tg.partials[a]
        assert (np.abs(part(x) - part(y)) / gap).max() <= B0 + 1e-6


def test_cosine_partials_match_finite_differences():
    tg = T.builtin_target("cosine_product", 2, 3.0, 1.0)
    x = np.random.default_rng(4).uniform(0.1, 0.9, size=(30, 2))
    for a in T.multi_indices(2, 2, 1):
        fd = T.finite_difference_partial(tg, a, 1e-3)
        np.testing.assert_allclose(tg.partials[a](x), fd(x), atol=1e-4)


def test_cube_samples_and_mean():
    spec = T.SupportSpec("cube", 2)
    X = T.sample_X(spec, 100_000, 5)
    assert X.min() >= 0 and X.max() <= 1
    assert np.all(np.abs(X.mean(axis=0) - 0.5) <= 0.02)


def test_manifold_on_curve_when_rho_zero():
    spec = T.SupportSpec("manifold_neighborhood", 10, 1, embedding_seed=3)
    X = T.sample_X(spec, 200, 6)
    emb = T.Embedding(10, 1, 3)
    assert emb.distance(X).max() <= 1e-9
    assert X.min() >= 0.1 - 1e-12 and X.max() <= 0.9 + 1e-12
    np.testing.assert_array_equal(X, emb(T.sample_parameters(spec, 200, 6)))


def test_manifold_neighborhood_radius():
    spec = T.SupportSpec("manifold_neighborhood", 10, 1, rho=0.05)
    X = T.sample_X(spec, 200, 7)
    assert T.Embedding(10, 1, 0).distance(X).max() <= 0.05 + 1e-9


def test_torus_embedding_samples():
    spec = T.SupportSpec("manifold_neighborhood", 6, 2, embedding_seed=1)
    X = T.sample_X(spec, 100, 8)
    assert T.Embedding(6, 2, 1).distance(X).max() <= 0.05


def test_manifold_parameter_uniformity():
    spec = T.SupportSpec("manifold_neighborhood", 10, 1)
    t = T.sample_parameters(spec, 100_000, 9)[:, 0] / (2 * math.pi)
    assert sps.kstest(t, "uniform").statistic < 0.02


def test_minkowski_samples_lie_on_segment():
    spec = T.SupportSpec("minkowski_set", 5)
    X = T.sample_X(spec, 500, 10)
    centered = X - X.mean(axis=0)
    sv = np.linalg.svd(centered, compute_uv=False)
    assert sv[1] <= 1e-9 * sv[0]
    assert X.min() >= 0 and X.max() <= 1
    cantor = T.sample_X(T.SupportSpec("minkowski_set", 5, cantor=True), 500, 10)
    assert cantor.min() >= 0 and cantor.max() <= 1


@pytest.mark.parametrize("kwargs", [
    {"kind": "ball"},
    {"kind": "manifold_neighborhood", "d": 2, "intrinsic_dim": 2},
    {"kind": "manifold_neighborhood", "d": 4, "rho": 1.0},
    {"kind": "cube", "d": 0},
])
def test_support_validation(kwargs):
    with pytest.raises(ValueError):
        T.SupportSpec(**kwargs)


@given(st.sampled_from(["cube", "manifold_neighborhood", "minkowski_set"]), st.integers(2, 6),
       st.integers(1, 300), st.integers(0, 2**32 - 1))
@settings(max_examples=50, deadline=None)
def test_samplers_are_deterministic_and_in_cube(kind, d, n, seed):
    spec = T.SupportSpec(kind, d, rho=0.1 if kind == "manifold_neighborhood" else 0.0)
    a, b = T.sample_X(spec, n, seed), T.sample_X(spec, n, seed)
    assert a.tobytes() == b.tobytes()
    assert a.shape == (n, d) and a.min() >= 0 and a.max() <= 1


def test_noise_none_is_exact():
    tg = T.builtin_target("poly", 2, 2.0, 1.0)
    spec = T.SupportSpec("cube", 2)
    data = T.generate_dataset(tg, spec, T.NoiseSpec(), 100, 0)
    np.testing.assert_array_equal(data.Y, tg(data.X))


def test_gaussian_noise_mean():
    tg = T.builtin_target("poly", 2, 2.0, 1.0)
    n, sigma = 100_000, 0.1
    data = T.generate_dataset(tg, T.SupportSpec("cube", 2), T.NoiseSpec("gaussian", sigma), n, 1)
    assert abs((data.Y - tg(data.X)).mean()) <= 4 * sigma / math.sqrt(n)


def test_laplace_noise_variance():
    s = 0.2
    eta = T.NoiseSpec("laplace", s).sample(np.random.default_rng(2), 100_000)
    assert eta.var() == pytest.approx(2 * s * s, rel=0.1)


def test_dataset_dimension_mismatch():
    with pytest.raises(ValueError):
        T.generate_dataset(T.builtin_target("poly", 2, 1.0, 1.0), T.SupportSpec("cube", 3), T.NoiseSpec(), 5, 0)


def test_dataset_csv_and_sidecar():
    tg = T.builtin_target("cosine_product", 2, 1.0, 1.0)
    spec, noise = T.SupportSpec("cube", 2), T.NoiseSpec("gaussian", 0.1)
    data = T.generate_dataset(tg, spec, noise, 4, 3)
    text = T.dataset_csv(data)
    lines = text.strip().split("\n")
    assert lines[0] == "x1,x2,y" and len(lines) == 5
    back = np.array([[float(v) for v in row.split(",")] for row in lines[1:]])
    assert back[:, :2].tobytes() == data.X.tobytes() and back[:, 2].tobytes() == data.Y.tobytes()
    assert '"seed": 3' in T.dataset_sidecar(tg, spec, noise, 4, 3)


@pytest.mark.parametrize("name,beta", [("constant", 1.0), ("affine", 2.0), ("cosine_product", 2.5),
                                       ("poly", 3.0), ("abs_power", 0.5)])
def test_target_description_round_trip(name, beta):
    tg = T.builtin_target(name, 2, beta, 1.0)
    back = T.target_from_description(tg.describe())
    x = np.random.default_rng(0).uniform(size=(10, 2))
    assert back.describe() == tg.describe()
    np.testing.assert_array_equal(back(x), tg(x))
    with pytest.raises(ValueError):
        T.target_from_description({"name": name, "d": 2})
