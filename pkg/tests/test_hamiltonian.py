import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hopflax.hamiltonian import ConjugateHamiltonian, by_name, eval_conjugate, register

vec = arrays(np.float64, 2, elements=st.floats(-50, 50))


@pytest.mark.parametrize(
    "h, q, expected",
    [
        (ConjugateHamiltonian.quadratic(), (0.0, 0.0), 0.0),
        (ConjugateHamiltonian.quadratic(), (3.0, 4.0), 12.5),
        (ConjugateHamiltonian.anisotropic(np.eye(2)), (1.0, 1.0), 1.0),
        (ConjugateHamiltonian.quadratic(2.0), (3.0, 4.0), 25.0),
        (ConjugateHamiltonian.anisotropic([[2.0, 0.5], [0.5, 1.0]]), (1.0, -2.0), 2.0),
    ],
)
def test_known_values(h, q, expected):
    assert eval_conjugate(h, q) == pytest.approx(expected, abs=1e-15)


def test_vectorised_matches_pointwise():
    h = ConjugateHamiltonian.anisotropic([[1.5, -0.3], [-0.3, 0.7]])
    q = np.random.default_rng(0).normal(size=(50, 2))
    np.testing.assert_array_equal(h(q), [h(r) for r in q])


def test_fenchel_young_on_grid():
    h = ConjugateHamiltonian.quadratic()
    g = np.linspace(-3, 3, 13)
    pts = np.array([[a, b] for a in g for b in g])
    for p in pts:
        gap = 0.5 * p @ p + h(pts) - pts @ p
        assert np.all(gap >= -1e-12)
        assert np.all((np.abs(gap) < 1e-12) == np.all(pts == p, axis=1))


@given(vec, vec)
def test_convexity(q1, q2):
    for h in (ConjugateHamiltonian.quadratic(0.3),
              ConjugateHamiltonian.anisotropic([[2.0, 0.9], [0.9, 1.0]])):
        mid = h((q1 + q2) / 2)
        assert mid <= (h(q1) + h(q2)) / 2 + 1e-9 * (1 + abs(mid))


@given(vec)
def test_origin_is_the_minimum(q):
    h = ConjugateHamiltonian.anisotropic([[2.0, 0.9], [0.9, 1.0]])
    assert h(q) >= h(np.zeros(2)) == 0.0


@pytest.mark.parametrize("m", [[[1, 2], [0, 1]], [[1, 0], [0, -1]], [[1, 2], [2, 1]]])
def test_anisotropic_rejects_bad_matrices(m):
    with pytest.raises(ValueError):
        ConjugateHamiltonian.anisotropic(m)


def test_quadratic_rejects_nonpositive_scale():
    with pytest.raises(ValueError):
        ConjugateHamiltonian.quadratic(0.0)


def test_custom_and_registry():
    quartic = lambda q: 0.25 * np.sum(q**2, axis=1) ** 2  # noqa: E731
    register("quartic", lambda: ConjugateHamiltonian.custom(quartic))
    h = by_name("quartic")
    assert not h.is_quadratic
    assert h((1.0, 1.0)) == pytest.approx(1.0)
    assert by_name("quadratic", 2.0)((1.0, 0.0)) == 1.0
    with pytest.raises(ValueError, match="unknown"):
        by_name("nope")
