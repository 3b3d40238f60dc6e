import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from genctrl.linalg import (
    NilpotentAlgebra,
    PAULI,
    expm,
    expm_frechet,
    expm_frechet2,
    expm_frechet_multi,
    pauli_embed,
)


def taylor_expm(a, cutoff=1e-16):
    """Plain power series, summed until the term norm drops below ``cutoff``."""
    out = np.eye(len(a), dtype=complex)
    term = np.eye(len(a), dtype=complex)
    k = 1
    while True:
        term = term @ a / k
        out = out + term
        if np.abs(term).max() < cutoff:
            return out
        k += 1


def rand_complex(rng, n, scale=1.0):
    return scale * (rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))) / np.sqrt(2 * n)


def rel(a, b):
    return np.abs(a - b).max() / np.abs(b).max()


# -- pauli_embed ------------------------------------------------------------

def test_pauli_embed_qubit1_z():
    np.testing.assert_array_equal(np.diag(pauli_embed(1, "z")).real, [1, 1, -1, -1])


def test_pauli_embed_qubit2_z():
    np.testing.assert_array_equal(np.diag(pauli_embed(2, "z")).real, [1, -1, 1, -1])


def test_pauli_embed_rejects_bad_register():
    with pytest.raises(ValueError):
        pauli_embed(2, "x", m=1)
    with pytest.raises(ValueError):
        pauli_embed(3, "x", m=2)


@pytest.mark.parametrize("a", "xyz")
@pytest.mark.parametrize("b", "xyz")
def test_paulis_on_different_qubits_commute(a, b):
    p, q = pauli_embed(1, a), pauli_embed(2, b)
    np.testing.assert_array_equal(p @ q, q @ p)


def test_pauli_algebra():
    x, y, z = PAULI["x"], PAULI["y"], PAULI["z"]
    np.testing.assert_array_equal(x @ y, 1j * z)


# -- expm -------------------------------------------------------------------

def test_expm_zero_is_identity():
    np.testing.assert_allclose(expm(np.zeros((4, 4))), np.eye(4), rtol=0, atol=1e-15)


def test_expm_diagonal():
    np.testing.assert_allclose(expm(np.diag([1.0, -1.0])), np.diag([np.e, 1 / np.e]), rtol=1e-15)


def test_expm_matches_taylor_oracle():
    rng = np.random.default_rng(0)
    for _ in range(5):
        a = rand_complex(rng, 16)
        a /= np.linalg.norm(a, 1)
        assert rel(expm(a), taylor_expm(a)) < 1e-12


def test_expm_large_norm_uses_squaring():
    rng = np.random.default_rng(1)
    a = rand_complex(rng, 8, scale=20.0)
    h = a + a.conj().T
    u = expm(1j * h)
    np.testing.assert_allclose(u @ u.conj().T, np.eye(8), atol=1e-12)


def test_expm_rejects_bad_input():
    with pytest.raises(ValueError):
        expm(np.ones((2, 3)))
    with pytest.raises(ValueError):
        expm(np.array([[np.nan, 0], [0, 1]]))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 16))
def test_expm_similarity(seed, n):
    rng = np.random.default_rng(seed)
    a = rand_complex(rng, n, scale=2.0)
    s = np.eye(n) + 0.3 * rand_complex(rng, n)
    s_inv = np.linalg.inv(s)
    lhs = expm(s @ a @ s_inv)
    rhs = s @ expm(a) @ s_inv
    assert np.abs(lhs - rhs).max() < 1e-10 * max(1.0, np.abs(rhs).max())


# -- Frechet derivatives ----------------------------------------------------

def test_frechet_zero_direction():
    rng = np.random.default_rng(2)
    a = rand_complex(rng, 6)
    ea, l = expm_frechet(a, np.zeros_like(a))
    np.testing.assert_allclose(ea, expm(a), rtol=0, atol=1e-14)
    assert np.abs(l).max() == 0


def test_frechet_at_zero_is_direction():
    rng = np.random.default_rng(3)
    e = rand_complex(rng, 5)
    ea, l = expm_frechet(np.zeros((5, 5)), e)
    np.testing.assert_allclose(ea, np.eye(5), atol=1e-15)
    np.testing.assert_allclose(l, e, atol=1e-15)


def test_frechet_matches_central_difference():
    rng = np.random.default_rng(4)
    h = 1e-6
    for _ in range(3):
        a, e = rand_complex(rng, 16), rand_complex(rng, 16)
        _, l = expm_frechet(a, e)
        fd = (expm(a + h * e) - expm(a - h * e)) / (2 * h)
        assert rel(l, fd) < 1e-6


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), alpha=st.floats(-3, 3), beta=st.floats(-3, 3))
def test_frechet_linearity(seed, alpha, beta):
    rng = np.random.default_rng(seed)
    a, e1, e2 = (rand_complex(rng, 6) for _ in range(3))
    lhs = expm_frechet(a, alpha * e1 + beta * e2)[1]
    rhs = alpha * expm_frechet(a, e1)[1] + beta * expm_frechet(a, e2)[1]
    assert np.abs(lhs - rhs).max() < 1e-12 * max(1.0, np.abs(rhs).max())


def test_frechet_multi_agrees_with_single():
    rng = np.random.default_rng(5)
    a = rand_complex(rng, 4)
    es = [rand_complex(rng, 4) for _ in range(3)]
    ea, ls = expm_frechet_multi(a, es)
    for e, l in zip(es, ls):
        np.testing.assert_allclose(l, expm_frechet(a, e)[1], atol=1e-13)
    np.testing.assert_allclose(ea, expm(a), atol=1e-13)


def test_frechet2_vanishes_for_zero_direction():
    rng = np.random.default_rng(6)
    a, e = rand_complex(rng, 4), rand_complex(rng, 4)
    assert np.abs(expm_frechet2(a, np.zeros_like(a), e)).max() == 0


def test_frechet2_commuting_series_oracle():
    # e^{sE1 + tE2} = I + sE1 + tE2 + (sE1 + tE2)^2/2 + ...; the st coefficient is (E1E2 + E2E1)/2
    d1 = np.diag([0.3, -1.0, 2.0]).astype(complex)
    d2 = np.diag([1.5, 0.2, -0.7]).astype(complex)
    got = expm_frechet2(np.zeros((3, 3)), d1, d2)
    np.testing.assert_allclose(got, (d1 @ d2 + d2 @ d1) / 2, atol=1e-15)


def test_frechet2_matches_nested_difference():
    rng = np.random.default_rng(7)
    h = 1e-4
    for _ in range(3):
        a, e1, e2 = (rand_complex(rng, 16) for _ in range(3))
        fd = (expm(a + h * e1 + h * e2) - expm(a + h * e1 - h * e2)
              - expm(a - h * e1 + h * e2) + expm(a - h * e1 - h * e2)) / (4 * h * h)
        assert rel(expm_frechet2(a, e1, e2), fd) < 1e-5


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_frechet2_symmetry(seed):
    rng = np.random.default_rng(seed)
    a, e1, e2 = (rand_complex(rng, 5) for _ in range(3))
    lhs, rhs = expm_frechet2(a, e1, e2), expm_frechet2(a, e2, e1)
    assert np.abs(lhs - rhs).max() < 1e-12 * max(1.0, np.abs(rhs).max())


# -- batched nilpotent algebra ----------------------------------------------

def test_algebra_first_order_matches_block_routines():
    rng = np.random.default_rng(8)
    alg = NilpotentAlgebra.first_order(2)
    base = np.stack([rand_complex(rng, 6, scale=s) for s in (0.1, 3.0, 40.0)])
    dirs = np.stack([[rand_complex(rng, 6), rand_complex(rng, 6)] for _ in range(3)])
    out = alg.expm(alg.element(base, dirs))
    for b in range(3):
        ea, ls = expm_frechet_multi(base[b], list(dirs[b]))
        assert rel(out[b, 0], ea) < 1e-13
        for k in range(2):
            assert rel(out[b, alg.index[(k,)]], ls[k]) < 1e-12


def test_algebra_mixed_matches_second_derivative():
    rng = np.random.default_rng(9)
    alg = NilpotentAlgebra.mixed(1, 2)
    base = rand_complex(rng, 5)[None]
    dirs = np.stack([[rand_complex(rng, 5) for _ in range(3)]])
    out = alg.expm(alg.element(base, dirs))
    for i in range(2):
        want = expm_frechet2(base[0], dirs[0, 0], dirs[0, 1 + i])
        assert rel(out[0, alg.index[(0, 1 + i)]], want) < 1e-12
