"""Dense complex linear algebra used throughout the package.

Pauli operators embedded in a two-qubit register, a Pade(13)
scaling-and-squaring matrix exponential, and first and second directional
(Frechet) derivatives of the exponential obtained from block upper-triangular
augmented matrices.
"""

import numpy as np

__all__ = [
    "PAULI",
    "pauli_embed",
    "dagger",
    "expm",
    "expm_frechet",
    "expm_frechet2",
    "expm_frechet_multi",
    "NilpotentAlgebra",
]

PAULI = {
    "i": np.eye(2, dtype=complex),
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
}

# Pade(13) coefficients and the 1-norm threshold from Higham (2005).
_B13 = (
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
)
_THETA13 = 5.371920351148152


def pauli_embed(qubit, axis, m=2):
    """Return sigma_axis acting on ``qubit`` (1-based) of an ``m``-qubit register.

    Qubit 1 is the left-most tensor factor.
    """
    if not 1 <= m <= 2:
        raise ValueError(f"register size m={m} not supported (1 <= m <= 2)")
    if not 1 <= qubit <= m:
        raise ValueError(f"qubit index {qubit} out of range for m={m}")
    if axis not in ("x", "y", "z"):
        raise ValueError(f"unknown Pauli axis {axis!r}")
    out = np.ones((1, 1), dtype=complex)
    for k in range(1, m + 1):
        out = np.kron(out, PAULI[axis] if k == qubit else PAULI["i"])
    return out


def dagger(a):
    return np.conj(np.asarray(a)).T


def _check_square(a, name="A"):
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite entries")
    return a


def expm(a):
    """Matrix exponential by scaling and squaring with a degree-13 Pade approximant."""
    a = _check_square(a)
    n = a.shape[0]
    norm = np.linalg.norm(a, 1)
    s = 0
    if norm > _THETA13:
        s = int(np.ceil(np.log2(norm / _THETA13)))
        a = a / 2.0**s
    b = _B13
    ident = np.eye(n, dtype=complex)
    a2 = a @ a
    a4 = a2 @ a2
    a6 = a2 @ a4
    u = a @ (
        a6 @ (b[13] * a6 + b[11] * a4 + b[9] * a2)
        + b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * ident
    )
    v = (
        a6 @ (b[12] * a6 + b[10] * a4 + b[8] * a2)
        + b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * ident
    )
    r = np.linalg.solve(v - u, v + u)
    for _ in range(s):
        r = r @ r
    return r


def expm_frechet(a, e):
    """Return ``(expm(A), L(A, E))`` with L the Frechet derivative d/ds e^{A+sE} at s=0.

    Uses the identity exp([[A, E], [0, A]]) = [[e^A, L], [0, e^A]].
    """
    a = _check_square(a)
    e = _check_square(e, "E")
    if a.shape != e.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {e.shape}")
    n = a.shape[0]
    big = np.zeros((2 * n, 2 * n), dtype=complex)
    big[:n, :n] = a
    big[n:, n:] = a
    big[:n, n:] = e
    x = expm(big)
    return x[:n, :n].copy(), x[:n, n:].copy()


def expm_frechet_multi(a, directions):
    """Exponential of A and its Frechet derivatives along several directions at once.

    One exponential of the (k+1)-block matrix with A on the diagonal and the
    directions along the first block row.  Returns ``(expm(A), [L(A, E_k)])``.
    """
    a = _check_square(a)
    n = a.shape[0]
    k = len(directions)
    big = np.zeros(((k + 1) * n, (k + 1) * n), dtype=complex)
    for b in range(k + 1):
        big[b * n:(b + 1) * n, b * n:(b + 1) * n] = a
    for b, e in enumerate(directions, start=1):
        e = _check_square(e, "E")
        if e.shape != a.shape:
            raise ValueError(f"dimension mismatch: {a.shape} vs {e.shape}")
        big[:n, b * n:(b + 1) * n] = e
    x = expm(big)
    return x[:n, :n].copy(), [x[:n, b * n:(b + 1) * n].copy() for b in range(1, k + 1)]


def _mixed_block(a, e1, e2):
    # exp(A + s E1 + t E2) with s^2 = t^2 = 0 represented over the basis {1, s, t, st};
    # the (1, st) block is the mixed second derivative.
    n = a.shape[0]
    big = np.zeros((4 * n, 4 * n), dtype=complex)
    for b in range(4):
        big[b * n:(b + 1) * n, b * n:(b + 1) * n] = a
    big[0:n, n:2 * n] = e1
    big[0:n, 2 * n:3 * n] = e2
    big[n:2 * n, 3 * n:] = e2
    big[2 * n:3 * n, 3 * n:] = e1
    return expm(big)


def expm_frechet2(a, e1, e2, full=False):
    """Mixed second directional derivative d^2/ds dt e^{A + s E1 + t E2} at s=t=0.

    With ``full=True`` also returns ``expm(A)``, ``L(A, E1)`` and ``L(A, E2)``
    which come out of the same augmented exponential.
    """
    a = _check_square(a)
    e1 = _check_square(e1, "E1")
    e2 = _check_square(e2, "E2")
    if not a.shape == e1.shape == e2.shape:
        raise ValueError(f"dimension mismatch: {a.shape}, {e1.shape}, {e2.shape}")
    n = a.shape[0]
    x = _mixed_block(a, e1, e2)
    second = x[:n, 3 * n:].copy()
    if full:
        return x[:n, :n].copy(), x[:n, n:2 * n].copy(), x[:n, 2 * n:3 * n].copy(), second
    return second


class NilpotentAlgebra:
    """Matrices with coefficients in a truncated algebra of commuting nilpotent symbols.

    An element is sum_m X_m eps^m over a downward-closed set of square-free
    monomials m (tuples of symbol indices); any product that leaves the set
    vanishes.  Exponentiating A + sum_k E_k eps_k in this algebra yields the
    same blocks as exponentiating the block upper-triangular augmented matrix,
    but only ever multiplies n x n matrices.  Elements are stored as arrays of
    shape (batch, n_monomials, n, n) so that many slices are handled at once.
    """

    def __init__(self, monomials):
        monos = [tuple(sorted(m)) for m in monomials]
        if () not in monos:
            monos.insert(0, ())
        monos.sort(key=lambda m: (len(m), m))
        self.monomials = monos
        self.index = {m: k for k, m in enumerate(monos)}
        table = {}
        for a, ma in enumerate(monos):
            for b, mb in enumerate(monos):
                if set(ma) & set(mb):
                    continue
                mc = tuple(sorted(ma + mb))
                if mc in self.index:
                    table.setdefault(a, []).append((b, self.index[mc]))
        # products with the unit monomial are handled in bulk; only cross terms are tabulated
        self._cross = []
        for a, pairs in sorted(table.items()):
            pairs = [(b, c) for b, c in pairs if b != 0]
            if a != 0 and pairs:
                self._cross.append((a, np.array([p[0] for p in pairs]),
                                    np.array([p[1] for p in pairs])))
        self._degree_groups = []
        for deg in range(max(len(m) for m in monos) + 1):
            self._degree_groups.append([k for k, m in enumerate(monos) if len(m) == deg])

    @classmethod
    def first_order(cls, k):
        """Symbols eps_1..eps_k with all pairwise products dropped."""
        return cls([()] + [(i,) for i in range(k)])

    @classmethod
    def mixed(cls, k, p):
        """Symbols eps_1..eps_k and delta_1..delta_p keeping only eps_a delta_i cross terms."""
        monos = [()] + [(i,) for i in range(k + p)]
        monos += [(a, k + i) for a in range(k) for i in range(p)]
        return cls(monos)

    def element(self, base, directions):
        """Build A + sum_k E_k eps_k from ``base`` (b, n, n) and ``directions`` (b, K, n, n)."""
        base = np.asarray(base, dtype=complex)
        b, n, _ = base.shape
        x = np.zeros((b, len(self.monomials), n, n), dtype=complex)
        x[:, 0] = base
        directions = np.asarray(directions, dtype=complex)
        for k in range(directions.shape[1]):
            x[:, self.index[(k,)]] = directions[:, k]
        return x

    def mul(self, x, y):
        b, m, n, _ = y.shape
        # x_0 @ y_k for every k as one wide product
        wide = y.transpose(0, 2, 1, 3).reshape(b, n, m * n)
        out = (x[:, 0] @ wide).reshape(b, n, m, n).transpose(0, 2, 1, 3)
        # x_k @ y_0 for every k != 0 as one tall product
        tall = x[:, 1:].reshape(b, (m - 1) * n, n)
        out[:, 1:] += (tall @ y[:, 0]).reshape(b, m - 1, n, n)
        for a, bs, cs in self._cross:
            out[:, cs] += x[:, a:a + 1] @ y[:, bs]
        return out

    def _solve(self, q, p):
        # q x = p, degree by degree: q_0 x_m = p_m - sum_{m1 != ()} q_m1 x_{m - m1}
        x = np.zeros_like(p)
        q0 = q[:, 0]
        b, _, n, _ = p.shape
        for group in self._degree_groups:
            if not group:
                continue
            rhs = p[:, group].copy()
            if group != [0]:
                partial = self.mul(q, x)
                q0x = q0[:, None] @ x[:, group]
                rhs -= partial[:, group] - q0x
            flat = rhs.transpose(0, 2, 1, 3).reshape(b, n, len(group) * n)
            sol = np.linalg.solve(q0, flat)
            x[:, group] = sol.reshape(b, n, len(group), n).transpose(0, 2, 1, 3)
        return x

    def _norm(self, x):
        # 1-norm of the equivalent block upper-triangular matrix is bounded by this sum
        return np.abs(x).sum(axis=-2).max(axis=-1).sum(axis=1)

    def expm(self, x):
        """Exponential of every element in the batch (Pade 13, scaling and squaring)."""
        x = np.asarray(x, dtype=complex)
        if not np.all(np.isfinite(x)):
            raise ValueError("non-finite entries")
        norms = self._norm(x)
        s = np.zeros(len(x), dtype=int)
        big = norms > _THETA13
        s[big] = np.ceil(np.log2(norms[big] / _THETA13)).astype(int)
        out = np.empty_like(x)
        for sv in np.unique(s):
            sel = np.flatnonzero(s == sv)
            out[sel] = self._expm_scaled(x[sel] / 2.0**sv, sv)
        return out

    def _expm_scaled(self, a, s):
        b = _B13
        n = a.shape[-1]
        ident = np.zeros_like(a)
        ident[:, 0] = np.eye(n)
        a2 = self.mul(a, a)
        a4 = self.mul(a2, a2)
        a6 = self.mul(a2, a4)
        u = self.mul(a, self.mul(a6, b[13] * a6 + b[11] * a4 + b[9] * a2)
                     + b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * ident)
        v = (self.mul(a6, b[12] * a6 + b[10] * a4 + b[8] * a2)
             + b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * ident)
        r = self._solve(v - u, v + u)
        for _ in range(s):
            r = self.mul(r, r)
        return r
