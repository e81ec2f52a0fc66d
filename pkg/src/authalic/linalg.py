"""Sparse SPD factorization with a fill-reducing preorder, plus solves.

``factorize`` computes U and P with U'U = P'MP, where P comes from a
minimum-degree ordering; ``CholeskyFactor.solve`` then answers Mx = r by the
usual pair of triangular solves.  The factorization is backed by SuperLU in
symmetric mode (diagonal pivoting on the preordered matrix), which yields
M = P (LDL') P' with D > 0 exactly when M is SPD; the upper Cholesky factor
is D^(1/2) L'.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import FactorizationError

# Relative symmetry slack on input matrices and relative pivot floor.
SYMMETRY_RTOL = 1e-10
PIVOT_RTOL = 1e-12


def _as_symmetric_csc(m):
    if sp.issparse(m):
        m = m.tocsc()
    else:
        m = sp.csc_matrix(np.atleast_2d(np.asarray(m, dtype=float)))
    if m.shape[0] != m.shape[1]:
        raise FactorizationError(f"matrix is {m.shape[0]}x{m.shape[1]}, not square")
    if not np.isfinite(m.data).all():
        raise FactorizationError("matrix has non-finite entries")
    scale = max(abs(m.data).max(initial=0.0), 1.0)
    asym = abs(m - m.T)
    if asym.nnz and asym.data.max() > SYMMETRY_RTOL * scale:
        raise FactorizationError("matrix is not symmetric")
    return m


class CholeskyFactor:
    """Preordered Cholesky factorization of a sparse SPD matrix.

    Immutable once built; concurrent solves are fine.  ``perm`` is the
    permutation vector p of the matrix P with P[i, p[i]] = 1, so that
    ``upper().T @ upper() == M[p][:, p]`` up to roundoff.
    """

    def __init__(self, lu, n):
        self._lu = lu
        self.n = n
        self._upper = None

    @property
    def perm(self):
        return self._lu.perm_c

    def upper(self):
        """Upper-triangular factor U with U'U = P'MP (computed lazily)."""
        if self._upper is None:
            d = self._lu.U.diagonal()
            self._upper = (sp.diags(np.sqrt(d)) @ self._lu.L.T).tocsr()
        return self._upper

    def solve(self, r):
        """Solve Mx = r; accepts a vector or an (n, k) block of right sides."""
        r = np.asarray(r, dtype=float)
        if r.shape[0] != self.n:
            raise ValueError(f"right-hand side has length {r.shape[0]}, expected {self.n}")
        return self._lu.solve(r)


def factorize(m):
    """Factor a sparse symmetric positive definite matrix.

    Raises FactorizationError when the matrix is not square/symmetric or a
    pivot drops below PIVOT_RTOL times the largest diagonal entry.
    """
    m = _as_symmetric_csc(m)
    n = m.shape[0]
    try:
        lu = spla.splu(
            m,
            permc_spec="MMD_AT_PLUS_A",
            diag_pivot_thresh=0.0,
            options=dict(SymmetricMode=True),
        )
    except RuntimeError as exc:  # exactly singular
        raise FactorizationError(f"matrix not SPD: {exc}") from exc
    pivots = lu.U.diagonal()
    floor = PIVOT_RTOL * float(m.diagonal().max(initial=0.0))
    bad = np.flatnonzero(pivots <= floor)
    if bad.size:
        k = int(bad[0])
        raise FactorizationError(
            f"matrix not SPD: pivot {k} is {pivots[k]:g}", pivot_index=k)
    return CholeskyFactor(lu, n)


def solve(factor, r):
    """Solve Mx = r against a previously computed factor."""
    return factor.solve(r)
