"""Small shared linear-algebra helpers built on raw LAPACK wrappers.

The filters and the dynamics sit in tight per-step loops, so the usual
scipy.linalg convenience functions (cho_factor/cho_solve) are too
dispatch-heavy here.  dpotrf/dpotrs do the same symmetric positive-definite
factorization at a fraction of the call overhead and report indefiniteness
through their info flag instead of an exception.
"""

import numpy as np
from scipy.linalg.lapack import dpotrf, dpotrs


class SpdError(RuntimeError):
    """A matrix expected to be symmetric positive definite was not."""


def solve_spd(mat, rhs):
    """Solve mat @ x = rhs via Cholesky factorization (no explicit inverse).

    Raises SpdError when the factorization fails, i.e. mat is not positive
    definite to working precision.
    """
    c, info = dpotrf(mat, lower=1)
    if info != 0:
        raise SpdError(f"Cholesky factorization failed (info={info})")
    x, info = dpotrs(c, rhs, lower=1)
    if info != 0:
        raise SpdError(f"triangular solve failed (info={info})")
    return x


def cholesky_lower(mat):
    """Lower-triangular Cholesky factor of a positive-definite matrix."""
    c, info = dpotrf(mat, lower=1)
    if info != 0:
        raise SpdError(f"Cholesky factorization failed (info={info})")
    # dpotrf leaves the untouched upper triangle of the input in place.
    return np.tril(c)


def symmetrize(mat):
    """Average a matrix with its transpose (drift control after updates)."""
    return 0.5 * (mat + mat.T)
