"""Gaussian filtering primitives: linear KF, EKF, UKF, numeric Jacobians.

Covariances are re-symmetrized after every step and measurement updates use
the Joseph form, which stays positive semidefinite under the very small
encoder noise used here.  Model Jacobians are central finite differences;
the dynamics make closed forms impractical for generic chain lengths.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import SpdError, cholesky_lower, solve_spd, symmetrize


class FilterError(RuntimeError):
    """A filter step could not be completed."""


@dataclass
class GaussianBelief:
    """Mean vector and symmetric PSD covariance; the universal filter state."""

    mean: np.ndarray
    cov: np.ndarray

    def copy(self):
        return GaussianBelief(self.mean.copy(), self.cov.copy())


@dataclass(frozen=True)
class SigmaScaling:
    """Unscented-transform scaling; conventional defaults."""

    alpha: float = 1e-3
    beta: float = 2.0
    kappa: float = 0.0


@dataclass
class SigmaSet:
    """2L+1 sigma points with their mean and covariance weights."""

    points: np.ndarray  # (2L+1, L)
    mean_weights: np.ndarray
    cov_weights: np.ndarray
    scaling: SigmaScaling


def kf_predict(belief, F, Q, u_add=None):
    """Linear prediction: mean <- F mean (+ u_add), cov <- F P F^T + Q."""
    mean = F @ belief.mean
    if u_add is not None:
        mean = mean + u_add
    cov = symmetrize(F @ belief.cov @ F.T + Q)
    return GaussianBelief(mean, cov)


def kf_update(belief, z, H, R, predicted=None):
    """Joseph-stabilized measurement update.

    ``predicted`` overrides the default H @ mean as the predicted
    measurement, which is how the EKF feeds in its nonlinear h(x*).
    """
    P = belief.cov
    PHt = P @ H.T
    S = H @ PHt + R
    try:
        K = solve_spd(S, PHt.T).T
    except SpdError as exc:
        raise FilterError(f"innovation covariance not positive definite: {exc}") from exc
    if predicted is None:
        predicted = H @ belief.mean
    mean = belief.mean + K @ (np.asarray(z, dtype=float) - predicted)
    A = K @ H
    np.negative(A, out=A)
    A.flat[:: A.shape[0] + 1] += 1.0
    cov = symmetrize(A @ P @ A.T + K @ R @ K.T)
    return GaussianBelief(mean, cov)


def numerical_jacobian(f, x, eps=None):
    """Central-difference Jacobian of f at x, column by column.

    The default step scales with the coordinate magnitude,
    1e-6 * max(1, |x_j|).
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    xp = x.copy()
    J = None
    steps = np.empty(n)
    for j in range(n):
        xj = x[j]
        step = eps if eps is not None else 1e-6 * max(1.0, abs(xj))
        steps[j] = step
        xp[j] = xj + step
        fp = f(xp)
        xp[j] = xj - step
        fm = f(xp)
        xp[j] = xj
        if J is None:
            J = np.empty((fp.size, n))
        np.subtract(fp, fm, out=J[:, j])
    J /= 2.0 * steps
    if not np.isfinite(J).all():
        bad = int(np.where(~np.isfinite(J).all(axis=0))[0][0])
        raise FilterError(f"non-finite function value while differentiating column {bad}")
    return J


def ekf_step(belief, f, h, Q, R, z):
    """One EKF predict/update cycle with finite-difference linearization.

    F is linearized at the previous mean, H at the predicted mean; the
    innovation uses h evaluated at the predicted mean.
    """
    F = numerical_jacobian(f, belief.mean)
    mean_pred = f(belief.mean)
    cov_pred = symmetrize(F @ belief.cov @ F.T + Q)
    predicted = GaussianBelief(mean_pred, cov_pred)
    H = numerical_jacobian(h, mean_pred)
    return kf_update(predicted, z, H, R, predicted=h(mean_pred))


def _sqrt_psd(mat):
    """Cholesky factor with jitter escalation for marginal PSD loss."""
    jitter = 0.0
    while True:
        try:
            if jitter == 0.0:
                return cholesky_lower(mat)
            return cholesky_lower(mat + jitter * np.eye(mat.shape[0]))
        except SpdError:
            jitter = 1e-12 if jitter == 0.0 else jitter * 10.0
            if jitter > 1e-6:
                raise FilterError(
                    "covariance not positive semidefinite within jitter budget"
                ) from None


def sigma_points(mean, cov, scaling: SigmaScaling):
    """Symmetric sigma set mean +/- columns of sqrt((L+lambda) P)."""
    L = mean.size
    lam = scaling.alpha ** 2 * (L + scaling.kappa) - L
    c = L + lam
    if c == 0.0:
        raise FilterError("degenerate sigma scaling: L + lambda is zero")
    A = _sqrt_psd(c * cov).T  # rows are the scaled columns of the factor
    pts = np.empty((2 * L + 1, L))
    pts[0] = mean
    pts[1: L + 1] = mean + A
    pts[L + 1:] = mean - A
    wm = np.full(2 * L + 1, 0.5 / c)
    wm[0] = lam / c
    wc = wm.copy()
    wc[0] += 1.0 - scaling.alpha ** 2 + scaling.beta
    return SigmaSet(pts, wm, wc, scaling)


def _propagate(fn, pts):
    return np.array([fn(p) for p in pts])


def ukf_step(belief, f, h, Q, R, z, scaling=SigmaScaling()):
    """One UKF cycle: unscented prediction, redraw, unscented update."""
    sig = sigma_points(belief.mean, belief.cov, scaling)
    Y = _propagate(f, sig.points)
    mean_pred = sig.mean_weights @ Y
    dY = Y - mean_pred
    cov_pred = symmetrize((dY.T * sig.cov_weights) @ dY + Q)

    sig2 = sigma_points(mean_pred, cov_pred, scaling)
    Z = _propagate(h, sig2.points)
    z_pred = sig2.mean_weights @ Z
    dZ = Z - z_pred
    S = (dZ.T * sig2.cov_weights) @ dZ + R
    dX = sig2.points - mean_pred
    Pxz = (dX.T * sig2.cov_weights) @ dZ
    try:
        K = solve_spd(S, Pxz.T).T
    except SpdError as exc:
        raise FilterError(f"innovation covariance not positive definite: {exc}") from exc
    mean = mean_pred + K @ (np.asarray(z, dtype=float) - z_pred)
    cov = symmetrize(cov_pred - K @ S @ K.T)
    return GaussianBelief(mean, cov)
