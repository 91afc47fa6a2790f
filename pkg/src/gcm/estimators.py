"""Estimators for the growth curve model.

First stage: the invariant quadratic covariance estimator sigma_hat = Y'WY
with W = (I - P_X)/(n - m). Second stage: generalized least squares with
the first-stage estimate plugged in, giving the two-stage estimators of
theta and of gamma = C theta D'. A pseudo-inverse reformulation through
H = sigma^{-1} (P_Z sigma^{-1} P_Z)^+ is kept as an independent
verification path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import linalg, model
from .errors import DimensionMismatch, NotSpd, TooFewSamples


@dataclass(frozen=True, eq=False)
class SigmaHat:
    """First-stage covariance estimate Y'WY and its divisor n - rank(X)."""

    value: np.ndarray
    divisor: int


@dataclass(frozen=True, eq=False)
class GammaHat:
    """Estimate of gamma = C theta D' for a given contrast."""

    value: np.ndarray
    contrast: model.Contrast


@dataclass(frozen=True, eq=False)
class HMatrix:
    """The p x p matrix sigma^{-1} (P_Z sigma^{-1} P_Z)^+.

    Satisfies H Z (Z'Z)^{-1} = sigma^{-1} Z (Z' sigma^{-1} Z)^{-1}, which is
    what makes the pseudo-inverse route agree with the solve route.
    """

    value: np.ndarray


def _check_contrast(contrast: model.Contrast, design: model.Design) -> None:
    if contrast.C.shape[1] != design.m:
        raise DimensionMismatch(
            f"C has {contrast.C.shape[1]} columns but X has {design.m}"
        )
    if contrast.D.shape[1] != design.q:
        raise DimensionMismatch(
            f"D has {contrast.D.shape[1]} columns but Z has {design.q}"
        )


def _gls_theta(design: model.Design, y: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    """Solve the normal equations X'X theta Z' sigma^{-1} Z = X'Y sigma^{-1} Z.

    Both coefficient matrices are symmetric positive definite, so the
    estimator (X'X)^{-1} X' Y sigma^{-1} Z (Z' sigma^{-1} Z)^{-1} is
    evaluated with two Cholesky solves and no explicit inverse.
    """
    x, z = design.X, design.Z
    a = linalg.solve_spd(x.T @ x, x.T @ y, "X'X")
    b = linalg.solve_spd(sigma, z, "sigma")
    g = z.T @ b
    return linalg.solve_spd(g, (a @ b).T, "Z' sigma^{-1} Z").T


def sigma_hat(data: model.Dataset) -> SigmaHat:
    """Invariant quadratic covariance estimator Y'WY, W = (I - P_X)/(n - m).

    Computed through the residuals (I - P_X) Y rather than the explicit
    projector, symmetrized, and checked for positive definiteness. Raises
    TooFewSamples when n - m < p (the estimate would be singular) and
    NotSpd on degenerate data such as noise-free observations.
    """
    design = data.design
    model.validate(design)
    n, m, p = design.n, design.m, design.p
    if n - m < p:
        raise TooFewSamples(
            f"need n - m >= p for an invertible first stage, got n={n}, m={m}, p={p}"
        )
    x, y = design.X, data.Y
    resid = y - x @ linalg.solve_spd(x.T @ x, x.T @ y, "X'X")
    s = resid.T @ resid / (n - m)
    s = (s + s.T) / 2.0
    linalg.check_spd(s, "first-stage covariance estimate")
    return SigmaHat(value=s, divisor=n - m)


def theta_hat_known(data: model.Dataset, sigma0: np.ndarray) -> np.ndarray:
    """Least-squares estimator of theta when the row covariance is known."""
    model.validate(data.design)
    sigma0 = linalg.check_spd(sigma0, "sigma0")
    if sigma0.shape[0] != data.design.p:
        raise DimensionMismatch(
            f"sigma0 is {sigma0.shape[0]} x {sigma0.shape[0]} but Z has {data.design.p} rows"
        )
    return _gls_theta(data.design, data.Y, sigma0)


def gamma_hat_known(
    data: model.Dataset, sigma0: np.ndarray, contrast: model.Contrast
) -> GammaHat:
    """Known-covariance BLUE of gamma = C theta D'."""
    _check_contrast(contrast, data.design)
    theta = theta_hat_known(data, sigma0)
    return GammaHat(value=contrast.apply(theta), contrast=contrast)


def h_matrix(sigma, z: np.ndarray) -> HMatrix:
    """Compute sigma^{-1} (P_Z sigma^{-1} P_Z)^+ for an SPD sigma.

    Accepts either a SigmaHat or a plain SPD matrix (e.g. the true
    covariance, for convergence diagnostics).
    """
    s = sigma.value if isinstance(sigma, SigmaHat) else sigma
    s = linalg.check_spd(s, "sigma")
    z = linalg.as_matrix(z, "Z")
    if z.shape[0] != s.shape[0]:
        raise DimensionMismatch(f"Z has {z.shape[0]} rows but sigma is {s.shape[0]} x {s.shape[0]}")
    s_inv = linalg.inv_spd(s, "sigma")
    p_z = linalg.orth_projector(z)
    return HMatrix(value=s_inv @ linalg.moore_penrose(p_z @ s_inv @ p_z))


def two_stage_theta(data: model.Dataset) -> np.ndarray:
    """Two-stage estimator of theta: GLS with sigma_hat plugged in."""
    sig = sigma_hat(data)
    return _gls_theta(data.design, data.Y, sig.value)


def two_stage_gamma(data: model.Dataset, contrast: model.Contrast) -> GammaHat:
    """Two-stage generalized least-squares estimator of gamma = C theta D'.

    Production path: two SPD solves against sigma_hat. Equals
    C @ two_stage_theta(data) @ D' by construction.
    """
    _check_contrast(contrast, data.design)
    return GammaHat(value=contrast.apply(two_stage_theta(data)), contrast=contrast)


def two_stage_gamma_pinv(data: model.Dataset, contrast: model.Contrast) -> GammaHat:
    """Verification path for the two-stage estimator via the H matrix.

    Evaluates C (X'X)^{-1} X' Y H K D' with K = Z (Z'Z)^{-1}. Exercises the
    pseudo-inverse identity Z (Z' S^{-1} Z)^{-1} Z' = (P_Z S^{-1} P_Z)^+ and
    must agree with :func:`two_stage_gamma` to tight tolerance.
    """
    _check_contrast(contrast, data.design)
    design = data.design
    sig = sigma_hat(data)
    h = h_matrix(sig, design.Z).value
    x, z, y = design.X, design.Z, data.Y
    k = linalg.solve_spd(z.T @ z, z.T, "Z'Z").T
    a = linalg.solve_spd(x.T @ x, x.T @ y, "X'X")
    theta = a @ h @ k
    return GammaHat(value=contrast.apply(theta), contrast=contrast)
