"""Fourier multiplier operators acting per time slice on spatial modes.

Every operator here is an exact multiplier in the discrete Fourier algebra,
so compositions satisfy their operator identities (idempotence, right
inverses, semigroup laws) to rounding error by construction. Spatial zero
modes are handled explicitly: the Leray projector is the identity on means,
the inverse Laplacian and the inverse divergences annihilate them, and
callers that need mean-free inputs are validated rather than silently
projected.
"""

from __future__ import annotations

import numpy as np

from .field import Field
from .grid import Grid4


def _k_components(grid: Grid4):
    """Spatial wavenumbers broadcast over spectral arrays, plus |k|^2."""
    _, k1, k2, k3 = grid.k_broadcast()
    ks = [k1.astype(np.float64), k2.astype(np.float64), k3.astype(np.float64)]
    ksq = grid.k_sq_spatial()
    return ks, ksq


def _safe_inv(ksq):
    """1/|k|^2 with the zero mode mapped to 0."""
    inv = np.where(ksq > 0, ksq, 1.0)
    inv = 1.0 / inv
    return np.where(ksq > 0, inv, 0.0)


def _vec_spectral(f: Field):
    if f.rank != 1:
        raise ValueError("expected a vector field")
    return f.spectral


def _div_rel_defect(f: Field) -> float:
    """Relative size of div f measured against the gradient scale of f."""
    spec = _vec_spectral(f)
    ks, ksq = _k_components(f.grid)
    div = sum(1j * ks[a] * spec[..., a] for a in range(3))
    num = float(np.abs(div).max())
    den = float((np.sqrt(ksq)[..., None] * np.abs(spec)).max())
    if den == 0.0:
        return 0.0
    return num / den


def p_neq0(f: Field) -> Field:
    """Remove the spatial mean of every time slice."""
    spec = f.spectral.copy()
    spec[:, 0, 0, 0, ...] = 0.0
    return Field.from_spectral(spec, f.grid)


def leray(f: Field) -> Field:
    """Helmholtz projection onto divergence-free fields, identity on means."""
    spec = _vec_spectral(f)
    ks, ksq = _k_components(f.grid)
    inv = _safe_inv(ksq)
    kdotu = sum(ks[a] * spec[..., a] for a in range(3))
    out = np.empty_like(spec)
    for a in range(3):
        out[..., a] = spec[..., a] - ks[a] * inv * kdotu
    return Field.from_spectral(out, f.grid)


def frac_laplacian(f: Field, alpha: float) -> Field:
    """(-Laplace)^alpha for alpha >= 0; the zero mode is annihilated."""
    if alpha < 0:
        raise ValueError("alpha must be nonnegative; use inv_laplacian")
    if alpha == 0:
        return f
    _, ksq = _k_components(f.grid)
    mult = ksq ** alpha
    spec = f.spectral
    if f.rank > 0:
        mult = mult.reshape(mult.shape + (1,) * f.rank)
    return Field.from_spectral(spec * mult, f.grid)


def inv_laplacian(f: Field) -> Field:
    """Inverse Laplacian with zero mode mapped to zero."""
    _, ksq = _k_components(f.grid)
    mult = -_safe_inv(ksq)
    spec = f.spectral
    if f.rank > 0:
        mult = mult.reshape(mult.shape + (1,) * f.rank)
    return Field.from_spectral(spec * mult, f.grid)


def curl(f: Field) -> Field:
    spec = _vec_spectral(f)
    ks, _ = _k_components(f.grid)
    out = np.empty_like(spec)
    out[..., 0] = 1j * (ks[1] * spec[..., 2] - ks[2] * spec[..., 1])
    out[..., 1] = 1j * (ks[2] * spec[..., 0] - ks[0] * spec[..., 2])
    out[..., 2] = 1j * (ks[0] * spec[..., 1] - ks[1] * spec[..., 0])
    return Field.from_spectral(out, f.grid)


def inv_div_sym(f: Field, tol: float = 1e-10) -> Field:
    """Symmetric traceless right inverse of the tensor divergence.

    Requires a mean-free vector input; raises otherwise. The output R
    satisfies div R = f and R = R^T with tr R = 0 mode by mode.
    """
    if not f.is_mean_free(tol):
        raise ValueError("inv_div_sym needs a mean-free input field")
    spec = _vec_spectral(f)
    ks, ksq = _k_components(f.grid)
    inv = _safe_inv(ksq)
    kdotw = sum(ks[a] * spec[..., a] for a in range(3))
    out = np.empty(spec.shape[:-1] + (3, 3), dtype=np.complex128)
    half = 0.5j * inv * kdotw
    for a in range(3):
        for b in range(a, 3):
            term = -1j * inv * (ks[a] * spec[..., b] + ks[b] * spec[..., a])
            term = term + half * (ks[a] * ks[b] * inv)
            if a == b:
                term = term + half
            out[..., a, b] = term
            if a != b:
                out[..., b, a] = term
    return Field.from_spectral(out, f.grid)


def inv_div_skew(f: Field, tol: float = 1e-8) -> Field:
    """Skew-symmetric right inverse of the tensor divergence.

    Defined by R_ij = eps_ijk (-Laplace)^{-1} (curl f)_k, valid on
    divergence-free mean-free inputs; both conditions are checked.
    """
    if not f.is_mean_free(tol):
        raise ValueError("inv_div_skew needs a mean-free input field")
    defect = _div_rel_defect(f)
    if defect > tol:
        raise ValueError(
            f"inv_div_skew needs a divergence-free input, relative defect {defect:.3e}")
    spec = _vec_spectral(f)
    ks, ksq = _k_components(f.grid)
    inv = _safe_inv(ksq)
    c = np.empty_like(spec)
    c[..., 0] = 1j * inv * (ks[1] * spec[..., 2] - ks[2] * spec[..., 1])
    c[..., 1] = 1j * inv * (ks[2] * spec[..., 0] - ks[0] * spec[..., 2])
    c[..., 2] = 1j * inv * (ks[0] * spec[..., 1] - ks[1] * spec[..., 0])
    out = np.zeros(spec.shape[:-1] + (3, 3), dtype=np.complex128)
    # R_ij = eps_ijk c_k
    out[..., 0, 1] = c[..., 2]
    out[..., 1, 0] = -c[..., 2]
    out[..., 1, 2] = c[..., 0]
    out[..., 2, 1] = -c[..., 0]
    out[..., 2, 0] = c[..., 1]
    out[..., 0, 2] = -c[..., 1]
    return Field.from_spectral(out, f.grid)


def biot_savart(b: Field, tol: float = 1e-10) -> Field:
    """Vector potential A = curl (-Laplace)^{-1} B of a mean-free field.

    Any gradient part of the input is annihilated by the curl, so A depends
    only on the divergence-free part and satisfies curl A = B when B is
    divergence-free.
    """
    if not b.is_mean_free(tol):
        raise ValueError("biot_savart needs a mean-free input field")
    spec = _vec_spectral(b)
    ks, ksq = _k_components(b.grid)
    inv = _safe_inv(ksq)
    out = np.empty_like(spec)
    out[..., 0] = 1j * inv * (ks[1] * spec[..., 2] - ks[2] * spec[..., 1])
    out[..., 1] = 1j * inv * (ks[2] * spec[..., 0] - ks[0] * spec[..., 2])
    out[..., 2] = 1j * inv * (ks[0] * spec[..., 1] - ks[1] * spec[..., 0])
    return Field.from_spectral(out, b.grid)
