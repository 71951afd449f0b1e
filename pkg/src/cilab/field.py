"""Space-time fields on the periodic box, with spectral calculus and norms.

A Field owns a real array sampled on a Grid4. Physical samples are the
primary representation; the Fourier side is a lazy cache. Published fields
are immutable (the data buffer is marked read-only), so the cache can be
shared safely: every algebraic operation returns a new Field.

Component layout is trailing: scalars are (n_t, n_x, n_x, n_x), vectors
append one length-3 axis, rank-2 tensors append two. Tensor contractions
follow the right-product convention (A v)_i = A_ij v_j, and the divergence
of a tensor contracts the second index, (div A)_i = d_j A_ij.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft

from .grid import Grid4, fft_workers

MAGIC = b"CILAB1\x00"

_RANK_SHAPES = {0: (), 1: (3,), 2: (3, 3)}


class FieldFormatError(ValueError):
    """Raised when a serialized field fails validation."""


class Field:
    __slots__ = ("data", "grid", "_spec")

    def __init__(self, data, grid: Grid4, mean_free: bool = False, _take=False):
        data = np.asarray(data, dtype=np.float64)
        comp = data.shape[4:]
        if data.shape[:4] != grid.shape or comp not in _RANK_SHAPES.values():
            raise ValueError(
                f"field shape {data.shape} does not match grid {grid.shape} "
                "with scalar, vector, or 3x3 tensor components")
        if _take:
            if not data.flags.c_contiguous:
                data = np.ascontiguousarray(data)
        else:
            data = data.copy(order="C")
        data.setflags(write=False)
        self.data = data
        self.grid = grid
        self._spec = None
        if mean_free:
            self.require_mean_free()

    # -- construction -----------------------------------------------------

    @classmethod
    def zeros(cls, grid: Grid4, rank: int = 0) -> "Field":
        return cls(np.zeros(grid.shape + _RANK_SHAPES[rank]), grid, _take=True)

    @classmethod
    def from_spectral(cls, coeffs, grid: Grid4) -> "Field":
        return cls(to_physical(coeffs, grid), grid, _take=True)

    # -- basic properties --------------------------------------------------

    @property
    def rank(self) -> int:
        return self.data.ndim - 4

    @property
    def spectral(self) -> np.ndarray:
        """Normalized Fourier coefficients; the zero mode is the mean."""
        if self._spec is None:
            self._spec = to_spectral(self.data, self.grid)
        return self._spec

    def spatial_means(self) -> np.ndarray:
        """Mean over the spatial torus, one value per time sample."""
        return self.data.mean(axis=(1, 2, 3))

    def is_mean_free(self, tol: float = 1e-12) -> bool:
        scale = max(np.abs(self.data).max(), 1e-300)
        return bool(np.abs(self.spatial_means()).max() <= tol * scale)

    def require_mean_free(self, tol: float = 1e-12):
        if not self.is_mean_free(tol):
            worst = np.abs(self.spatial_means()).max()
            raise ValueError(f"field is not mean-free: worst slice mean {worst:g}")

    # -- arithmetic ---------------------------------------------------------

    def _wrap(self, data) -> "Field":
        return Field(data, self.grid, _take=True)

    def __add__(self, other: "Field") -> "Field":
        return self._wrap(self.data + other.data)

    def __sub__(self, other: "Field") -> "Field":
        return self._wrap(self.data - other.data)

    def __neg__(self) -> "Field":
        return self._wrap(-self.data)

    def __mul__(self, other):
        if isinstance(other, Field):
            a, b = self.data, other.data
            # scalar times vector/tensor broadcasts over trailing axes
            while a.ndim < b.ndim:
                a = a[..., None]
            while b.ndim < a.ndim:
                b = b[..., None]
            return self._wrap(a * b)
        return self._wrap(self.data * float(other))

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Field":
        return self._wrap(self.data / float(other))

    def component(self, *idx) -> "Field":
        return self._wrap(np.ascontiguousarray(self.data[(Ellipsis,) + idx]))

    def magnitude(self) -> np.ndarray:
        """Pointwise absolute value (scalar) or Frobenius norm (tensor)."""
        if self.rank == 0:
            return np.abs(self.data)
        axes = tuple(range(4, self.data.ndim))
        return np.sqrt((self.data ** 2).sum(axis=axes))

    def max_abs(self) -> float:
        return float(np.abs(self.data).max())


# -- spectral transforms -----------------------------------------------------

def to_spectral(data, grid: Grid4) -> np.ndarray:
    """Forward transform, normalized so coefficient (0,0,0,0) is the mean."""
    arr = data.data if isinstance(data, Field) else np.asarray(data)
    return sfft.rfftn(arr, axes=(0, 1, 2, 3), workers=fft_workers()) / grid.n_modes


def to_physical(coeffs, grid: Grid4) -> np.ndarray:
    """Inverse of to_spectral, returning the real sample array."""
    sizes = (grid.n_t, grid.n_x, grid.n_x, grid.n_x)
    return sfft.irfftn(coeffs * grid.n_modes, s=sizes, axes=(0, 1, 2, 3),
                       workers=fft_workers())


def spectral_derivative(f: Field, m: int = 0, zeta=(0, 0, 0)) -> Field:
    """d_t^m d_x^zeta f computed by Fourier multipliers."""
    kt, k1, k2, k3 = f.grid.k_broadcast()
    factors = ((kt, m), (k1, zeta[0]), (k2, zeta[1]), (k3, zeta[2]))
    mult = np.complex128(1.0)
    for k, power in factors:
        if power:
            mult = mult * (1j * k) ** power
    spec = f.spectral
    if isinstance(mult, np.ndarray) and f.rank > 0:
        mult = mult.reshape(mult.shape + (1,) * f.rank)
    return Field.from_spectral(spec * mult, f.grid)


def ddt(f: Field) -> Field:
    return spectral_derivative(f, m=1)


def grad(f: Field) -> Field:
    """Gradient of a scalar (vector) or of a vector (tensor, (grad u)_ij = d_j u_i)."""
    if f.rank > 1:
        raise ValueError("grad is defined for scalar and vector fields")
    parts = [spectral_derivative(f, zeta=tuple(int(j == a) for j in range(3))).data
             for a in range(3)]
    return Field(np.stack(parts, axis=-1), f.grid, _take=True)


def div_vec(f: Field) -> Field:
    if f.rank != 1:
        raise ValueError("div_vec needs a vector field")
    total = None
    for a in range(3):
        zeta = tuple(int(j == a) for j in range(3))
        term = spectral_derivative(f.component(a), zeta=zeta).data
        total = term if total is None else total + term
    return Field(total, f.grid, _take=True)


def div_tensor(f: Field) -> Field:
    """(div A)_i = d_j A_ij, contracting the column index."""
    if f.rank != 2:
        raise ValueError("div_tensor needs a rank-2 field")
    cols = []
    for i in range(3):
        total = None
        for j in range(3):
            zeta = tuple(int(a == j) for a in range(3))
            term = spectral_derivative(f.component(i, j), zeta=zeta).data
            total = term if total is None else total + term
        cols.append(total)
    return Field(np.stack(cols, axis=-1), f.grid, _take=True)


# -- pointwise tensor algebra -------------------------------------------------

def outer(u: Field, v: Field) -> Field:
    """u (x) v with components u_i v_j."""
    if u.rank != 1 or v.rank != 1:
        raise ValueError("outer needs two vector fields")
    return Field(u.data[..., :, None] * v.data[..., None, :], u.grid, _take=True)


def transpose_tensor(t: Field) -> Field:
    return Field(np.swapaxes(t.data, -1, -2), t.grid, _take=True)


def sym(t: Field) -> Field:
    return Field(0.5 * (t.data + np.swapaxes(t.data, -1, -2)), t.grid, _take=True)


def skew(t: Field) -> Field:
    return Field(0.5 * (t.data - np.swapaxes(t.data, -1, -2)), t.grid, _take=True)


def trace(t: Field) -> Field:
    return Field(np.trace(t.data, axis1=-2, axis2=-1), t.grid, _take=True)


def traceless(t: Field) -> Field:
    tr = np.trace(t.data, axis1=-2, axis2=-1) / 3.0
    out = t.data.copy()
    for i in range(3):
        out[..., i, i] -= tr
    return Field(out, t.grid, _take=True)


def tensor_apply(t: Field, v: Field) -> Field:
    """Right product (A v)_i = A_ij v_j."""
    if t.rank != 2 or v.rank != 1:
        raise ValueError("tensor_apply needs a tensor and a vector")
    return Field(np.einsum("...ij,...j->...i", t.data, v.data), t.grid, _take=True)


def dot(u: Field, v: Field) -> Field:
    if u.rank != 1 or v.rank != 1:
        raise ValueError("dot needs two vector fields")
    return Field((u.data * v.data).sum(axis=-1), u.grid, _take=True)


# -- norms -------------------------------------------------------------------

@dataclass(frozen=True)
class MixedNormSpec:
    """Selects exactly one norm family.

    lebesgue: L^gamma in time of L^p in space, Lebesgue volume measure.
    sobolev:  sum of space-time L^p norms of derivatives up to the order.
    cn:       sum of grid maxima of derivatives up to the order.
    hbeta:    space-time Sobolev norm with weight (1 + |k|^2 + k0^2)^beta.
    """

    kind: str
    gamma: float = 2.0
    p: float = 2.0
    order: int = 0
    beta: float = 0.0

    @classmethod
    def lebesgue(cls, gamma: float, p: float) -> "MixedNormSpec":
        return cls(kind="lebesgue", gamma=float(gamma), p=float(p))

    @classmethod
    def sobolev(cls, order: int, p: float) -> "MixedNormSpec":
        return cls(kind="sobolev", order=int(order), p=float(p))

    @classmethod
    def cn(cls, order: int) -> "MixedNormSpec":
        return cls(kind="cn", order=int(order))

    @classmethod
    def hbeta(cls, beta: float) -> "MixedNormSpec":
        return cls(kind="hbeta", beta=float(beta))

    @property
    def label(self) -> str:
        def num(x):
            if x == np.inf:
                return "inf"
            return f"{x:g}"
        if self.kind == "lebesgue":
            return f"L{num(self.gamma)}t_L{num(self.p)}x"
        if self.kind == "sobolev":
            return f"W{self.order}_{num(self.p)}"
        if self.kind == "cn":
            return f"C{self.order}"
        return f"H{num(self.beta)}"


def _derivative_indices(order: int):
    for total in range(order + 1):
        for m in range(total + 1):
            s = total - m
            for z1 in range(s + 1):
                for z2 in range(s - z1 + 1):
                    yield m, (z1, z2, s - z1 - z2)


def _lebesgue_norm(f: Field, gamma: float, p: float) -> float:
    mag = f.magnitude()
    vol_x = (2.0 * np.pi) ** 3
    if np.isinf(p):
        slices = mag.max(axis=(1, 2, 3))
    else:
        slices = (np.mean(mag ** p, axis=(1, 2, 3)) * vol_x) ** (1.0 / p)
    if np.isinf(gamma):
        return float(slices.max())
    return float((np.mean(slices ** gamma) * 2.0 * np.pi) ** (1.0 / gamma))


def norm(f: Field, spec: MixedNormSpec) -> float:
    if spec.kind == "lebesgue":
        return _lebesgue_norm(f, spec.gamma, spec.p)
    if spec.kind == "cn":
        total = 0.0
        for m, zeta in _derivative_indices(spec.order):
            g = f if (m == 0 and zeta == (0, 0, 0)) else spectral_derivative(f, m, zeta)
            total += float(g.magnitude().max())
        return total
    if spec.kind == "sobolev":
        total = 0.0
        for m, zeta in _derivative_indices(spec.order):
            g = f if (m == 0 and zeta == (0, 0, 0)) else spectral_derivative(f, m, zeta)
            total += _lebesgue_norm(g, spec.p, spec.p)
        return total
    if spec.kind == "hbeta":
        kt, k1, k2, k3 = f.grid.k_broadcast()
        weight = (1.0 + kt.astype(float) ** 2 + f.grid.k_sq_spatial()) ** spec.beta
        weight = weight * f.grid.rfft_weight()
        spec_arr = f.spectral
        if f.rank > 0:
            weight = weight.reshape(weight.shape + (1,) * f.rank)
        total = float((weight * (spec_arr.real ** 2 + spec_arr.imag ** 2)).sum())
        return float(np.sqrt(total * (2.0 * np.pi) ** 4))
    raise ValueError(f"unknown norm kind {spec.kind!r}")


# -- serialization -------------------------------------------------------------

def write_field(f: Field, path: str):
    """Binary dump: magic, u32 n_t, u32 n_x, u8 rank, then little-endian
    float64 samples in row-major (t, x1, x2, x3, component) order."""
    header = MAGIC + struct.pack("<IIB", f.grid.n_t, f.grid.n_x, f.rank)
    payload = np.ascontiguousarray(f.data, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload.tobytes())


def read_field(path: str) -> Field:
    with open(path, "rb") as fh:
        blob = fh.read()
    head = len(MAGIC) + 9
    if len(blob) < head or blob[:len(MAGIC)] != MAGIC:
        raise FieldFormatError(f"{path}: bad magic, not a field dump")
    n_t, n_x, rank = struct.unpack("<IIB", blob[len(MAGIC):head])
    if rank not in _RANK_SHAPES:
        raise FieldFormatError(f"{path}: unsupported rank {rank}")
    grid = Grid4(n_t, n_x)
    shape = grid.shape + _RANK_SHAPES[rank]
    expected = int(np.prod(shape)) * 8
    if len(blob) - head != expected:
        raise FieldFormatError(
            f"{path}: payload is {len(blob) - head} bytes, expected {expected}")
    data = np.frombuffer(blob, dtype="<f8", offset=head).reshape(shape)
    return Field(data.astype(np.float64), grid, _take=True)
