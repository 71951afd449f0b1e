"""Intermittent flow blocks locked to the rational frames.

Every block field is a separable product of two 1D profiles riding linear
phases: a shear profile psi on xi_s = lam r_perp N (k1.x + mu t) and a
concentration profile phi (with antiderivative potential Phi) on
xi_c = lam r_perp N k.x, times a constant frame vector. The double-curl
potential identities reduce to one coefficient relation,
phi = -r_perp^2 Phi'', which is imposed exactly in Fourier coefficient
space, so the identities hold for the materialized fields up to rounding.

Grid samples are produced through integer phase tables: with lam r_perp
and the phase rate lam r_perp N mu integral, both phases live on finite
lattices (n_x points in space, n_x * n_t in space-time), every grid value
is a table lookup, and the sampled fields are exactly the band-limited
trig polynomials they claim to be. The resolution validator enforces the
alias-free bound for quadratic products of the bands, which is the
condition under which spectral derivatives of block products are exact.

Band truncation deliberately changes the profile shapes, so the sampled
fields keep the algebraic structure but not the concentration scaling
laws. Those laws are measured on the true compactly supported profiles
instead, by circle quadrature through the phase pullback: distinct
integer phase directions are jointly equidistributed, so mixed norms
factor into 1D (or, for gradient tensors, 2D) profile integrals.
"""

import math
from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft

from .field import Field
from .grid import Grid4, GridResolutionError, fft_workers
from .profiles import (BandProfile, SpatialProfiles, band_project, fit_loglog,
                       make_spatial_profiles, rescaled)

PROFILE_KINDS = ("shear", "shear_rate", "shear_curvature",
                 "concentration", "potential", "potential_rate")

FLOW_KINDS = ("velocity", "magnetic", "velocity_potential",
              "velocity_corrector", "magnetic_potential",
              "magnetic_corrector")

IDENTITY_NAMES = ("velocity_potential_curl", "velocity_solenoidal",
                  "magnetic_potential_curl", "velocity_transport",
                  "magnetic_transport_null", "cross_transport",
                  "cross_transport_null")


class BlockIdentityError(RuntimeError):
    """One or more block identities exceeded tolerance on the grid."""

    def __init__(self, failures):
        self.failures = tuple(failures)
        parts = ", ".join(f"{name}: {res:.3e}" for name, res in self.failures)
        super().__init__(f"block identities failed: {parts}")


@dataclass(frozen=True)
class BlockParams:
    """Concentration and oscillation parameters of one block family.

    lam is the integer frequency scale; r_perp and r_par concentrate the
    profiles across and along the flow (r_perp <= r_par <= 1); mu moves
    the shear phase in time. The band widths select how many harmonics of
    each profile the materialized fields carry.
    """

    lam: int
    r_perp: float = 1.0
    r_par: float = 1.0
    mu: float = 0.0
    n_shear_harmonics: int = 1
    n_conc_harmonics: int = 2

    def __post_init__(self):
        if self.lam != int(self.lam) or self.lam < 1:
            raise ValueError(f"frequency scale must be a positive integer, got {self.lam}")
        if not 0.0 < self.r_perp <= self.r_par <= 1.0:
            raise ValueError(
                f"need 0 < r_perp <= r_par <= 1, got {self.r_perp}, {self.r_par}")
        if self.mu < 0:
            raise ValueError(f"temporal oscillation rate must be >= 0, got {self.mu}")
        lr = self.lam * self.r_perp
        if abs(lr - round(lr)) > 1e-9 * max(1.0, lr):
            raise ValueError(
                f"lam * r_perp = {lr} is not an integer; the concentration "
                "profile would not be periodic on the torus")
        if self.n_shear_harmonics < 1 or self.n_conc_harmonics < 1:
            raise ValueError("band widths must be at least 1")

    @property
    def lam_r_perp(self) -> int:
        return int(round(self.lam * self.r_perp))


def _phase_rate(frame, params: BlockParams) -> int:
    """Integer time rate of the shear phase, lam r_perp N mu."""
    rate = params.lam_r_perp * frame.denom * params.mu
    if abs(rate - round(rate)) > 1e-9 * max(1.0, rate):
        raise ValueError(
            f"shear phase rate lam*r_perp*N*mu = {rate} is not an integer; "
            "the blocks would not be periodic in time")
    return int(round(rate))


def _validate_resolution(frame, params: BlockParams, grid: Grid4):
    """Quadratic products of the bands must stay below the spatial Nyquist
    mode on every axis; identity checks and stress assembly square the
    profiles, so the bound is taken at twice the linear bandwidth."""
    lr = params.lam_r_perp
    a_max = lr * max(abs(c) for c in frame.k1_num)
    m_max = lr * max(abs(c) for c in frame.k_num)
    need = 2 * (params.n_shear_harmonics * a_max + params.n_conc_harmonics * m_max)
    cap = grid.n_x // 2 - 1
    if need > cap:
        raise GridResolutionError(
            f"quadratic block products reach spatial mode {need} but a "
            f"{grid.n_x}^3 grid resolves only {cap}; raise n_x or reduce "
            "lam, r_perp, or the band widths")


def sample_blocks(frame, params: BlockParams, grid: Grid4,
                  base: SpatialProfiles = None) -> "BlockSet":
    """Materialize one frame's blocks on a grid.

    Band profiles are projected from the true rescaled profiles, then the
    concentration pair is renormalized jointly so the circle mean of phi^2
    is exactly one while phi = -r_perp^2 Phi'' stays an exact coefficient
    relation. The shear profile is made exactly mean-free and unit-power.
    """
    if base is None:
        base = make_spatial_profiles()
    _validate_resolution(frame, params, grid)
    rate = _phase_rate(frame, params)

    potential_raw = band_project(rescaled(base.Phi, params.r_perp),
                                 params.n_conc_harmonics)
    conc_raw = potential_raw.derivative(2).scaled(-params.r_perp ** 2)
    ms = conc_raw.mean_sq()
    if ms <= 0:
        raise ValueError("concentration band is empty; widen the band")
    factor = 1.0 / math.sqrt(ms)
    shear = band_project(rescaled(base.psi, params.r_par),
                         params.n_shear_harmonics).zero_mean().renormalized()
    return BlockSet(frame, params, grid,
                    shear_band=shear,
                    conc_band=conc_raw.scaled(factor),
                    potential_band=potential_raw.scaled(factor))


class BlockSet:
    """Grid evaluators for one frame's flows, correctors, and profiles.

    Immutable after construction; index arrays and value tables are built
    lazily and cached. Scalar profile kinds are the two phase profiles and
    their phase derivatives; flow kinds are the separable vector fields.
    """

    __slots__ = ("frame", "params", "grid", "shear_band", "conc_band",
                 "potential_band", "a_int", "m_int", "rate", "_idx", "_tables")

    def __init__(self, frame, params: BlockParams, grid: Grid4,
                 shear_band: BandProfile, conc_band: BandProfile,
                 potential_band: BandProfile):
        self.frame = frame
        self.params = params
        self.grid = grid
        self.shear_band = shear_band
        self.conc_band = conc_band
        self.potential_band = potential_band
        lr = params.lam_r_perp
        self.a_int = tuple(lr * c for c in frame.k1_num)
        self.m_int = tuple(lr * c for c in frame.k_num)
        self.rate = _phase_rate(frame, params)
        self._idx = {}
        self._tables = {}

    # -- phase lattice -----------------------------------------------------

    def _space_index(self, vec) -> np.ndarray:
        key = ("ix", vec)
        if key not in self._idx:
            n = self.grid.n_x
            i = np.arange(n, dtype=np.int64)
            acc = (i[:, None, None] * (vec[0] % n)
                   + i[None, :, None] * (vec[1] % n)
                   + i[None, None, :] * (vec[2] % n)) % n
            acc.setflags(write=False)
            self._idx[key] = acc
        return self._idx[key]

    def _shear_index(self) -> np.ndarray:
        # premultiplied by n_t so a time offset below L can be added directly
        key = "shear_ix"
        if key not in self._idx:
            acc = self._space_index(self.a_int) * self.grid.n_t
            acc.setflags(write=False)
            self._idx[key] = acc
        return self._idx[key]

    def _table(self, kind: str) -> np.ndarray:
        """Profile values over the full phase lattice; shear tables are
        doubled so index + offset never needs a modulo."""
        if kind not in self._tables:
            n_x, n_t = self.grid.n_x, self.grid.n_t
            if kind in ("shear", "shear_rate", "shear_curvature"):
                band = self.shear_band.derivative(
                    ("shear", "shear_rate", "shear_curvature").index(kind))
                L = n_x * n_t
                theta0 = -np.pi * (sum(self.a_int) + self.rate)
                vals = band(theta0 + 2.0 * np.pi * np.arange(L) / L)
                vals = np.concatenate([vals, vals])
            elif kind in ("concentration", "potential", "potential_rate"):
                band = {"concentration": self.conc_band,
                        "potential": self.potential_band,
                        "potential_rate": self.potential_band.derivative(1)}[kind]
                theta0 = -np.pi * sum(self.m_int)
                vals = band(theta0 + 2.0 * np.pi * np.arange(n_x) / n_x)
            else:
                raise ValueError(f"unknown profile kind {kind!r}")
            vals.setflags(write=False)
            self._tables[kind] = vals
        return self._tables[kind]

    def profile_slice(self, kind: str, j: int) -> np.ndarray:
        """One time sample of a scalar profile, shape (n_x, n_x, n_x)."""
        tab = self._table(kind)
        if kind.startswith("shear"):
            n_x, n_t = self.grid.n_x, self.grid.n_t
            off = ((self.rate * int(j)) % n_t) * n_x
            return tab[self._shear_index() + off]
        return tab[self._space_index(self.m_int)]

    def _flow_parts(self, kind: str):
        inv_pot = 1.0 / (self.params.lam * self.frame.denom) ** 2
        rp2 = self.params.r_perp ** 2
        table = {
            "velocity": ("shear", "concentration", 1.0, self.frame.k1),
            "magnetic": ("shear", "concentration", 1.0, self.frame.k2),
            "velocity_potential": ("shear", "potential", inv_pot, self.frame.k1),
            "velocity_corrector": ("shear_rate", "potential_rate", rp2, self.frame.k),
            "magnetic_potential": ("shear", "potential", inv_pot, self.frame.k2),
            "magnetic_corrector": ("shear_curvature", "potential", -rp2, self.frame.k2),
        }
        if kind not in table:
            raise ValueError(f"unknown flow kind {kind!r}")
        return table[kind]

    def flow_slice(self, kind: str, j: int) -> np.ndarray:
        """One time sample of a flow, shape (n_x, n_x, n_x, 3)."""
        s_kind, c_kind, coef, direction = self._flow_parts(kind)
        scal = self.profile_slice(s_kind, j) * self.profile_slice(c_kind, j)
        return (coef * scal)[..., None] * direction

    def flow_field(self, kind: str) -> Field:
        out = np.empty(self.grid.shape + (3,))
        for j in range(self.grid.n_t):
            out[j] = self.flow_slice(kind, j)
        return Field(out, self.grid, _take=True)

    def profile_field(self, kind: str) -> Field:
        out = np.empty(self.grid.shape)
        for j in range(self.grid.n_t):
            out[j] = self.profile_slice(kind, j)
        return Field(out, self.grid, _take=True)

    def transport_slice(self, j: int, direction) -> np.ndarray:
        """The time-cancelled transport source mu^-1 d_t(psi^2 phi^2 dir)
        = 2 lam r_perp N psi psi' phi^2 dir, exact for every mu including
        the frozen case mu = 0."""
        lr_n = self.params.lam_r_perp * self.frame.denom
        scal = (2.0 * lr_n * self.profile_slice("shear", j)
                * self.profile_slice("shear_rate", j)
                * self.profile_slice("concentration", j) ** 2)
        return scal[..., None] * np.asarray(direction)

    def time_mode_bound(self, degree: int = 2) -> int:
        """Largest time mode of a degree-d product of this block's fields."""
        return degree * self.params.n_shear_harmonics * self.rate


# -- 3D spectral helpers for slice-wise verification ---------------------------

def _wavenumbers3(n: int):
    kf = np.fft.fftfreq(n, 1.0 / n).astype(np.int64)
    kh = np.arange(n // 2 + 1, dtype=np.int64)
    return (kf[:, None, None], kf[None, :, None], kh[None, None, :])


def _rfft3(arr):
    return sfft.rfftn(arr, axes=(0, 1, 2), workers=fft_workers())


def _irfft3(spec, n):
    return sfft.irfftn(spec, s=(n, n, n), axes=(0, 1, 2), workers=fft_workers())


def _grad3_scalar(arr):
    n = arr.shape[0]
    k1, k2, k3 = _wavenumbers3(n)
    spec = _rfft3(arr)
    return np.stack([_irfft3(1j * k * spec, n) for k in (k1, k2, k3)], axis=-1)


def _div3(vec):
    """Divergence of (n,n,n,3) plus the max single-term magnitude, which
    scales the residual for identities whose truth value is zero."""
    n = vec.shape[0]
    k1, k2, k3 = _wavenumbers3(n)
    total = None
    scale = 0.0
    for axis, k in enumerate((k1, k2, k3)):
        term = _irfft3(1j * k * _rfft3(vec[..., axis]), n)
        scale = max(scale, float(np.abs(term).max()))
        total = term if total is None else total + term
    return total, scale


def _curl_curl3(vec):
    """Spectral double curl, |k|^2 v - k (k.v), of an (n,n,n,3) sample."""
    n = vec.shape[0]
    k1, k2, k3 = _wavenumbers3(n)
    spec = _rfft3(vec)
    kdotv = k1 * spec[..., 0] + k2 * spec[..., 1] + k3 * spec[..., 2]
    ksq = (k1 * k1 + k2 * k2 + k3 * k3).astype(np.float64)
    out = np.empty_like(spec)
    for axis, k in enumerate((k1, k2, k3)):
        out[..., axis] = ksq * spec[..., axis] - k * kdotv
    return _irfft3(out, n)


def _rel(diff_max: float, scale: float) -> float:
    return diff_max / max(scale, 1e-300)


def verify_identities(blocks: BlockSet, time_indices=None, tol: float = 1e-7):
    """Check the seven block identities on grid slices with spectral
    spatial derivatives; the time derivative side enters in its exact
    cancelled form. Returns {identity: relative residual} or raises
    BlockIdentityError naming every identity over tolerance."""
    grid = blocks.grid
    if time_indices is None:
        step = max(1, grid.n_t // 4)
        time_indices = range(0, grid.n_t, step)
    report = {name: 0.0 for name in IDENTITY_NAMES}

    for j in time_indices:
        W = blocks.flow_slice("velocity", j)
        Wct = blocks.flow_slice("velocity_corrector", j)
        D = blocks.flow_slice("magnetic", j)
        Dct = blocks.flow_slice("magnetic_corrector", j)

        lhs = W + Wct
        rhs = _curl_curl3(blocks.flow_slice("velocity_potential", j))
        scale = max(np.abs(lhs).max(), np.abs(rhs).max())
        report["velocity_potential_curl"] = max(
            report["velocity_potential_curl"], _rel(np.abs(lhs - rhs).max(), scale))

        div, scale = _div3(lhs)
        report["velocity_solenoidal"] = max(
            report["velocity_solenoidal"], _rel(np.abs(div).max(), scale))

        lhs = D + Dct
        rhs = _curl_curl3(blocks.flow_slice("magnetic_potential", j))
        scale = max(np.abs(lhs).max(), np.abs(rhs).max())
        report["magnetic_potential_curl"] = max(
            report["magnetic_potential_curl"], _rel(np.abs(lhs - rhs).max(), scale))

        for name, left, right, source_dir in (
                ("velocity_transport", W, W, blocks.frame.k1),
                ("magnetic_transport_null", D, D, None),
                ("cross_transport", D, W, blocks.frame.k2),
                ("cross_transport_null", W, D, None)):
            div_parts = []
            scale = 0.0
            for i in range(3):
                # div contracts the second factor: d_j (left_i right_j)
                d, s = _div3(left[..., i, None] * right)
                div_parts.append(d)
                scale = max(scale, s)
            div = np.stack(div_parts, axis=-1)
            if source_dir is None:
                report[name] = max(report[name], _rel(np.abs(div).max(), scale))
            else:
                rhs = blocks.transport_slice(j, source_dir)
                scale = max(scale, float(np.abs(rhs).max()))
                report[name] = max(report[name], _rel(np.abs(div - rhs).max(), scale))

    failures = [(n, r) for n, r in report.items() if r > tol]
    if failures:
        raise BlockIdentityError(failures)
    return report


# -- scaling laws on the true profiles ------------------------------------------

_NORM_QUAD_N = 1 << 12


def _support_nodes(r: float, n: int):
    """Midpoint nodes across the support [-r, r] and the weight that turns
    a sum of integrand values into a circle mean. Accuracy is then set by
    nodes-per-support-width, independent of how small r is."""
    nodes = -r + (np.arange(n) + 0.5) * (2.0 * r / n)
    return nodes, r / (np.pi * n)


def _support_pmean(fn, r: float, p: float, n: int) -> float:
    xi, w = _support_nodes(r, n)
    vals = np.abs(fn(xi))
    if np.isinf(p):
        return float(vals.max())
    return float((vals ** p).sum() * w)


def _shear_deriv(base: SpatialProfiles, r: float, order: int):
    fn = rescaled(lambda s, d=order: base.psi(s, deriv=d), r)
    return lambda xi: fn(xi) / r ** order


def _conc_deriv(base: SpatialProfiles, r: float, order: int):
    # phi = -Phi'' at unit scale, so order n of phi is -Phi^(n+2) rescaled
    fn = rescaled(lambda s, d=order + 2: -base.Phi(s, deriv=d), r)
    return lambda xi: fn(xi) / r ** order


def block_norm(base: SpatialProfiles, params: BlockParams, p: float = 2.0,
               grad_order: int = 0, time_order: int = 0, n_lambda: int = 5,
               n_quad: int = _NORM_QUAD_N) -> float:
    """Exact sup-in-time L^p (circle-mean) norm of the grad^N d_t^M
    velocity flow with the true profiles.

    The phase directions are orthogonal, so the pointwise Frobenius norm
    of the N-th gradient tensor collapses to a binomial sum of squared
    profile derivatives, and the spatial mean factors through the joint
    phase distribution: 1D quadrature suffices at N = 0 and a 2D grid over
    the two phases covers N >= 1. Frame choice drops out entirely.
    """
    rp, rl = params.r_perp, params.r_par
    speed = params.lam_r_perp * n_lambda  # |grad xi| of both phases
    rate = speed * params.mu
    if grad_order == 0:
        s = _support_pmean(_shear_deriv(base, rl, time_order), rl, p, 4 * n_quad)
        c = _support_pmean(_conc_deriv(base, rp, 0), rp, p, 4 * n_quad)
        if np.isinf(p):
            return rate ** time_order * s * c
        return rate ** time_order * (s * c) ** (1.0 / p)

    xi_s, w_s = _support_nodes(rl, n_quad)
    xi_c, w_c = _support_nodes(rp, n_quad)
    shear_sq = [_shear_deriv(base, rl, j + time_order)(xi_s) ** 2
                for j in range(grad_order + 1)]
    conc_sq = [_conc_deriv(base, rp, grad_order - j)(xi_c) ** 2
               for j in range(grad_order + 1)]
    acc = 0.0
    peak = 0.0
    chunk = max(1, (1 << 22) // n_quad)
    for lo in range(0, n_quad, chunk):
        hi = min(lo + chunk, n_quad)
        tot = np.zeros((hi - lo, n_quad))
        for j in range(grad_order + 1):
            w = math.comb(grad_order, j) * speed ** (2 * grad_order)
            tot += w * shear_sq[j][lo:hi, None] * conc_sq[j][None, :]
        mag = np.sqrt(tot)
        if np.isinf(p):
            peak = max(peak, float(mag.max()))
        else:
            acc += float((mag ** p).sum())
    if np.isinf(p):
        return rate ** time_order * peak
    return rate ** time_order * (acc * w_s * w_c) ** (1.0 / p)


def predicted_block_norm(params: BlockParams, p: float, grad_order: int = 0,
                         time_order: int = 0) -> float:
    """The concentration law the norms are fitted against."""
    rp, rl, lam, mu = params.r_perp, params.r_par, params.lam, params.mu
    inv_p = 0.0 if np.isinf(p) else 1.0 / p
    return (rp ** (inv_p - 0.5) * rl ** (inv_p - 0.5) * lam ** grad_order
            * (rp * lam * mu / rl) ** time_order)


def _safe_slope(predicted, measured) -> float:
    """Log-log slope, or nan when the predicted law is constant over the
    sweep (the flat case is judged by deviation, not slope)."""
    lp = np.log(np.asarray(predicted, dtype=float))
    if np.ptp(lp) < 1e-12:
        return float("nan")
    return fit_loglog(predicted, measured)


@dataclass(frozen=True)
class IntermittencyFit:
    """A sweep of measured norms against the predicted law."""

    measured: tuple
    predicted: tuple
    slope: float

    @property
    def max_flat_deviation(self) -> float:
        mid = float(np.median(self.measured))
        return max(abs(m / mid - 1.0) for m in self.measured)


def measure_intermittency(base: SpatialProfiles, sweep, p: float = 1.0,
                          grad_order: int = 0, time_order: int = 0) -> IntermittencyFit:
    """Fit measured block norms against the predicted law over a sweep of
    at least three parameter points; a slope near one confirms the law."""
    sweep = tuple(sweep)
    if len(sweep) < 3:
        raise ValueError(f"need a sweep of at least 3 points, got {len(sweep)}")
    measured = tuple(block_norm(base, q, p, grad_order, time_order) for q in sweep)
    predicted = tuple(predicted_block_norm(q, p, grad_order, time_order)
                      for q in sweep)
    return IntermittencyFit(measured, predicted, _safe_slope(predicted, measured))


def product_norm(base: SpatialProfiles, params: BlockParams, frame, other,
                 p: float = 1.0, n_quad: int = 4 * _NORM_QUAD_N) -> float:
    """Sup-in-time L^p norm of the product of two frames' scalar parts,
    for an antipodal pair.

    Antipodal frames share the concentration phase up to sign, and the
    concentration profile is even, so the product collapses to
    |psi(xi_1) psi(xi_3)| phi^2(xi_2) over three independent phases and
    the norm is an exact product of 1D integrals. Such pairs realize the
    worst-case support intersection, so they saturate the product law.
    """
    if tuple(other.k_num) != tuple(-c for c in frame.k_num) or other.denom != frame.denom:
        raise ValueError("product norm is implemented for antipodal frame pairs")
    cross = np.cross(np.array(frame.k1_num, float), np.array(other.k1_num, float))
    if not cross.any():
        raise ValueError("antipodal pair must not share the shear direction")
    rp, rl = params.r_perp, params.r_par
    s = _support_pmean(_shear_deriv(base, rl, 0), rl, p, n_quad)
    conc = _conc_deriv(base, rp, 0)
    c2 = _support_pmean(lambda xi: conc(xi) ** 2, rp, p, n_quad)
    if np.isinf(p):
        return s * s * c2
    return (s * s * c2) ** (1.0 / p)


def predicted_product_norm(params: BlockParams, p: float) -> float:
    inv_p = 0.0 if np.isinf(p) else 1.0 / p
    return params.r_perp ** (inv_p - 1.0) * params.r_par ** (2.0 * inv_p - 1.0)


def measure_product_intermittency(base: SpatialProfiles, sweep, frame, other,
                                  p: float = 1.0) -> IntermittencyFit:
    sweep = tuple(sweep)
    if len(sweep) < 3:
        raise ValueError(f"need a sweep of at least 3 points, got {len(sweep)}")
    measured = tuple(product_norm(base, q, frame, other, p) for q in sweep)
    predicted = tuple(predicted_product_norm(q, p) for q in sweep)
    return IntermittencyFit(measured, predicted, _safe_slope(predicted, measured))


# -- support geometry on the grid -----------------------------------------------

def _subgroup_step(values, modulus: int) -> int:
    g = modulus
    for v in values:
        g = math.gcd(g, v % modulus)
    return g if g else modulus


def support_fraction(base: SpatialProfiles, params: BlockParams, frame,
                     grid: Grid4, which: str = "shear") -> float:
    """Exact fraction of grid points where the true (compactly supported)
    profile is nonzero. The phase index is uniform on a subgroup of the
    phase lattice, so counting the subgroup suffices."""
    if which == "concentration":
        m = tuple(params.lam_r_perp * c for c in frame.k_num)
        n = grid.n_x
        d = _subgroup_step(m, n)
        theta = -np.pi * sum(m) + 2.0 * np.pi * np.arange(0, n, d) / n
        vals = rescaled(base.phi, params.r_perp)(theta)
        return float(np.count_nonzero(vals)) / len(theta)
    if which != "shear":
        raise ValueError(f"unknown support kind {which!r}")
    a = tuple(params.lam_r_perp * c for c in frame.k1_num)
    rate = _phase_rate(frame, params)
    n_x, n_t = grid.n_x, grid.n_t
    L = n_x * n_t
    step = math.gcd(_subgroup_step(a, n_x) * n_t, math.gcd(rate, n_t) * n_x)
    theta = (-np.pi * (sum(a) + rate)
             + 2.0 * np.pi * np.arange(0, L, step) / L)
    vals = rescaled(base.psi, params.r_par)(theta)
    return float(np.count_nonzero(vals)) / len(theta)


def pair_support_fraction(base: SpatialProfiles, params: BlockParams,
                          frame_a, frame_b, grid: Grid4) -> float:
    """Largest over time samples of the grid fraction where both frames'
    scalar parts are simultaneously nonzero, with the true profiles."""
    n_x, n_t = grid.n_x, grid.n_t
    L = n_x * n_t
    worst = 0.0
    masks = []
    for frame in (frame_a, frame_b):
        a = tuple(params.lam_r_perp * c for c in frame.k1_num)
        m = tuple(params.lam_r_perp * c for c in frame.k_num)
        rate = _phase_rate(frame, params)
        th_s = -np.pi * (sum(a) + rate) + 2.0 * np.pi * np.arange(L) / L
        shear_ok = rescaled(base.psi, params.r_par)(th_s) != 0.0
        shear_ok = np.concatenate([shear_ok, shear_ok])
        th_c = -np.pi * sum(m) + 2.0 * np.pi * np.arange(n_x) / n_x
        conc_ok = rescaled(base.phi, params.r_perp)(th_c) != 0.0
        i = np.arange(n_x, dtype=np.int64)
        ix_s = ((i[:, None, None] * (a[0] % n_x) + i[None, :, None] * (a[1] % n_x)
                 + i[None, None, :] * (a[2] % n_x)) % n_x) * n_t
        ix_c = (i[:, None, None] * (m[0] % n_x) + i[None, :, None] * (m[1] % n_x)
                + i[None, None, :] * (m[2] % n_x)) % n_x
        masks.append((shear_ok, ix_s, conc_ok[ix_c], rate))
    for j in range(n_t):
        joint = None
        for shear_ok, ix_s, conc_mask, rate in masks:
            off = ((rate * j) % n_t) * n_x
            m = shear_ok[ix_s + off] & conc_mask
            joint = m if joint is None else joint & m
        worst = max(worst, float(joint.mean()))
    return worst
