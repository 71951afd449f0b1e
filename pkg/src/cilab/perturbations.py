"""Perturbation assembly: four-part velocity and magnetic increments.

The principal parts ride the intermittent blocks with amplitude and
temporal-oscillation coefficients. Three corrector families repair what
the principal parts spoil: incompressibility correctors complete every
amplitude-times-block term to an exact double curl, temporal correctors
absorb the transport time derivative that the quadratic products shed,
and low-frequency correctors absorb the mean drift of the squared
oscillation profile through its antiderivative.

Every balance these parts rely on can be evaluated literally on the
grid, one term group at a time. The verifiers here do exactly that and
compare against tolerances that grow with the measured spectral tail of
the amplitudes, reporting raw residual, tail, and effective tolerance
side by side; concentrated inputs near the grid limit degrade the
tolerance instead of silently failing. Block second moments enter the
low-frequency correctors as measured grid averages rather than their
continuum values, so the balances close at grid level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .amplitudes import AmplitudeSet, slice_support
from .blocks import _curl_curl3, _div3, _irfft3, _rfft3, _wavenumbers3
from .field import Field, MixedNormSpec, ddt, norm
from .spectral_ops import _div_rel_defect, leray, p_neq0

_TAIL_FACTOR = 10.0


class CorrectorIdentityError(RuntimeError):
    """A perturbation balance missed its tail-scaled tolerance."""


# -- shared plumbing -----------------------------------------------------------

def _as_samples(profile, grid, what):
    vals = profile(grid.t()) if callable(profile) else profile
    vals = np.asarray(vals, dtype=float)
    if vals.shape != (grid.n_t,):
        raise ValueError(f"{what} must provide one sample per time slice")
    return vals


def _family_blocks(amps, blocks, family):
    triples = []
    for i, fr in enumerate(amps.frames(family)):
        try:
            bs = blocks[fr.name]
        except KeyError:
            raise ValueError(f"missing block set for frame {fr.name}") from None
        if bs.grid != amps.grid:
            raise ValueError(f"block set {fr.name} lives on a different grid")
        if bs.frame.name != fr.name:
            raise ValueError(f"block set keyed {fr.name} was sampled for "
                             f"frame {bs.frame.name}")
        triples.append((i, fr, bs))
    return triples


def _cutoff(amps, family):
    return amps.f_b if family == "magnetic" else amps.f_u


def _grad3_batch(arr):
    """Spatial gradient of one slice, gradient axis appended; any number
    of trailing component axes."""
    n = arr.shape[0]
    spec = _rfft3(arr)
    out = np.empty(arr.shape + (3,))
    for a, k in enumerate(_wavenumbers3(n)):
        mult = k.reshape(k.shape + (1,) * (arr.ndim - 3))
        out[..., a] = _irfft3(1j * mult * spec, n)
    return out


def _curl3(vec):
    n = vec.shape[0]
    k1, k2, k3 = _wavenumbers3(n)
    spec = _rfft3(vec)
    out = np.empty_like(spec)
    out[..., 0] = 1j * (k2 * spec[..., 2] - k3 * spec[..., 1])
    out[..., 1] = 1j * (k3 * spec[..., 0] - k1 * spec[..., 2])
    out[..., 2] = 1j * (k1 * spec[..., 1] - k2 * spec[..., 0])
    return _irfft3(out, n)


def _div3_tensor(tens):
    """(div T)_i = d_j T_ij on one slice, plus the largest term scale."""
    rows = []
    scale = 0.0
    for i in range(3):
        d, s = _div3(tens[..., i, :])
        rows.append(d)
        scale = max(scale, s)
    return np.stack(rows, axis=-1), scale


def _tail3(scalar):
    """High-mode mass fraction of one slice: an aliasing indicator, not a
    norm. Modes above half the Nyquist band in any direction count."""
    n = scalar.shape[0]
    k1, k2, k3 = _wavenumbers3(n)
    spec = _rfft3(scalar)
    cut = n // 4
    high = (np.abs(k1) > cut) | (np.abs(k2) > cut) | (k3 > cut)
    total = float((np.abs(spec) ** 2).sum())
    if total <= 0.0:
        return 0.0
    return math.sqrt(float((np.abs(spec[high]) ** 2).sum()) / total)


def _profile_square(bs, j):
    """Squared scalar envelope of the flows on one slice."""
    return (bs.profile_slice("shear", j) * bs.profile_slice("concentration", j)) ** 2


def _gate(report, names, tol, tail):
    effective = max(tol, _TAIL_FACTOR * tail)
    report["amplitude_tail"] = tail
    report["tolerance"] = tol
    report["effective_tolerance"] = effective
    for key, label in names:
        if report[key] > effective:
            raise CorrectorIdentityError(
                f"{label} residual {report[key]:g} exceeds {effective:g} "
                f"(raw tolerance {tol:g}, amplitude tail {tail:g})")
    return report


# -- measured block moments -----------------------------------------------------

_MOMENT_PAIRS = (("velocity", "velocity"), ("magnetic", "magnetic"),
                 ("magnetic", "velocity"), ("velocity", "magnetic"))


def measured_second_moments(blocks, frames):
    """Grid means of the quadratic flow products, one matrix per ordered
    kind pair per frame. The blocks advance by a lattice shift, so grid
    means are time-independent and slice zero decides. Downstream
    correctors must consume these measured matrices, not the continuum
    moments they approximate, or the balances stop closing at grid level.
    """
    out = {}
    for fr in frames:
        bs = blocks[fr.name]
        flows = {kind: bs.flow_slice(kind, 0).reshape(-1, 3)
                 for kind in ("velocity", "magnetic")}
        npts = flows["velocity"].shape[0]
        out[fr.name] = {
            (a, b): flows[a].T @ flows[b] / npts
            for a, b in _MOMENT_PAIRS}
    return out


def _mean_matrices(amps, blocks, vel, mag):
    """Velocity-equation and magnetic-equation mean product matrices per
    frame, from the measured second moments."""
    moments = measured_second_moments(
        blocks, [fr for _, fr, _ in vel] + [fr for _, fr, _ in mag])
    m_vel = {}
    m_mag = {}
    for _, fr, _ in vel:
        m_vel[fr.name] = moments[fr.name][("velocity", "velocity")]
    for _, fr, _ in mag:
        quart = moments[fr.name]
        m_vel[fr.name] = (quart[("velocity", "velocity")]
                          - quart[("magnetic", "magnetic")])
        m_mag[fr.name] = (quart[("magnetic", "velocity")]
                          - quart[("velocity", "magnetic")])
    return m_vel, m_mag


# -- the perturbation container --------------------------------------------------

@dataclass(frozen=True)
class Perturbation:
    """Velocity and magnetic perturbations split by role.

    w_p/d_p principal, w_c/d_c incompressibility, w_t/d_t temporal,
    w_o/d_o low-frequency. The totals are reassembled on demand in a
    fixed association order, so repeated reads are bitwise identical;
    stress assembly consumes the parts individually.
    """

    w_p: Field
    w_c: Field
    w_t: Field
    w_o: Field
    d_p: Field
    d_c: Field
    d_t: Field
    d_o: Field

    def __post_init__(self):
        grid = self.w_p.grid
        for part in (self.w_p, self.w_c, self.w_t, self.w_o,
                     self.d_p, self.d_c, self.d_t, self.d_o):
            if part.grid != grid:
                raise ValueError("perturbation parts live on different grids")
            if part.rank != 1:
                raise ValueError("perturbation parts must be vector fields")

    @property
    def grid(self):
        return self.w_p.grid

    @property
    def w(self) -> Field:
        return self.w_p + self.w_c + self.w_t + self.w_o

    @property
    def d(self) -> Field:
        return self.d_p + self.d_c + self.d_t + self.d_o

    def parts(self, family: str) -> dict:
        if family == "velocity":
            return {"principal": self.w_p, "incompressibility": self.w_c,
                    "temporal": self.w_t, "low_frequency": self.w_o}
        if family == "magnetic":
            return {"principal": self.d_p, "incompressibility": self.d_c,
                    "temporal": self.d_t, "low_frequency": self.d_o}
        raise ValueError(f"unknown perturbation family {family!r}")


# -- builders --------------------------------------------------------------------

def principal_parts(amps: AmplitudeSet, blocks: dict, g):
    """Sum amplitude times oscillation times velocity flow over both frame
    families, and the magnetic flows over the skew family. Slices where g
    or the family cutoff vanishes are skipped exactly."""
    grid = amps.grid
    g = _as_samples(g, grid, "oscillation profile g")
    families = {"magnetic": _family_blocks(amps, blocks, "magnetic"),
                "velocity": _family_blocks(amps, blocks, "velocity")}
    w = np.zeros(grid.shape + (3,))
    d = np.zeros(grid.shape + (3,))
    for j in range(grid.n_t):
        if g[j] == 0.0:
            continue
        for family, triples in families.items():
            if _cutoff(amps, family)[j] == 0.0:
                continue
            amp = np.sqrt(amps.squared_slice(family, j))
            for i, fr, bs in triples:
                coef = (g[j] * amp[..., i])[..., None]
                w[j] += coef * bs.flow_slice("velocity", j)
                if family == "magnetic":
                    d[j] += coef * bs.flow_slice("magnetic", j)
    return Field(w, grid, _take=True), Field(d, grid, _take=True)


def incompressibility_correctors(amps: AmplitudeSet, blocks: dict, g,
                                 check: bool = True, tol: float = 1e-7):
    """Complete every principal term to the double curl of its shifted
    potential: per frame, curl curl (a g potential) minus a g flow splits
    into a curl of the amplitude-gradient cross term, the gradient cross
    the potential curl, plus the small-scale corrector flow. The outer
    curl is taken once per slice after summing frames.

    With check=True the double-curl representation and the divergence of
    the completed parts are verified (this rebuilds the principal parts;
    orchestrators that already hold them should verify directly).
    """
    grid = amps.grid
    g = _as_samples(g, grid, "oscillation profile g")
    families = {"magnetic": _family_blocks(amps, blocks, "magnetic"),
                "velocity": _family_blocks(amps, blocks, "velocity")}
    cross_w = np.zeros(grid.shape + (3,))
    direct_w = np.zeros(grid.shape + (3,))
    cross_d = np.zeros(grid.shape + (3,))
    direct_d = np.zeros(grid.shape + (3,))
    for j in range(grid.n_t):
        if g[j] == 0.0:
            continue
        for family, triples in families.items():
            if _cutoff(amps, family)[j] == 0.0:
                continue
            amp = np.sqrt(amps.squared_slice(family, j))
            grads = _grad3_batch(amp)
            for i, fr, bs in triples:
                da = grads[..., i, :]
                a = amp[..., i, None]
                pot = bs.flow_slice("velocity_potential", j)
                cross_w[j] += g[j] * np.cross(da, pot)
                direct_w[j] += g[j] * (
                    np.cross(da, _curl3(pot))
                    + a * bs.flow_slice("velocity_corrector", j))
                if family == "magnetic":
                    pot = bs.flow_slice("magnetic_potential", j)
                    cross_d[j] += g[j] * np.cross(da, pot)
                    direct_d[j] += g[j] * (
                        np.cross(da, _curl3(pot))
                        + a * bs.flow_slice("magnetic_corrector", j))
    for j in range(grid.n_t):
        if g[j] == 0.0:
            continue
        cross_w[j] = _curl3(cross_w[j]) + direct_w[j]
        cross_d[j] = _curl3(cross_d[j]) + direct_d[j]
    w_c = Field(cross_w, grid, _take=True)
    d_c = Field(cross_d, grid, _take=True)
    if check:
        w_p, d_p = principal_parts(amps, blocks, g)
        verify_divfree_representation(amps, blocks, g, w_p, w_c, d_p, d_c,
                                      tol=tol)
    return w_c, d_c


def temporal_correctors_t(amps: AmplitudeSet, blocks: dict, g, mu: float,
                          check: bool = True, tol: float = 1e-6):
    """Minus the solenoidal low-pass of the transport charges: squared
    amplitude times squared oscillation times the squared flow envelope,
    directed along each quadratic product's driving direction. The time
    derivative of these parts cancels the transport term the products
    shed; mu is the common block transport rate."""
    grid = amps.grid
    g = _as_samples(g, grid, "oscillation profile g")
    if not mu > 0.0:
        raise ValueError("temporal correctors need a positive transport rate")
    families = {"magnetic": _family_blocks(amps, blocks, "magnetic"),
                "velocity": _family_blocks(amps, blocks, "velocity")}
    for triples in families.values():
        for _, fr, bs in triples:
            if bs.params.mu != mu:
                raise ValueError(
                    f"block set {fr.name} was sampled at transport rate "
                    f"{bs.params.mu:g}, not {mu:g}")
    acc_w = np.zeros(grid.shape + (3,))
    acc_d = np.zeros(grid.shape + (3,))
    for j in range(grid.n_t):
        if g[j] == 0.0:
            continue
        g2 = g[j] ** 2
        for family, triples in families.items():
            if _cutoff(amps, family)[j] == 0.0:
                continue
            a2 = amps.squared_slice(family, j)
            for i, fr, bs in triples:
                charge = (g2 * a2[..., i] * _profile_square(bs, j))[..., None]
                acc_w[j] += charge * fr.k1
                if family == "magnetic":
                    acc_d[j] += charge * fr.k2
    w_t = (-1.0 / mu) * leray(p_neq0(Field(acc_w, grid, _take=True)))
    d_t = (-1.0 / mu) * leray(p_neq0(Field(acc_d, grid, _take=True)))
    if check:
        verify_temporal_balance(amps, blocks, g, mu, w_t, d_t, tol=tol)
    return w_t, d_t


def temporal_correctors_o(amps: AmplitudeSet, blocks: dict, h, sigma: float,
                          g=None, check: bool = True, tol: float = 1e-6):
    """Minus sigma^{-1} times the solenoidal low-pass of the
    antiderivative-weighted mean-product gradients. These absorb the
    low-frequency residue of the squared oscillation profile, traded for
    a time derivative through h with h' = sigma (g^2 - 1); the mean
    matrices are the measured grid moments. Checking the balance needs
    the oscillation profile g itself."""
    grid = amps.grid
    h = _as_samples(h, grid, "antiderivative profile h")
    if not sigma > 0.0:
        raise ValueError("low-frequency correctors need a positive "
                         "oscillation rate sigma")
    vel = _family_blocks(amps, blocks, "velocity")
    mag = _family_blocks(amps, blocks, "magnetic")
    m_vel, m_mag = _mean_matrices(amps, blocks, vel, mag)
    acc_w = np.zeros(grid.shape + (3,))
    acc_d = np.zeros(grid.shape + (3,))
    for j in range(grid.n_t):
        if h[j] == 0.0:
            continue
        for family, triples in (("velocity", vel), ("magnetic", mag)):
            if _cutoff(amps, family)[j] == 0.0:
                continue
            grads = _grad3_batch(amps.squared_slice(family, j))
            for i, fr, bs in triples:
                ga2 = grads[..., i, :]
                acc_w[j] += h[j] * np.einsum(
                    "ab,...b->...a", m_vel[fr.name], ga2)
                if family == "magnetic":
                    acc_d[j] += h[j] * np.einsum(
                        "ab,...b->...a", m_mag[fr.name], ga2)
    w_o = (-1.0 / sigma) * leray(p_neq0(Field(acc_w, grid, _take=True)))
    d_o = (-1.0 / sigma) * leray(p_neq0(Field(acc_d, grid, _take=True)))
    if check:
        if g is None:
            raise ValueError("checking the low-frequency balance needs the "
                             "oscillation profile g")
        verify_low_frequency_balance(amps, blocks, h, sigma, g, w_o, d_o,
                                     tol=tol)
    return w_o, d_o


def build_perturbation(amps: AmplitudeSet, blocks: dict, temporal, mu: float,
                       check: bool = True, representation_tol: float = 1e-7,
                       balance_tol: float = 1e-6) -> Perturbation:
    """Assemble all eight parts from one temporal profile pair. With
    check=True every balance verifier runs once over the finished parts;
    the builders themselves run unchecked so nothing is built twice."""
    if not getattr(temporal, "banded", True):
        raise ValueError(
            "the corrector balances need a band-limited temporal pair; "
            "build one with make_temporal(..., n_t=..., band=...)")
    t = amps.grid.t()
    g = temporal.g(t)
    h = temporal.h(t)
    sigma = float(temporal.sigma)
    w_p, d_p = principal_parts(amps, blocks, g)
    w_c, d_c = incompressibility_correctors(amps, blocks, g, check=False)
    w_t, d_t = temporal_correctors_t(amps, blocks, g, mu, check=False)
    w_o, d_o = temporal_correctors_o(amps, blocks, h, sigma, check=False)
    pert = Perturbation(w_p=w_p, w_c=w_c, w_t=w_t, w_o=w_o,
                        d_p=d_p, d_c=d_c, d_t=d_t, d_o=d_o)
    if check:
        verify_divfree_representation(amps, blocks, g, w_p, w_c, d_p, d_c,
                                      tol=representation_tol)
        verify_temporal_balance(amps, blocks, g, mu, w_t, d_t,
                                tol=balance_tol)
        verify_low_frequency_balance(amps, blocks, h, sigma, g, w_o, d_o,
                                     tol=balance_tol)
    return pert


# -- balance verifiers -----------------------------------------------------------

def _require_vector_on(grid, what, *fields):
    for f in fields:
        if f.grid != grid:
            raise ValueError(f"{what} lives on a different grid")
        if f.rank != 1:
            raise ValueError(f"{what} must be a vector field")


def verify_divfree_representation(amps, blocks, g, w_p, w_c, d_p, d_c,
                                  time_indices=None, tol: float = 1e-7,
                                  div_tol: float = 1e-8):
    """Check, slice by slice, that principal plus incompressibility parts
    equal the double curl of the summed potentials, and that their
    divergence vanishes against the gradient scale. Returns the residual
    report; raises naming the violated balance."""
    grid = amps.grid
    g = _as_samples(g, grid, "oscillation profile g")
    _require_vector_on(grid, "perturbation part", w_p, w_c, d_p, d_c)
    families = {"magnetic": _family_blocks(amps, blocks, "magnetic"),
                "velocity": _family_blocks(amps, blocks, "velocity")}
    if time_indices is None:
        time_indices = range(grid.n_t)
    report = {"velocity_representation": 0.0, "magnetic_representation": 0.0,
              "velocity_divergence": 0.0, "magnetic_divergence": 0.0}
    tail = 0.0
    for j in time_indices:
        wsum = w_p.data[j] + w_c.data[j]
        dsum = d_p.data[j] + d_c.data[j]
        div, scale = _div3(wsum)
        if scale > 0.0:
            report["velocity_divergence"] = max(
                report["velocity_divergence"], float(np.abs(div).max()) / scale)
        div, scale = _div3(dsum)
        if scale > 0.0:
            report["magnetic_divergence"] = max(
                report["magnetic_divergence"], float(np.abs(div).max()) / scale)
        if g[j] == 0.0:
            continue
        pot_w = np.zeros(grid.shape[1:] + (3,))
        pot_d = np.zeros(grid.shape[1:] + (3,))
        for family, triples in families.items():
            if _cutoff(amps, family)[j] == 0.0:
                continue
            a2 = amps.squared_slice(family, j)
            tail = max(tail, _tail3(a2.sum(axis=-1)))
            amp = np.sqrt(a2)
            for i, fr, bs in triples:
                coef = (g[j] * amp[..., i])[..., None]
                pot_w += coef * bs.flow_slice("velocity_potential", j)
                if family == "magnetic":
                    pot_d += coef * bs.flow_slice("magnetic_potential", j)
        for key, lhs, pot in (("velocity_representation", wsum, pot_w),
                              ("magnetic_representation", dsum, pot_d)):
            rhs = _curl_curl3(pot)
            scale = max(float(np.abs(lhs).max()), float(np.abs(rhs).max()),
                        amps.delta_next)
            report[key] = max(report[key],
                              float(np.abs(lhs - rhs).max()) / scale)
    _gate(report, (("velocity_representation",
                    "velocity double-curl representation"),
                   ("magnetic_representation",
                    "magnetic double-curl representation")), tol, tail)
    effective_div = max(div_tol, _TAIL_FACTOR * tail)
    report["divergence_tolerance"] = effective_div
    for key, label in (("velocity_divergence", "velocity incompressibility"),
                       ("magnetic_divergence", "magnetic incompressibility")):
        if report[key] > effective_div:
            raise CorrectorIdentityError(
                f"{label} residual {report[key]:g} exceeds {effective_div:g} "
                f"(raw tolerance {div_tol:g}, amplitude tail {tail:g})")
    return report


def verify_temporal_balance(amps, blocks, g, mu: float, w_t, d_t,
                            tol: float = 1e-6):
    """Evaluate both transport balances literally, in four term groups:
    corrector evolution plus oscillation transport against the pressure
    gradient plus the gradient-transfer and profile-drift remainders.
    Every group is assembled from samples; the time derivative forces a
    full sweep, so there is no slice subsetting here."""
    grid = amps.grid
    g = _as_samples(g, grid, "oscillation profile g")
    if not mu > 0.0:
        raise ValueError("the temporal balance needs a positive transport rate")
    _require_vector_on(grid, "temporal corrector", w_t, d_t)
    families = {"magnetic": _family_blocks(amps, blocks, "magnetic"),
                "velocity": _family_blocks(amps, blocks, "velocity")}
    shape_v = grid.shape + (3,)
    acc = {"velocity": np.zeros(shape_v), "magnetic": np.zeros(shape_v)}
    osc = {"velocity": np.zeros(shape_v), "magnetic": np.zeros(shape_v)}
    drift = {"velocity": np.zeros(shape_v), "magnetic": np.zeros(shape_v)}
    tail = 0.0
    for j in range(grid.n_t):
        if g[j] == 0.0:
            continue
        g2 = g[j] ** 2
        tens_v = np.zeros(grid.shape[1:] + (3, 3))
        tens_m = np.zeros(grid.shape[1:] + (3, 3))
        for family, triples in families.items():
            if _cutoff(amps, family)[j] == 0.0:
                continue
            a2 = amps.squared_slice(family, j)
            tail = max(tail, _tail3(a2.sum(axis=-1)))
            grads = _grad3_batch(a2)
            for i, fr, bs in triples:
                flow_w = bs.flow_slice("velocity", j)
                charge = (g2 * a2[..., i] * _profile_square(bs, j))[..., None]
                acc["velocity"][j] += charge * fr.k1
                prod_v = np.einsum("...a,...b->...ab", flow_w, flow_w)
                if family == "magnetic":
                    flow_d = bs.flow_slice("magnetic", j)
                    acc["magnetic"][j] += charge * fr.k2
                    prod_v = prod_v - np.einsum(
                        "...a,...b->...ab", flow_d, flow_d)
                    prod_m = np.einsum("...a,...b->...ab", flow_d, flow_w)
                    prod_m = prod_m - np.swapaxes(prod_m, -1, -2)
                    tens_m += a2[..., i, None, None] * prod_m
                    drift["magnetic"][j] += g2 * np.einsum(
                        "...ab,...b->...a", prod_m, grads[..., i, :])
                tens_v += a2[..., i, None, None] * prod_v
                drift["velocity"][j] += g2 * np.einsum(
                    "...ab,...b->...a", prod_v, grads[..., i, :])
        osc["velocity"][j], _ = _div3_tensor(tens_v)
        osc["velocity"][j] *= g2
        osc["magnetic"][j], _ = _div3_tensor(tens_m)
        osc["magnetic"][j] *= g2
    # profile drift, time-derivative half: - mu^{-1} envelope^2 k d_t(a^2 g^2)
    g2_all = g ** 2
    for family, triples in families.items():
        for i, fr, bs in triples:
            q = np.empty(grid.shape)
            for j in range(grid.n_t):
                q[j] = g2_all[j] * amps.squared_component_slice(family, i, j)
            dq = ddt(Field(q, grid, _take=True)).data
            for j in range(grid.n_t):
                pulled = (_profile_square(bs, j) * dq[j])[..., None] / mu
                drift["velocity"][j] -= pulled * fr.k1
                if family == "magnetic":
                    drift["magnetic"][j] -= pulled * fr.k2
    report = {}
    for side, part in (("velocity", w_t), ("magnetic", d_t)):
        charge = p_neq0(ddt(Field(acc[side], grid, _take=True)))
        pressure = (1.0 / mu) * (charge - leray(charge))
        evolution = ddt(part)
        transport = p_neq0(Field(osc[side], grid, _take=True))
        transfer = p_neq0(Field(drift[side], grid, _take=True))
        resid = (evolution.data + transport.data
                 - pressure.data - transfer.data)
        scale = max(evolution.max_abs(), transport.max_abs(),
                    pressure.max_abs(), transfer.max_abs(), amps.delta_next)
        report[f"{side}_temporal_balance"] = float(np.abs(resid).max()) / scale
    return _gate(report,
                 (("velocity_temporal_balance",
                   "velocity temporal corrector balance"),
                  ("magnetic_temporal_balance",
                   "magnetic temporal corrector balance")), tol, tail)


def verify_low_frequency_balance(amps, blocks, h, sigma: float, g, w_o, d_o,
                                 tol: float = 1e-6):
    """Evaluate both low-frequency balances literally: corrector evolution
    plus the squared-profile residue against the pressure gradient plus
    the antiderivative-weighted gradient drift. Relies on h' = sigma
    (g^2 - 1) holding exactly for the supplied profile pair."""
    grid = amps.grid
    h = _as_samples(h, grid, "antiderivative profile h")
    g = _as_samples(g, grid, "oscillation profile g")
    if not sigma > 0.0:
        raise ValueError("the low-frequency balance needs a positive "
                         "oscillation rate sigma")
    _require_vector_on(grid, "low-frequency corrector", w_o, d_o)
    vel = _family_blocks(amps, blocks, "velocity")
    mag = _family_blocks(amps, blocks, "magnetic")
    m_vel, m_mag = _mean_matrices(amps, blocks, vel, mag)
    shape_v = grid.shape + (3,)
    residue = {"velocity": np.zeros(shape_v), "magnetic": np.zeros(shape_v)}
    wander = {"velocity": np.zeros(shape_v), "magnetic": np.zeros(shape_v)}
    tail = 0.0
    g2m1 = g ** 2 - 1.0
    for j in range(grid.n_t):
        for family, triples in (("velocity", vel), ("magnetic", mag)):
            if _cutoff(amps, family)[j] == 0.0:
                continue
            a2 = amps.squared_slice(family, j)
            tail = max(tail, _tail3(a2.sum(axis=-1)))
            grads = _grad3_batch(a2)
            for i, fr, bs in triples:
                ga2 = grads[..., i, :]
                residue["velocity"][j] += g2m1[j] * np.einsum(
                    "ab,...b->...a", m_vel[fr.name], ga2)
                if family == "magnetic":
                    residue["magnetic"][j] += g2m1[j] * np.einsum(
                        "ab,...b->...a", m_mag[fr.name], ga2)
    for family, triples in (("velocity", vel), ("magnetic", mag)):
        for i, fr, bs in triples:
            q = np.empty(grid.shape)
            for j in range(grid.n_t):
                q[j] = amps.squared_component_slice(family, i, j)
            dq = ddt(Field(q, grid, _take=True)).data
            for j in range(grid.n_t):
                if h[j] == 0.0:
                    continue
                gdq = _grad3_batch(dq[j])
                wander["velocity"][j] += h[j] * np.einsum(
                    "ab,...b->...a", m_vel[fr.name], gdq)
                if family == "magnetic":
                    wander["magnetic"][j] += h[j] * np.einsum(
                        "ab,...b->...a", m_mag[fr.name], gdq)
    report = {}
    for side, part in (("velocity", w_o), ("magnetic", d_o)):
        evolution = ddt(part)
        res = p_neq0(Field(residue[side], grid, _take=True))
        pressure = res - leray(res)
        transfer = (-1.0 / sigma) * leray(
            p_neq0(Field(wander[side], grid, _take=True)))
        resid = (evolution.data + res.data - pressure.data - transfer.data)
        scale = max(evolution.max_abs(), res.max_abs(), pressure.max_abs(),
                    transfer.max_abs(), amps.delta_next)
        report[f"{side}_low_frequency_balance"] = \
            float(np.abs(resid).max()) / scale
    return _gate(report,
                 (("velocity_low_frequency_balance",
                   "velocity low-frequency corrector balance"),
                  ("magnetic_low_frequency_balance",
                   "magnetic low-frequency corrector balance")), tol, tail)


# -- assembly ---------------------------------------------------------------------

def _slice_frobenius_max(data):
    return np.array([math.sqrt(float((data[j] ** 2).sum(axis=(-2, -1)).max()))
                     for j in range(data.shape[0])])


def assemble_iterate(u_l: Field, B_l: Field, pert: Perturbation,
                     amps: AmplitudeSet, tol: float = 1e-8):
    """Add the perturbation totals onto the mollified state and gate the
    result: the totals must be solenoidal and spatially mean-free to
    tolerance, and must vanish outside the three-ell time neighborhood of
    the stress support. Returns the next state pair and the increment
    report. Means are validated, never subtracted: forcing them to zero
    would feed an unaccounted time-dependent constant into the stress."""
    grid = amps.grid
    _require_vector_on(grid, "state field", u_l, B_l)
    if pert.grid != grid:
        raise ValueError("perturbation lives on a different grid")
    w = pert.w
    d = pert.d
    report = {}
    for name, inc in (("velocity", w), ("magnetic", d)):
        div_defect = _div_rel_defect(inc)
        peak = inc.max_abs()
        mean_defect = (float(np.abs(inc.spatial_means()).max())
                       / max(peak, 1e-300))
        report[f"{name}_divergence_defect"] = div_defect
        report[f"{name}_mean_defect"] = mean_defect
        if div_defect > tol:
            raise CorrectorIdentityError(
                f"{name} perturbation is not solenoidal: relative defect "
                f"{div_defect:g} exceeds {tol:g}")
        if mean_defect > tol:
            raise CorrectorIdentityError(
                f"{name} perturbation is not spatially mean-free: relative "
                f"defect {mean_defect:g} exceeds {tol:g}")
    mask = (slice_support(_slice_frobenius_max(amps.r_l_u.data))
            | slice_support(_slice_frobenius_max(amps.r_l_b.data)))
    for name, inc in (("velocity", w), ("magnetic", d)):
        leak = 0.0
        if mask.any() and not mask.all():
            reach = int(math.ceil(3.0 * amps.ell / grid.dt))
            allowed = mask.copy()
            for shift in range(1, min(reach, grid.n_t) + 1):
                allowed |= np.roll(mask, shift) | np.roll(mask, -shift)
            if not allowed.all():
                norms = np.abs(inc.data).max(axis=(1, 2, 3, 4))
                peak = norms.max()
                if peak > 0.0:
                    leak = float(norms[~allowed].max()) / peak
        report[f"{name}_support_leak"] = leak
        if leak > 1e-10:
            raise CorrectorIdentityError(
                f"{name} perturbation leaks outside the dilated stress "
                f"support: relative slice norm {leak:g}")
    sup_l2 = MixedNormSpec.lebesgue(np.inf, 2.0)
    report["velocity_increment"] = norm(w, sup_l2)
    report["magnetic_increment"] = norm(d, sup_l2)
    report["increment_over_sqrt_delta"] = (
        report["velocity_increment"] / math.sqrt(amps.delta_next))
    return u_l + w, B_l + d, report


# -- decorrelation of slow and oscillated profiles ---------------------------------

def decorrelation_constant(slow, fast, sigma: int, p: float,
                           n: int = 1 << 13) -> float:
    """Fitted constant of the product-norm decorrelation law on the
    circle: sigma^{1/p} |  ||f g(sigma .)||_p - ||f||_p ||g||_p  | over
    ||f||_{C^1} ||g||_p, with probability-normalized norms so the
    factorized limit is exact. Both profiles must be 2 pi periodic
    callables; fast is sampled at the oscillated argument."""
    if sigma < 1 or int(sigma) != sigma:
        raise ValueError("the oscillation factor sigma must be a positive "
                         "integer")
    if not (np.isfinite(p) and p >= 1.0):
        raise ValueError("the exponent p must be finite and at least one")
    if n < 8 or n % 2:
        raise ValueError("the quadrature size must be even and at least 8")
    step = 2.0 * np.pi / n
    t = -np.pi + (np.arange(n) + 0.5) * step
    f = np.asarray(slow(t), dtype=float)
    gv = np.asarray(fast(sigma * t), dtype=float)
    if f.shape != (n,) or gv.shape != (n,):
        raise ValueError("profiles must map samples to samples")
    norm_f = float(np.mean(np.abs(f) ** p) ** (1.0 / p))
    norm_g = float(np.mean(np.abs(gv) ** p) ** (1.0 / p))
    norm_fg = float(np.mean(np.abs(f * gv) ** p) ** (1.0 / p))
    modes = np.fft.rfftfreq(n, d=1.0 / n)
    df = np.fft.irfft(1j * modes * np.fft.rfft(f), n)
    c1 = float(np.abs(f).max() + np.abs(df).max())
    if c1 <= 0.0 or norm_g <= 0.0:
        raise ValueError("decorrelation needs nonzero profiles")
    return float(sigma ** (1.0 / p) * abs(norm_fg - norm_f * norm_g)
                 / (c1 * norm_g))


def decorrelation_constants(slow, fast, sigmas=(2, 4, 8), ps=(1.0, 2.0),
                            n: int = 1 << 13) -> dict:
    """Constant table over a sigma sweep and exponent set, keyed (p, sigma).
    Stability of each row is the caller's acceptance question."""
    return {(p, s): decorrelation_constant(slow, fast, s, p, n)
            for p in ps for s in sigmas}
