"""Degree-d line bundle sections on one torus factor built from Jacobi theta series.

The basic building block is

    theta(z) = sum_m exp(i pi m^2 tau + 2 pi i m z),

periodic under z -> z+1 and quasi-periodic under z -> z+tau with factor
exp(-i pi tau - 2 pi i z); its zero sits at the lattice center (1+tau)/2.
A degree-d section is a product of d translated theta factors and the
background hermitian metric weight exp(-2 pi d (Im z)^2 / Im tau), which makes

    S0 = |product|^2 * weight

doubly periodic provided the zero points sum to d times the center up to a
real offset; build_section enforces that by sliding the last zero along the
tau direction.  The background curvature density is then the constant
rho0 = 2 pi d / vol, so integrate(rho0) = 2 pi d.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .grids import Lattice, ScalarField, TorusGrid, laplacian


def default_trunc(lattice: Lattice, im_extent: float | None = None) -> int:
    """Smallest series cutoff with tail below ~1e-18 for |Im z| <= im_extent."""
    b = lattice.b
    ext = 2.0 * b if im_extent is None else float(im_extent)
    r = ext / b
    return int(np.ceil(r + np.sqrt(r * r + 41.0 / (np.pi * b)))) + 1


def theta_value(z, lattice: Lattice, trunc: int | None = None):
    """Truncated theta series at z (scalar or ndarray of complex)."""
    if trunc is None:
        trunc = default_trunc(lattice, np.max(np.abs(np.imag(z))) if np.size(z) else None)
    if trunc < 1:
        raise ValidationError(f"theta truncation must be >= 1, got {trunc}")
    z = np.asarray(z, dtype=complex)
    m = np.arange(-trunc, trunc + 1).reshape((2 * trunc + 1,) + (1,) * z.ndim)
    terms = np.exp(1j * np.pi * m * m * lattice.tau_lat + 2j * np.pi * m * z[None, ...])
    return terms.sum(axis=0)


def theta_deriv(z, lattice: Lattice, trunc: int | None = None):
    """d theta / dz with the same truncation rule as theta_value."""
    if trunc is None:
        trunc = default_trunc(lattice, np.max(np.abs(np.imag(z))) if np.size(z) else None)
    z = np.asarray(z, dtype=complex)
    m = np.arange(-trunc, trunc + 1).reshape((2 * trunc + 1,) + (1,) * z.ndim)
    terms = (2j * np.pi * m) * np.exp(1j * np.pi * m * m * lattice.tau_lat + 2j * np.pi * m * z[None, ...])
    return terms.sum(axis=0)


@dataclass
class ThetaBundle:
    """Degree-d holomorphic data: lattice, zero points, series truncation."""

    lattice: Lattice
    d: int
    zero_points: list | None = None
    trunc: int | None = None

    def __post_init__(self):
        if self.d < 1:
            raise ValidationError(f"bundle degree must be >= 1, got {self.d}")
        if self.zero_points is not None and len(self.zero_points) != self.d:
            raise ValidationError(f"need {self.d} zero points, got {len(self.zero_points)}")

    @property
    def center(self) -> complex:
        return (1.0 + self.lattice.tau_lat) / 2.0

    def effective_zeros(self) -> np.ndarray:
        """Zero points with the last factor slid along tau so the weight closes up.

        Double periodicity of S0 needs Im(sum z_k) = d * Im(center); any real
        residual offset drops out of |.|^2.
        """
        if self.zero_points is None:
            return np.full(self.d, self.center, dtype=complex)
        zs = np.array(self.zero_points, dtype=complex)
        slide = (self.d * np.imag(self.center) - np.sum(np.imag(zs))) / self.lattice.b
        zs[-1] = zs[-1] + slide * self.lattice.tau_lat
        return zs


@dataclass
class SectionTrivialization:
    """Holomorphic factor F, its z-derivative, and the weight exponent w0.

    S0 = |F|^2 exp(-w0) with w0 = 2 pi d b y^2; kept so curvature quantities
    can be computed from the connection directly instead of through S0.
    """

    F: np.ndarray
    dzF: np.ndarray
    w0: np.ndarray


@dataclass
class SectionData:
    """Sampled section norm S0 = |phi|^2_{h0} and background curvature density."""

    grid: TorusGrid
    S0: ScalarField
    rho0: ScalarField
    d: int
    triv: SectionTrivialization | None = None

    @classmethod
    def constant(cls, grid: TorusGrid, d: int, s0: float) -> "SectionData":
        """Synthetic constant data; no underlying holomorphic section."""
        if s0 < 0:
            raise ValidationError(f"constant section norm must be >= 0, got {s0}")
        return cls(grid, ScalarField.constant(grid, s0),
                   ScalarField.constant(grid, 2.0 * np.pi * d / grid.vol), d, None)


def _theta_factors(bundle: ThetaBundle, z: np.ndarray, trunc: int):
    zeros = bundle.effective_zeros()
    shifts = [z - w + bundle.center for w in zeros]
    th = [theta_value(s, bundle.lattice, trunc) for s in shifts]
    dth = [theta_deriv(s, bundle.lattice, trunc) for s in shifts]
    return th, dth


def build_section(bundle: ThetaBundle, grid: TorusGrid) -> SectionData:
    """Sample S0 on the grid, with the trivialization kept for curvature routes."""
    if grid.lattice != bundle.lattice:
        raise ValidationError("bundle and grid lattices differ")
    trunc = bundle.trunc or default_trunc(bundle.lattice, bundle.lattice.b)
    th, dth = _theta_factors(bundle, grid.z, trunc)
    F = np.ones(grid.shape, dtype=complex)
    for t in th:
        F = F * t
    # leave-one-out products keep dzF finite at the zeros
    dzF = np.zeros(grid.shape, dtype=complex)
    for j in range(bundle.d):
        part = dth[j].copy()
        for k in range(bundle.d):
            if k != j:
                part *= th[k]
        dzF += part
    w0 = 2.0 * np.pi * bundle.d * bundle.lattice.b * grid.y ** 2
    S0 = ScalarField(grid, np.abs(F) ** 2 * np.exp(-w0))
    rho0 = ScalarField.constant(grid, 2.0 * np.pi * bundle.d / grid.vol)
    return SectionData(grid, S0, rho0, bundle.d, SectionTrivialization(F, dzF, w0))


def section_norm_at(bundle: ThetaBundle, z, trunc: int | None = None):
    """S0 at arbitrary complex points; off-grid probe for periodicity checks."""
    if trunc is None:
        trunc = default_trunc(bundle.lattice, float(np.max(np.abs(np.imag(z)))) + bundle.lattice.b)
    z = np.asarray(z, dtype=complex)
    th, _ = _theta_factors(bundle, z, trunc)
    F = np.ones_like(z)
    for t in th:
        F = F * t
    w0 = 2.0 * np.pi * bundle.d * (np.imag(z) ** 2) / bundle.lattice.b
    return np.abs(F) ** 2 * np.exp(-w0)


def weitzenbock_defect(sec: SectionData, psi: ScalarField) -> ScalarField:
    """G = laplacian(S) + rho_h * S for S = S0 e^{-psi}, rho_h = rho0 + laplacian(psi).

    Pointwise nonnegative up to discretization: G equals the squared norm
    density of the (1,0) covariant derivative of the section.
    """
    S = sec.S0 * ScalarField(psi.grid, np.exp(-psi.values))
    rho_h = sec.rho0 + laplacian(psi)
    return laplacian(S) + rho_h * S


def gradient_density(sec: SectionData, psi: ScalarField) -> ScalarField:
    """Direct route to the Weitzenbock density: (2b/vol) |dz F - F dz(w0+psi)|^2 e^{-(w0+psi)}.

    Uses the connection on the trivialization, so it is independent of the
    spectral Laplacian of S; only available for theta-built sections.
    """
    if sec.triv is None:
        raise ValidationError("gradient_density needs a theta-built section")
    g = sec.grid
    dz_weight = -2j * np.pi * sec.d * g.y + g.dz_values(psi.values)
    cov = sec.triv.dzF - sec.triv.F * dz_weight
    dens = (2.0 * g.lattice.b / g.vol) * np.abs(cov) ** 2 * np.exp(-(sec.triv.w0 + psi.values))
    return ScalarField(g, dens)
