"""Discrete phase-space infrastructure.

Uniform periodic grids on ``[q0, q1) x [p0, p1)`` with 4th-order central
stencils, rectangle quadrature (exact trapezoid on a periodic grid), the
canonical Poisson bracket, periodic bicubic interpolation, and Hermitian
matrix functions via eigendecomposition.

Grid arrays are indexed ``values[i, j]`` for the point
``(q0 + i*dq, p0 + j*dp)``; any trailing axes (matrix or vector components)
are carried along unchanged by the calculus operations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

# Eigenvalues below this are clamped inside ln / fractional powers; entropy
# traces use the 0*ln(0) = 0 convention instead.
EIG_CLAMP = 1e-14

HERM_TOL = 1e-12


class GridMismatchError(ValueError):
    """Fields living on different grids were combined."""


class NotHermitianError(ValueError):
    """A matrix (field) violated the Hermiticity tolerance."""


class PhaseGrid:
    """Uniform periodic Nq x Np discretization of a rectangle in (q, p).

    Parameters
    ----------
    q0, q1, p0, p1 : float
        Domain bounds; the grid covers [q0, q1) x [p0, p1) periodically.
    Nq, Np : int
        Number of points in each direction.
    hbar : float
        Planck constant carried by all quantum formulas (default 1).
    """

    def __init__(self, q0, q1, p0, p1, Nq, Np, hbar=1.0):
        if not (q1 > q0 and p1 > p0):
            raise ValueError("domain bounds must satisfy q1 > q0 and p1 > p0")
        if Nq < 8 or Np < 8:
            raise ValueError("need at least 8 points per direction for the stencils")
        if hbar <= 0:
            raise ValueError("hbar must be positive")
        self.q0, self.q1, self.p0, self.p1 = float(q0), float(q1), float(p0), float(p1)
        self.Nq, self.Np = int(Nq), int(Np)
        self.hbar = float(hbar)
        self.dq = (self.q1 - self.q0) / self.Nq
        self.dp = (self.p1 - self.p0) / self.Np
        self.q = self.q0 + self.dq * np.arange(self.Nq)
        self.p = self.p0 + self.dp * np.arange(self.Np)
        # 2D coordinate meshes, shape (Nq, Np)
        self.Q, self.P = np.meshgrid(self.q, self.p, indexing="ij")

    @property
    def shape(self):
        return (self.Nq, self.Np)

    @property
    def Lq(self):
        return self.q1 - self.q0

    @property
    def Lp(self):
        return self.p1 - self.p0

    @property
    def area(self):
        return self.Lq * self.Lp

    def compatible(self, other):
        return (
            self.shape == other.shape
            and np.isclose(self.q0, other.q0)
            and np.isclose(self.q1, other.q1)
            and np.isclose(self.p0, other.p0)
            and np.isclose(self.p1, other.p1)
        )

    def require_same(self, other):
        if self is not other and not self.compatible(other):
            raise GridMismatchError("fields live on different grids")

    # -- calculus -----------------------------------------------------------

    def partial_q(self, values):
        """4th-order periodic central difference along q (axis 0)."""
        return _diff4(np.asarray(values), 0, self.dq)

    def partial_p(self, values):
        """4th-order periodic central difference along p (axis 1)."""
        return _diff4(np.asarray(values), 1, self.dp)

    def grad(self, values):
        return self.partial_q(values), self.partial_p(values)

    def poisson_bracket(self, f, g):
        """Canonical bracket {f, g} = dq(f) dp(g) - dp(f) dq(g), pointwise."""
        return self.partial_q(f) * self.partial_p(g) - self.partial_p(f) * self.partial_q(g)

    def integrate(self, values):
        """Quadrature sum(values) * dq * dp over the first two axes.

        On a periodic grid the rectangle rule coincides with the trapezoid
        rule and is spectrally accurate for smooth periodic integrands.
        """
        return np.sum(np.asarray(values), axis=(0, 1)) * (self.dq * self.dp)

    def divergence(self, flux_q, flux_p):
        """div(F) = dq(F_q) + dp(F_p) in conservative form.

        Because the stencil is antisymmetric, the grid sum of this divergence
        telescopes to zero exactly: conservative-form transport conserves
        mass to round-off.
        """
        return self.partial_q(flux_q) + self.partial_p(flux_p)

    def interpolate(self, values, q, p):
        """Periodic bicubic interpolation of a grid field at points (q, p).

        Works for real or complex ``values`` with arbitrary trailing axes;
        q and p may be scalars or arrays (broadcast together).
        """
        values = np.asarray(values)
        q = np.asarray(q, dtype=float)
        p = np.asarray(p, dtype=float)
        iq = (q - self.q0) / self.dq
        ip = (p - self.p0) / self.dp
        coords = np.broadcast_arrays(iq, ip)
        pts_shape = coords[0].shape
        stack = np.stack([c.ravel() for c in coords])

        def _one(plane):
            if np.iscomplexobj(plane):
                re = ndimage.map_coordinates(plane.real, stack, order=3, mode="grid-wrap")
                im = ndimage.map_coordinates(plane.imag, stack, order=3, mode="grid-wrap")
                return re + 1j * im
            return ndimage.map_coordinates(plane, stack, order=3, mode="grid-wrap")

        if values.ndim == 2:
            out = _one(values)
            return out.reshape(pts_shape) if pts_shape else out[0]
        trailing = values.shape[2:]
        flatc = values.reshape(values.shape[0], values.shape[1], -1)
        cols = [_one(flatc[:, :, k]) for k in range(flatc.shape[2])]
        out = np.stack(cols, axis=-1).reshape(stack.shape[1:] + trailing)
        return out.reshape(pts_shape + trailing) if pts_shape else out[0]

    def wrap(self, q, p):
        """Map points back into the fundamental domain."""
        return (
            self.q0 + np.mod(q - self.q0, self.Lq),
            self.p0 + np.mod(p - self.p0, self.Lp),
        )


def _diff4(values, axis, h):
    m2 = np.roll(values, 2, axis=axis)
    m1 = np.roll(values, 1, axis=axis)
    p1 = np.roll(values, -1, axis=axis)
    p2 = np.roll(values, -2, axis=axis)
    # grouped by differences so constants map to exact zero
    return ((m2 - p2) + 8.0 * (p1 - m1)) / (12.0 * h)


# -- field containers -------------------------------------------------------


@dataclass
class Field:
    """Grid field: ``values[i, j, ...]`` on ``grid``; shape checked on demand."""

    grid: PhaseGrid
    values: np.ndarray

    expected_trailing = None  # overridden by subclasses, as a rank

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.shape[:2] != self.grid.shape:
            raise ValueError(
                f"field shape {self.values.shape[:2]} does not match grid {self.grid.shape}"
            )
        if self.expected_trailing is not None and self.values.ndim - 2 != self.expected_trailing:
            raise ValueError(
                f"expected {self.expected_trailing} trailing axes, got {self.values.ndim - 2}"
            )

    def d_q(self):
        return self.grid.partial_q(self.values)

    def d_p(self):
        return self.grid.partial_p(self.values)


class ScalarField(Field):
    expected_trailing = 0


class ComplexField(Field):
    expected_trailing = 0


class StateField(Field):
    """Length-n complex vector per grid point, values shape (Nq, Np, n)."""

    expected_trailing = 1


class MatrixField(Field):
    """n x n complex matrix per grid point, values shape (Nq, Np, n, n)."""

    expected_trailing = 2


class WaveOpField(Field):
    """n x m complex matrix per grid point, values shape (Nq, Np, n, m)."""

    expected_trailing = 2


@dataclass
class VectorField2:
    """Two-component phase-space vector field (X_q, X_p)."""

    grid: PhaseGrid
    X_q: np.ndarray
    X_p: np.ndarray

    def max_speed(self):
        return float(np.max(np.hypot(np.abs(self.X_q), np.abs(self.X_p))))


# -- Hermitian matrix helpers ------------------------------------------------


def dagger(M):
    return np.conj(np.swapaxes(M, -1, -2))


def hermitize(M):
    return 0.5 * (M + dagger(M))


def antiherm_residual(M):
    """Max pointwise ||M - M^dag|| relative to ||M|| (Frobenius)."""
    num = np.linalg.norm(M - dagger(M), axis=(-2, -1))
    den = np.linalg.norm(M, axis=(-2, -1))
    scale = max(float(np.max(den)), 1e-300)
    return float(np.max(num)) / scale


def require_hermitian(M, tol=HERM_TOL, what="matrix"):
    r = antiherm_residual(M)
    if r > tol:
        raise NotHermitianError(f"{what} is not Hermitian: residual {r:.3e} > {tol:.1e}")
    return hermitize(M)


def matrix_function(M, phi, clamp=None, tol=HERM_TOL):
    """Apply a scalar function to a Hermitian matrix (field) spectrally.

    ``M`` may carry leading grid axes. Eigenvalues are clamped from below at
    ``clamp`` when given (use for ln and fractional powers on semidefinite
    input). The identity map returns the input to round-off.
    """
    M = require_hermitian(M, tol)
    w, v = np.linalg.eigh(M)
    if clamp is not None:
        w = np.maximum(w, clamp)
    fw = phi(w)
    return hermitize(np.einsum("...ab,...b,...cb->...ac", v, fw, np.conj(v)))


def matrix_log(M, clamp=EIG_CLAMP):
    return matrix_function(M, np.log, clamp=clamp)


def matrix_exp_herm(M):
    return matrix_function(M, np.exp)


def matrix_power_psd(M, alpha, clamp=EIG_CLAMP):
    return matrix_function(M, lambda w: np.power(w, alpha), clamp=clamp)


def vn_entropy_trace(M, tol=HERM_TOL):
    """-Tr(M ln M) from eigenvalues, with the 0 ln 0 = 0 convention.

    Pointwise over leading axes; negative eigenvalues above -tol are treated
    as zero (PSD round-off).
    """
    M = require_hermitian(M, tol)
    w = np.linalg.eigh(M)[0]
    w = np.where(w > EIG_CLAMP, w, 1.0)  # ln(1) = 0 kills the clamped terms
    return -np.sum(w * np.log(w), axis=-1)


def trace_field(M):
    return np.real(np.trace(M, axis1=-2, axis2=-1))


# -- random smooth fields (probe generation) ---------------------------------


def random_band_limited(grid, rng, kmax=3, trailing=(), complex_valued=False):
    """Smooth random field from Fourier modes with |k| <= kmax per direction.

    Returns an array of shape grid.shape + trailing; real unless
    ``complex_valued``. Normalized to max-abs 1.
    """
    shape = trailing if isinstance(trailing, tuple) else (trailing,)
    out = np.zeros(grid.shape + shape, dtype=complex)
    kq = 2 * np.pi / grid.Lq
    kp = 2 * np.pi / grid.Lp
    for a in range(-kmax, kmax + 1):
        for b in range(-kmax, kmax + 1):
            coeff = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
            phase = np.exp(1j * (a * kq * grid.Q + b * kp * grid.P))
            out += phase[(...,) + (None,) * len(shape)] * coeff
    if not complex_valued:
        out = out.real
    return out / np.max(np.abs(out))
