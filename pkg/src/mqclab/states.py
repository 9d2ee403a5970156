"""Hybrid-state representations and their geometry.

Three equivalent encodings of an operator-valued phase-space density:

* ``HybridDensity``    -- P(q,p), an n x n Hermitian PSD matrix field;
* ``ConditionalSplit`` -- (D, psi), scalar density times unit conditional
  state vector, P = D psi psi^dag;
* ``UhlmannSplit``     -- (D, W), scalar density times unit-Frobenius-norm
  n x m conditional wave operator, P = D W W^dag.

Plus the Berry connection / curvature of the conditional field and the
Liouville volume Lambda = 1 + hbar Im Tr {field^dag, field}.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .grids import (
    PhaseGrid,
    VectorField2,
    hermitize,
    require_hermitian,
    trace_field,
)

# Relative density floor: below eps_D * max(D) the conditional factor is not
# determined by the data and is filled by continuation instead.
EPS_D_REL = 1e-12


class UnphysicalStateError(ValueError):
    """Input violates positivity/normalization beyond tolerance."""


@dataclass
class HybridDensity:
    """Matrix-valued density P(q,p); trace integrates to 1 when normalized."""

    grid: PhaseGrid
    P: np.ndarray  # (Nq, Np, n, n) complex

    def __post_init__(self):
        self.P = np.asarray(self.P, dtype=complex)
        if self.P.shape[:2] != self.grid.shape or self.P.shape[-1] != self.P.shape[-2]:
            raise ValueError("P must have shape (Nq, Np, n, n)")

    @property
    def n(self):
        return self.P.shape[-1]

    def validate(self, herm_tol=1e-10, psd_tol=1e-10, mass_tol=1e-8):
        require_hermitian(self.P, herm_tol, what="hybrid density")
        wmin = float(np.min(np.linalg.eigvalsh(hermitize(self.P))))
        if wmin < -psd_tol:
            raise UnphysicalStateError(f"hybrid density has eigenvalue {wmin:.3e} < -{psd_tol:.1e}")
        mass = float(self.grid.integrate(trace_field(self.P)))
        if abs(mass - 1.0) > mass_tol:
            raise UnphysicalStateError(f"Tr-integral of P is {mass:.12f}, not 1")
        return self

    def mass(self):
        return float(self.grid.integrate(trace_field(self.P)))


@dataclass
class ConditionalSplit:
    """(D, psi): classical density plus unit conditional state vector."""

    grid: PhaseGrid
    D: np.ndarray    # (Nq, Np) real, >= 0
    psi: np.ndarray  # (Nq, Np, n) complex

    def __post_init__(self):
        self.D = np.asarray(self.D, dtype=float)
        self.psi = np.asarray(self.psi, dtype=complex)
        if self.D.shape != self.grid.shape or self.psi.shape[:2] != self.grid.shape:
            raise ValueError("D / psi shapes do not match grid")

    @property
    def n(self):
        return self.psi.shape[-1]

    def support(self):
        return self.D > EPS_D_REL * np.max(self.D)

    def validate(self, norm_tol=1e-10, mass_tol=1e-8):
        if np.min(self.D) < -1e-12 * np.max(self.D):
            raise UnphysicalStateError("negative classical density")
        mask = self.support()
        norms = np.linalg.norm(self.psi, axis=-1)
        err = float(np.max(np.abs(norms[mask] ** 2 - 1.0))) if np.any(mask) else 0.0
        if err > norm_tol:
            raise UnphysicalStateError(f"psi norm error {err:.3e} on the support of D")
        mass = float(self.grid.integrate(self.D))
        if abs(mass - 1.0) > mass_tol:
            raise UnphysicalStateError(f"D integrates to {mass:.12f}, not 1")
        return self


@dataclass
class UhlmannSplit:
    """(D, W): classical density plus unit-Frobenius conditional wave operator."""

    grid: PhaseGrid
    D: np.ndarray  # (Nq, Np) real, >= 0
    W: np.ndarray  # (Nq, Np, n, m) complex

    def __post_init__(self):
        self.D = np.asarray(self.D, dtype=float)
        self.W = np.asarray(self.W, dtype=complex)
        if self.D.shape != self.grid.shape or self.W.shape[:2] != self.grid.shape:
            raise ValueError("D / W shapes do not match grid")

    @property
    def n(self):
        return self.W.shape[-2]

    @property
    def m(self):
        return self.W.shape[-1]

    def support(self):
        return self.D > EPS_D_REL * np.max(self.D)

    def validate(self, norm_tol=1e-10, mass_tol=1e-8):
        if np.min(self.D) < -1e-12 * np.max(self.D):
            raise UnphysicalStateError("negative classical density")
        mask = self.support()
        norms = np.linalg.norm(self.W, axis=(-2, -1))
        err = float(np.max(np.abs(norms[mask] ** 2 - 1.0))) if np.any(mask) else 0.0
        if err > norm_tol:
            raise UnphysicalStateError(f"W Frobenius-norm error {err:.3e} on the support of D")
        mass = float(self.grid.integrate(self.D))
        if abs(mass - 1.0) > mass_tol:
            raise UnphysicalStateError(f"D integrates to {mass:.12f}, not 1")
        return self


@dataclass
class BerryData:
    """Berry connection, curvature density B/omega, and Liouville volume."""

    A_B: VectorField2
    curvature_density: np.ndarray
    Lambda: np.ndarray
    lambda_positive: bool = field(default=True)


# -- marginals and composition ------------------------------------------------


def classical_density(state: HybridDensity):
    """D = Tr P, pointwise."""
    return trace_field(state.P)


def quantum_marginal(state_or_split):
    """rho = integral of P over phase space; Hermitian, unit trace."""
    if isinstance(state_or_split, HybridDensity):
        P = state_or_split.P
        grid = state_or_split.grid
    else:
        P = compose(state_or_split).P
        grid = state_or_split.grid
    return hermitize(grid.integrate(P))


def purity(rho):
    """Tr rho^2 of a density matrix; in [1/n, 1]."""
    return float(np.real(np.trace(rho @ rho)))


def compose(split):
    """Assemble P = D psi psi^dag (or D W W^dag) from a split."""
    if isinstance(split, ConditionalSplit):
        outer = np.einsum("ija,ijb->ijab", split.psi, np.conj(split.psi))
    elif isinstance(split, UhlmannSplit):
        outer = np.einsum("ijak,ijbk->ijab", split.W, np.conj(split.W))
    else:
        raise TypeError("compose expects a ConditionalSplit or UhlmannSplit")
    return HybridDensity(split.grid, split.D[..., None, None] * outer)


def conditional_to_uhlmann(split: ConditionalSplit, m=None):
    """Embed psi as the first column of an n x m wave operator."""
    m = split.n if m is None else int(m)
    W = np.zeros(split.grid.shape + (split.n, m), dtype=complex)
    W[..., :, 0] = split.psi
    return UhlmannSplit(split.grid, split.D, W)


# -- Uhlmann factorization -----------------------------------------------------


def uhlmann_factor(state: HybridDensity, m=None, psd_tol=1e-10):
    """Factor P = D W W^dag with a deterministic gauge.

    Pointwise eigendecomposition with eigenvalues in descending order and the
    first non-negligible component of each eigenvector rotated real-positive.
    Columns are scaled by sqrt(lambda / D) and zero-padded to m >= n columns.
    Vacuum points (D below the relative floor) inherit W from the nearest
    valid grid point along grid lines.
    """
    n = state.n
    m = n if m is None else int(m)
    if m < n:
        raise ValueError(f"ancilla dimension m={m} must be >= n={n}")
    P = hermitize(state.P)
    D = trace_field(P)
    w, v = np.linalg.eigh(P)
    if float(np.min(w)) < -psd_tol * max(float(np.max(D)), 1.0):
        raise UnphysicalStateError(
            f"hybrid density has eigenvalue {float(np.min(w)):.3e}; not PSD"
        )
    w = np.maximum(w, 0.0)
    # descending eigenvalues
    w = w[..., ::-1]
    v = v[..., ::-1]
    v = _fix_eigvec_phase(v)

    valid = D > EPS_D_REL * max(float(np.max(D)), 1e-300)
    Dsafe = np.where(valid, D, 1.0)
    cols = v * np.sqrt(w / Dsafe[..., None])[..., None, :]
    W = np.zeros(state.grid.shape + (n, m), dtype=complex)
    W[..., :, :n] = cols
    if not np.all(valid):
        W = _continue_into_vacuum(W, valid)
    return UhlmannSplit(state.grid, D, W)


def _fix_eigvec_phase(v, tol=1e-12):
    """Rotate each eigenvector so its first non-negligible entry is real > 0."""
    n = v.shape[-2]
    absv = np.abs(v)
    lead = np.argmax(absv > tol * np.max(absv, axis=-2, keepdims=True), axis=-2)
    lead_vals = np.take_along_axis(v, lead[..., None, :], axis=-2)[..., 0, :]
    phase = np.where(np.abs(lead_vals) > 0, lead_vals / np.abs(np.where(lead_vals == 0, 1, lead_vals)), 1.0)
    return v * np.conj(phase)[..., None, :]


def _continue_into_vacuum(W, valid):
    """Fill invalid points by copying from the nearest valid 4-neighbor,
    iterating until the whole (periodic) grid is covered."""
    W = W.copy()
    valid = valid.copy()
    while not np.all(valid):
        progress = False
        for axis, shift in ((0, 1), (0, -1), (1, 1), (1, -1)):
            src_valid = np.roll(valid, shift, axis=axis)
            fill = (~valid) & src_valid
            if np.any(fill):
                W[fill] = np.roll(W, shift, axis=axis)[fill]
                valid |= fill
                progress = True
        if not progress:  # nothing valid anywhere: leave zeros
            break
    return W


# -- Berry geometry ------------------------------------------------------------


def berry_data(grid: PhaseGrid, fieldvals, warn_nonpositive=True):
    """Berry connection and Liouville volume of a conditional field.

    ``fieldvals`` is (Nq, Np, n) for a state vector or (Nq, Np, n, m) for a
    wave operator; components are paired with the real part of the full
    (Frobenius) inner product:

        A_k      = hbar Im <field | d_k field>
        Lambda   = 1 + 2 hbar Im <d_q field | d_p field>

    equal to 1 + hbar Im Tr {field^dag, field}. A non-positive Lambda is
    reported with a warning, not an error.
    """
    f = np.asarray(fieldvals, dtype=complex)
    axes = tuple(range(2, f.ndim))
    fq = grid.partial_q(f)
    fp = grid.partial_p(f)
    hbar = grid.hbar
    A_q = hbar * np.sum(np.conj(f) * fq, axis=axes).imag
    A_p = hbar * np.sum(np.conj(f) * fp, axis=axes).imag
    curv = 2.0 * hbar * np.sum(np.conj(fq) * fp, axis=axes).imag
    Lam = 1.0 + curv
    positive = bool(np.min(Lam) > 0)
    if warn_nonpositive and not positive:
        warnings.warn(
            f"Liouville volume reaches min {float(np.min(Lam)):.3e} <= 0; "
            "divergence-type entropies are not meaningful for this state",
            RuntimeWarning,
            stacklevel=2,
        )
    return BerryData(VectorField2(grid, A_q, A_p), curv, Lam, positive)


def lambda_of(split):
    """Liouville volume of a split state (from psi or W derivatives)."""
    vals = split.psi if isinstance(split, ConditionalSplit) else split.W
    return berry_data(split.grid, vals, warn_nonpositive=False).Lambda
