"""Catalog of hybrid Hamiltonians H(q,p) with analytic phase-space gradients.

Kinds
-----
* ``uncoupled``      H = H_C(q,p) 1 + H_Q
* ``nanowire``       H = kinetic(p) 1 + eta p sigma_z + B sigma_x, optionally
                     with trigonometric (grid-periodic) surrogates for p
* ``pure_dephasing`` H = H_0(q,p) 1 + H_I(q,p) A, with a constant Hermitian A
* ``zeta_composed``  H = sum_k A_k zeta(q,p)^k, a matrix polynomial in a
                     single phase-space function zeta
* ``tabulated``      H given as raw grid data; gradients are numeric

Polynomial profiles (harmonic wells, bare coordinates) are discontinuous at
the periodic seam; scenarios using them must keep density mass near the seam
negligible. The ``trig_*`` surrogates are seam-free and reduce to their
polynomial counterparts near the domain center.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grids import PhaseGrid, hermitize, require_hermitian

SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SIGMA_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)


class UnsupportedHamiltonianError(ValueError):
    """Requested an operation outside the catalog's analytic cases."""


@dataclass
class ScalarProfile:
    """Scalar function on the grid with analytic gradient components."""

    name: str
    values: np.ndarray
    d_q: np.ndarray
    d_p: np.ndarray


def scalar_profile(grid: PhaseGrid, name: str, **params) -> ScalarProfile:
    """Build a named scalar profile; see the module docstring for seam caveats."""
    Q, P = grid.Q, grid.P
    zeros = np.zeros(grid.shape)
    amp = float(params.get("amplitude", 1.0))
    qc, pc = params.get("center", (0.5 * (grid.q0 + grid.q1), 0.5 * (grid.p0 + grid.p1)))
    mode = int(params.get("mode", 1))
    kq = 2 * np.pi * mode / grid.Lq
    kp = 2 * np.pi * mode / grid.Lp

    if name == "zero":
        return ScalarProfile(name, zeros, zeros, zeros)
    if name == "constant":
        return ScalarProfile(name, amp * np.ones(grid.shape), zeros, zeros)
    if name == "harmonic":
        omega = float(params.get("omega", 1.0))
        v = 0.5 * omega**2 * ((Q - qc) ** 2 + (P - pc) ** 2)
        return ScalarProfile(name, amp * v, amp * omega**2 * (Q - qc), amp * omega**2 * (P - pc))
    if name == "trig_well":
        # 2(1 - cos)/k^2 ~ x^2 near the center; periodic harmonic surrogate
        omega = float(params.get("omega", 1.0))
        v = (1 - np.cos(kq * (Q - qc))) / kq**2 + (1 - np.cos(kp * (P - pc))) / kp**2
        dq = np.sin(kq * (Q - qc)) / kq
        dp = np.sin(kp * (P - pc)) / kp
        s = amp * omega**2
        return ScalarProfile(name, s * v, s * dq, s * dp)
    if name == "quadratic_p":
        mass = float(params.get("mass", 1.0))
        return ScalarProfile(name, 0.5 * (P - pc) ** 2 / mass, zeros, (P - pc) / mass)
    if name == "trig_kinetic_p":
        mass = float(params.get("mass", 1.0))
        v = (1 - np.cos(kp * (P - pc))) / (mass * kp**2)
        return ScalarProfile(name, v, zeros, np.sin(kp * (P - pc)) / (mass * kp))
    if name == "coordinate_q":
        return ScalarProfile(name, amp * Q, amp * np.ones(grid.shape), zeros)
    if name == "coordinate_p":
        return ScalarProfile(name, amp * P, zeros, amp * np.ones(grid.shape))
    if name == "trig_p":
        # periodic surrogate of the bare coordinate p - pc
        return ScalarProfile(name, amp * np.sin(kp * (P - pc)) / kp, zeros, amp * np.cos(kp * (P - pc)))
    if name == "trig_q":
        return ScalarProfile(name, amp * np.sin(kq * (Q - qc)) / kq, amp * np.cos(kq * (Q - qc)), zeros)
    if name == "sin_q":
        return ScalarProfile(name, amp * np.sin(kq * (Q - qc)), amp * kq * np.cos(kq * (Q - qc)), zeros)
    if name == "cos_q":
        return ScalarProfile(name, amp * np.cos(kq * (Q - qc)), -amp * kq * np.sin(kq * (Q - qc)), zeros)
    if name == "sin_p":
        return ScalarProfile(name, amp * np.sin(kp * (P - pc)), zeros, amp * kp * np.cos(kp * (P - pc)))
    if name == "cos_p":
        return ScalarProfile(name, amp * np.cos(kp * (P - pc)), zeros, -amp * kp * np.sin(kp * (P - pc)))
    if name == "sin2_well":
        v = np.sin(kq * (Q - qc)) ** 2 + np.sin(kp * (P - pc)) ** 2
        dq = kq * np.sin(2 * kq * (Q - qc))
        dp = kp * np.sin(2 * kp * (P - pc))
        return ScalarProfile(name, amp * v, amp * dq, amp * dp)
    raise UnsupportedHamiltonianError(f"unknown scalar profile '{name}'")


@dataclass
class Hamiltonian:
    """Hybrid Hamiltonian sampled on a grid, with its phase-space gradient.

    ``X_q = dH_p`` and ``X_p = -dH_q`` are the components of the hybrid
    Hamiltonian vector field, each an n x n Hermitian matrix field.
    """

    grid: PhaseGrid
    kind: str
    H: np.ndarray
    dH_q: np.ndarray
    dH_p: np.ndarray
    params: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        self.H = require_hermitian(np.asarray(self.H, dtype=complex), 1e-12, "Hamiltonian")
        self.dH_q = hermitize(np.asarray(self.dH_q, dtype=complex))
        self.dH_p = hermitize(np.asarray(self.dH_p, dtype=complex))

    @property
    def n(self):
        return self.H.shape[-1]

    @property
    def X_q(self):
        return self.dH_p

    @property
    def X_p(self):
        return -self.dH_q

    def gradient_fd_error(self):
        """Max deviation of the stored gradient from the 4th-order stencil.

        Meaningful for seam-free (periodic) kinds only.
        """
        eq = np.max(np.abs(self.grid.partial_q(self.H) - self.dH_q))
        ep = np.max(np.abs(self.grid.partial_p(self.H) - self.dH_p))
        return float(max(eq, ep))


def _eye_like(grid, n):
    return np.broadcast_to(np.eye(n, dtype=complex), grid.shape + (n, n))


def _scalar_times(field2d, mat):
    return field2d[..., None, None] * mat


def uncoupled(grid, h_c: ScalarProfile, H_Q) -> Hamiltonian:
    H_Q = require_hermitian(np.asarray(H_Q, dtype=complex), what="H_Q")
    n = H_Q.shape[-1]
    eye = np.eye(n, dtype=complex)
    H = _scalar_times(h_c.values, eye) + H_Q
    return Hamiltonian(
        grid, "uncoupled",
        H, _scalar_times(h_c.d_q, eye), _scalar_times(h_c.d_p, eye),
        params={"h_c": h_c.name}, extras={"h_c": h_c, "H_Q": H_Q},
    )


def nanowire(grid, mass=1.0, eta=0.5, B=0.3, trig=True, center_p=None) -> Hamiltonian:
    """H = kinetic(p) 1 + eta p sigma_z + B sigma_x (quantum-nanowire form).

    With ``trig=True`` the momentum enters through grid-periodic surrogates:
    kinetic = (1 - cos k(p-pc)) / (m k^2) and p -> sin(k(p-pc))/k with
    k = 2 pi / Lp, which match p^2/2m and p near the domain center.
    """
    pc = 0.5 * (grid.p0 + grid.p1) if center_p is None else float(center_p)
    eye = np.eye(2, dtype=complex)
    if trig:
        kin = scalar_profile(grid, "trig_kinetic_p", mass=mass, center=(0.0, pc))
        pvar = scalar_profile(grid, "trig_p", center=(0.0, pc))
    else:
        kin = scalar_profile(grid, "quadratic_p", mass=mass, center=(0.0, pc))
        pvar = scalar_profile(grid, "coordinate_p")
        pvar = ScalarProfile("coordinate_p", pvar.values - pc, pvar.d_q, pvar.d_p)
    H = _scalar_times(kin.values, eye) + eta * _scalar_times(pvar.values, SIGMA_Z) + B * SIGMA_X
    dH_q = np.zeros_like(H)
    dH_p = _scalar_times(kin.d_p, eye) + eta * _scalar_times(pvar.d_p, SIGMA_Z)
    return Hamiltonian(
        grid, "nanowire", H, dH_q, dH_p,
        params={"mass": mass, "eta": eta, "B": B, "trig": bool(trig), "center_p": pc},
    )


def pure_dephasing(grid, h_0: ScalarProfile, h_i: ScalarProfile, A) -> Hamiltonian:
    """H = H_0 1 + H_I A with a constant Hermitian quantum operator A."""
    A = require_hermitian(np.asarray(A, dtype=complex), what="A")
    n = A.shape[-1]
    eye = np.eye(n, dtype=complex)
    H = _scalar_times(h_0.values, eye) + _scalar_times(h_i.values, A)
    dH_q = _scalar_times(h_0.d_q, eye) + _scalar_times(h_i.d_q, A)
    dH_p = _scalar_times(h_0.d_p, eye) + _scalar_times(h_i.d_p, A)
    return Hamiltonian(
        grid, "pure_dephasing", H, dH_q, dH_p,
        params={"h_0": h_0.name, "h_i": h_i.name},
        extras={"h_0": h_0, "h_i": h_i, "A": A},
    )


def zeta_composed(grid, zeta: ScalarProfile, coeffs) -> Hamiltonian:
    """H = sum_k A_k zeta^k and dH = (sum_k k A_k zeta^(k-1)) grad(zeta)."""
    coeffs = [require_hermitian(np.asarray(c, dtype=complex), what=f"A_{k}") for k, c in enumerate(coeffs)]
    n = coeffs[0].shape[-1]
    z = zeta.values
    H = np.zeros(grid.shape + (n, n), dtype=complex)
    dHdz = np.zeros_like(H)
    for k, A_k in enumerate(coeffs):
        H += (z**k)[..., None, None] * A_k
        if k >= 1:
            dHdz += (k * z ** (k - 1))[..., None, None] * A_k
    return Hamiltonian(
        grid, "zeta_composed",
        H, zeta.d_q[..., None, None] * dHdz, zeta.d_p[..., None, None] * dHdz,
        params={"zeta": zeta.name, "degree": len(coeffs) - 1},
        extras={"zeta": zeta, "coeffs": coeffs},
    )


def tabulated(grid, H) -> Hamiltonian:
    """Raw grid data; gradients fall back to the 4th-order stencil."""
    H = np.asarray(H, dtype=complex)
    return Hamiltonian(grid, "tabulated", H, grid.partial_q(H), grid.partial_p(H))


# -- pointwise eigen-structure -------------------------------------------------


@dataclass
class Eigenfields:
    """Pointwise spectral data of a Hamiltonian field with a smoothed gauge."""

    E: np.ndarray          # (Nq, Np, n) ascending eigenvalues
    V: np.ndarray          # (Nq, Np, n, n) eigenvector columns
    min_gap: float
    crossing_mask: np.ndarray  # True where adjacent eigenvalues are degenerate

    @property
    def has_crossing(self):
        return bool(np.any(self.crossing_mask))

    def state(self, branch):
        return self.V[..., :, branch]

    def energy(self, branch):
        return self.E[..., branch]


def eigenfields(ham: Hamiltonian, gap_tol=1e-10) -> Eigenfields:
    """Eigen-decompose H(q,p) pointwise with a smooth gauge.

    Eigenvalues ascend; each eigenvector is seeded at the grid origin with a
    real-positive leading component and then phase-aligned to its neighbor
    (previous point in q along the first row, previous point in p elsewhere),
    which maximizes the neighbor overlap. Adjacent-eigenvalue gaps below
    ``gap_tol`` are reported as crossings; the gauge is not smooth across a
    crossing locus.
    """
    w, v = np.linalg.eigh(ham.H)
    gaps = np.diff(w, axis=-1)
    crossing = np.any(np.abs(gaps) < gap_tol, axis=-1)
    min_gap = float(np.min(np.abs(gaps))) if gaps.size else np.inf

    v = v.copy()
    v[0, 0] = _leading_positive(v[0, 0])
    Nq = v.shape[0]
    for i in range(1, Nq):  # first row, march in q
        v[i, 0] = _align(v[i - 1, 0], v[i, 0])
    Np = v.shape[1]
    for j in range(1, Np):  # every column, march in p (vectorized over q)
        v[:, j] = _align(v[:, j - 1], v[:, j])
    return Eigenfields(w, v, min_gap, crossing)


def _leading_positive(v, tol=1e-12):
    absv = np.abs(v)
    lead = np.argmax(absv > tol * np.max(absv, axis=-2, keepdims=True), axis=-2)
    lv = np.take_along_axis(v, lead[..., None, :], axis=-2)[..., 0, :]
    phase = np.where(np.abs(lv) > 0, lv / np.abs(np.where(lv == 0, 1.0, lv)), 1.0)
    return v * np.conj(phase)[..., None, :]


def _align(v_ref, v, tol=1e-12):
    ov = np.sum(np.conj(v_ref) * v, axis=-2)
    mag = np.abs(ov)
    phase = np.where(mag > tol, ov / np.where(mag > 0, mag, 1.0), 1.0)
    return v * np.conj(phase)[..., None, :]


def reconstruction_error(ham: Hamiltonian, eig: Eigenfields):
    """Max pointwise || sum_n E_n v_n v_n^dag - H ||."""
    R = np.einsum("...n,...an,...bn->...ab", eig.E, eig.V, np.conj(eig.V))
    return float(np.max(np.abs(R - ham.H)))


def build(grid: PhaseGrid, spec: dict) -> Hamiltonian:
    """Construct a Hamiltonian from a config-style mapping with key 'kind'."""
    spec = dict(spec)
    kind = spec.pop("kind", None)
    if kind is None:
        raise KeyError("hamiltonian.kind")
    if kind == "uncoupled":
        prof = scalar_profile(grid, **_profile_args(spec.pop("h_c")))
        return uncoupled(grid, prof, _matrix_arg(spec.pop("H_Q")))
    if kind == "nanowire":
        return nanowire(grid, **{k: spec[k] for k in spec if k in ("mass", "eta", "B", "trig", "center_p")})
    if kind == "pure_dephasing":
        h0 = scalar_profile(grid, **_profile_args(spec.pop("h_0")))
        hi = scalar_profile(grid, **_profile_args(spec.pop("h_i")))
        return pure_dephasing(grid, h0, hi, _matrix_arg(spec.pop("A")))
    if kind == "zeta_composed":
        zeta = scalar_profile(grid, **_profile_args(spec.pop("zeta")))
        coeffs = [_matrix_arg(c) for c in spec.pop("coeffs")]
        return zeta_composed(grid, zeta, coeffs)
    if kind == "tabulated":
        return tabulated(grid, np.asarray(spec.pop("H"), dtype=complex))
    raise UnsupportedHamiltonianError(f"unknown hamiltonian kind '{kind}'")


_NAMED_MATRICES = {"sigma_x": SIGMA_X, "sigma_y": SIGMA_Y, "sigma_z": SIGMA_Z}


def _matrix_arg(m):
    if isinstance(m, str):
        if m in _NAMED_MATRICES:
            return _NAMED_MATRICES[m]
        raise UnsupportedHamiltonianError(f"unknown named matrix '{m}'")
    arr = np.asarray(m, dtype=float)
    if arr.ndim == 3 and arr.shape[-1] == 2:  # [re, im] pairs
        return arr[..., 0] + 1j * arr[..., 1]
    return arr.astype(complex)


def _profile_args(p):
    if isinstance(p, str):
        return {"name": p}
    args = dict(p)
    if "name" not in args:
        raise KeyError("profile.name")
    if "center" in args:
        args["center"] = tuple(args["center"])
    return args
