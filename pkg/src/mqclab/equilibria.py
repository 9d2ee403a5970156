"""Maximum-entropy equilibrium states and stationarity certification.

Closed-form Gibbs profiles exist in the two analytically solvable families:

* ``pure_dephasing``  H = H_0 1 + H_I A: psi is a constant eigenvector of A
  (so Lambda = 1) and D ~ exp(-mu (H_0 + a_n H_I)) on the chosen branch;
* ``zeta_composed``   H = H(zeta(q,p)): psi is the smooth eigenvector field
  of the branch (Lambda = 1 up to discretization) and D ~ exp(-mu E_n).

The Uhlmann representation admits the full Gibbs operator
P = exp(-mu H) / Tr-integral(exp(-mu H)) in the zeta-composed (or uncoupled)
case. General hybrid Hamiltonians are rejected: no explicit equilibrium
profile is available for them, which is the detailed-balance obstruction this
module quantifies via residuals rather than resolves.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import dynamics as _dyn
from . import invariants as _inv
from .grids import hermitize, matrix_exp_herm, trace_field
from .hamiltonians import Hamiltonian, UnsupportedHamiltonianError, eigenfields
from .states import ConditionalSplit, HybridDensity, UhlmannSplit, lambda_of, uhlmann_factor


@dataclass
class MaxEntProblem:
    """Equilibrium request: exactly one of E (target energy) or mu given."""

    representation: str  # mean_field | conditional | uhlmann
    ham: Hamiltonian
    E: float = None
    mu: float = None
    branch: int = 0

    def __post_init__(self):
        if (self.E is None) == (self.mu is None):
            raise ValueError("give exactly one of E or mu")
        if self.representation not in ("mean_field", "conditional", "uhlmann"):
            raise ValueError(f"unknown representation '{self.representation}'")
        if not 0 <= self.branch < self.ham.n:
            raise ValueError(f"branch {self.branch} outside quantum dimension {self.ham.n}")


@dataclass
class EquilibriumResult:
    state: object
    mu: float
    Z_C: float
    branch: int
    energy: float
    residuals: dict = field(default_factory=dict)


def _seam_ring(shape, ring=2):
    edge = np.zeros(shape, dtype=bool)
    edge[:ring, :] = edge[-ring:, :] = True
    edge[:, :ring] = edge[:, -ring:] = True
    return edge


def _seam_kinked(grid, values, d_q, d_p):
    """True when the field is a truncated non-periodic function: the stencil
    derivative disagrees with the analytic one at the seam far more than in
    the interior."""
    edge = _seam_ring(grid.shape)
    err = np.abs(grid.partial_q(values) - d_q) + np.abs(grid.partial_p(values) - d_p)
    seam = float(np.max(err[edge]))
    interior = float(np.max(err[~edge]))
    scale = float(np.max(np.abs(d_q)) + np.max(np.abs(d_p))) + 1e-300
    return seam > 100.0 * interior + 1e-8 * scale


def _check_confined(grid, D, kinked, ring=2, reject_tol=1e-6, warn_tol=1e-10):
    """For truncated (seam-kinked) landscapes, Gibbs mass must decay toward
    the seam; periodic landscapes live on the torus natively and need no
    check."""
    if not kinked:
        return
    edge = _seam_ring(grid.shape, ring)
    total = float(grid.integrate(D))
    ring_mass = float(grid.integrate(np.where(edge, D, 0.0))) / max(total, 1e-300)
    if ring_mass > reject_tol:
        raise ValueError(
            f"Gibbs weight carries mass fraction {ring_mass:.2e} at the domain seam "
            "of a non-periodic landscape; the branch is not normalizable on this domain"
        )
    if ring_mass > warn_tol:
        warnings.warn(
            f"Gibbs profile carries mass {ring_mass:.2e} within {ring} cells of the seam; "
            "truncation error may not be subdominant",
            RuntimeWarning,
        )


def gibbs_conditional(problem: MaxEntProblem, check_confined=True) -> EquilibriumResult:
    """Conditional-representation maximum-entropy state on one branch."""
    ham = problem.ham
    grid = ham.grid
    mu = problem.mu if problem.mu is not None else solve_mu(problem)[0]

    if ham.kind == "pure_dephasing":
        A = ham.extras["A"]
        a_vals, a_vecs = np.linalg.eigh(A)
        a_n = float(a_vals[problem.branch])
        vec = a_vecs[:, problem.branch]
        lead = np.argmax(np.abs(vec) > 1e-12)
        vec = vec * np.conj(vec[lead] / abs(vec[lead]))
        psi = np.broadcast_to(vec, grid.shape + vec.shape).copy()
        E_field = ham.extras["h_0"].values + a_n * ham.extras["h_i"].values
    elif ham.kind in ("zeta_composed", "nanowire"):
        eig = eigenfields(ham)
        if eig.has_crossing:
            raise ValueError(
                "eigenvalue crossing on the grid: the branch eigenfield is "
                "ill-defined; no equilibrium returned"
            )
        psi = np.ascontiguousarray(eig.state(problem.branch))
        E_field = eig.energy(problem.branch)
    else:
        raise UnsupportedHamiltonianError(
            f"no explicit conditional equilibrium for kind '{ham.kind}': the "
            "maximum-entropy conditions are only solvable for zeta-composed "
            "and pure-dephasing Hamiltonians"
        )

    dE_q = np.einsum("ija,ijab,ijb->ij", np.conj(psi), ham.dH_q, psi).real
    dE_p = np.einsum("ija,ijab,ijb->ij", np.conj(psi), ham.dH_p, psi).real
    w = np.exp(-mu * (E_field - float(np.min(E_field))))
    if check_confined:
        _check_confined(grid, w, _seam_kinked(grid, E_field, dE_q, dE_p))
    Z_shift = float(grid.integrate(w))
    Z_C = Z_shift * np.exp(-mu * float(np.min(E_field)))
    D = w / Z_shift
    split = ConditionalSplit(grid, D, psi)
    Lam = lambda_of(split)
    energy = float(grid.integrate(D * E_field))
    res = {"lambda_max_dev": float(np.max(np.abs(Lam - 1.0)))}
    return EquilibriumResult(split, mu, Z_C, problem.branch, energy, res)


def gibbs_uhlmann(problem: MaxEntProblem, check_confined=True) -> EquilibriumResult:
    """Uhlmann-representation Gibbs state P = exp(-mu H) / Tr-integral."""
    ham = problem.ham
    grid = ham.grid
    if ham.kind not in ("zeta_composed", "uncoupled", "nanowire"):
        raise UnsupportedHamiltonianError(
            f"no explicit Uhlmann equilibrium for kind '{ham.kind}'"
        )
    mu = problem.mu if problem.mu is not None else solve_mu(problem)[0]
    shift = float(np.min(np.linalg.eigvalsh(ham.H)))
    M = matrix_exp_herm(-mu * (ham.H - shift * np.eye(ham.n)))
    Zfield = trace_field(M)
    if check_confined:
        dZ_q = -mu * np.einsum("ijab,ijba->ij", M, ham.dH_q).real
        dZ_p = -mu * np.einsum("ijab,ijba->ij", M, ham.dH_p).real
        _check_confined(grid, Zfield, _seam_kinked(grid, Zfield, dZ_q, dZ_p))
    Ztot = float(grid.integrate(Zfield))
    Z_C = Ztot * np.exp(-mu * shift)
    P = M / Ztot
    split = uhlmann_factor(HybridDensity(grid, P), m=ham.n)
    Lam = lambda_of(split)
    energy = float(grid.integrate(np.einsum("ijab,ijba->ij", P, ham.H).real))
    res = {"lambda_max_dev": float(np.max(np.abs(Lam - 1.0)))}
    return EquilibriumResult(split, mu, Z_C, problem.branch, energy, res)


def gibbs_meanfield_uncoupled(grid, ham: Hamiltonian, mu, check_confined=True) -> _dyn.MeanFieldState:
    """The factorized Gibbs pair rho ~ exp(-mu H_Q), D ~ exp(-mu H_C).

    Solves the mean-field maximum-entropy conditions exactly in the uncoupled
    case; for coupled Hamiltonians no such pair exists.
    """
    if ham.kind != "uncoupled":
        raise UnsupportedHamiltonianError("factorized Gibbs pair requires an uncoupled H")
    prof = ham.extras["h_c"]
    h_c = prof.values
    D = np.exp(-mu * (h_c - float(np.min(h_c))))
    if check_confined:
        _check_confined(grid, D, _seam_kinked(grid, h_c, prof.d_q, prof.d_p))
    H_Q = ham.extras["H_Q"]
    D = D / float(grid.integrate(D))
    w, v = np.linalg.eigh(H_Q)
    rw = np.exp(-mu * (w - w.min()))
    rho = (v * (rw / rw.sum())) @ np.conj(v.T)
    return _dyn.MeanFieldState(grid, D, rho)


def _equilibrium_at(problem: MaxEntProblem, mu, check_confined=False):
    # mid-bisection profiles may be delocalized; only final states are checked
    sub = MaxEntProblem(problem.representation, problem.ham, mu=mu, branch=problem.branch)
    if problem.representation == "uhlmann":
        return gibbs_uhlmann(sub, check_confined=check_confined)
    if problem.representation == "conditional":
        return gibbs_conditional(sub, check_confined=check_confined)
    st = gibbs_meanfield_uncoupled(problem.ham.grid, problem.ham, mu,
                                   check_confined=check_confined)
    return EquilibriumResult(
        st, mu, float("nan"), problem.branch,
        _dyn.energy_of("mean_field", st, problem.ham),
    )


def solve_mu(problem: MaxEntProblem, mu_lo=1e-6, mu_hi=1e6, rel_tol=1e-10, max_iter=200):
    """Invert E(mu) by bisection on the monotone-decreasing energy curve.

    Returns (mu, achieved energy). The target must lie inside the attainable
    range on this grid and branch.
    """
    if problem.E is None:
        raise ValueError("solve_mu needs a target energy E")
    target = float(problem.E)

    def energy_at(mu):
        return _equilibrium_at(problem, mu).energy

    e_lo, e_hi = energy_at(mu_lo), energy_at(mu_hi)  # e_lo >= e_hi
    if not (min(e_lo, e_hi) <= target <= max(e_lo, e_hi)):
        raise ValueError(
            f"target energy {target:.6g} outside attainable range "
            f"[{min(e_lo, e_hi):.6g}, {max(e_lo, e_hi):.6g}] for this branch/grid"
        )
    lo, hi = mu_lo, mu_hi
    mu = np.sqrt(lo * hi)
    e_mid = energy_at(mu)
    for _ in range(max_iter):
        if abs(e_mid - target) <= rel_tol * max(abs(target), 1e-30):
            break
        if e_mid > target:  # energy too high -> colder -> raise mu
            lo = mu
        else:
            hi = mu
        mu = np.sqrt(lo * hi)
        e_mid = energy_at(mu)
    return float(mu), float(e_mid)


# -- stationarity ------------------------------------------------------------------


def marina_residual(split: ConditionalSplit, ham: Hamiltonian, mu):
    """Residual of the psi-stationarity condition with a pointwise multiplier.

    r = Lambda (H + lambda_1/mu) psi + i hbar {<psi, H psi>, psi}, with the
    real field lambda_1 fitted pointwise by least squares (it enforces the
    pointwise norm constraint, so only the component of r orthogonal to psi
    carries information). Returns the D-weighted relative residual norm.
    """
    grid = split.grid
    psi, D = split.psi, split.D
    Lam = lambda_of(split)
    Hpsi = np.einsum("ijab,ijb->ija", ham.H, psi)
    Heff = np.einsum("ija,ija->ij", np.conj(psi), Hpsi).real
    br = (
        grid.partial_q(Heff)[..., None] * grid.partial_p(psi)
        - grid.partial_p(Heff)[..., None] * grid.partial_q(psi)
    )
    r0 = Lam[..., None] * Hpsi + 1j * grid.hbar * br
    coeff = Lam / mu
    lam1 = -mu * np.einsum("ija,ija->ij", np.conj(psi), r0).real / np.where(
        np.abs(Lam) > 1e-300, Lam, 1.0
    )
    r = r0 + (coeff * lam1)[..., None] * psi
    num = float(np.sqrt(grid.integrate(D * np.sum(np.abs(r) ** 2, axis=-1))))
    den = float(np.sqrt(grid.integrate(D * np.sum(np.abs(Lam[..., None] * Hpsi) ** 2, axis=-1))))
    return {"marina": num / max(den, 1e-300), "marina_abs": num, "lambda1": lam1}


_MODEL_OF_REP = {
    "conditional": "ehrenfest_conditional",
    "uhlmann": "ehrenfest_uhlmann",
    "mean_field": "mean_field",
}


def stationarity_residual(result: EquilibriumResult, ham: Hamiltonian, model=None,
                          T_check=2 * np.pi, cfl=0.2):
    """Certify an equilibrium against the dynamics it should be fixed by.

    Runs the matching model for ``T_check`` and reports the relative L1
    change of D, the D-weighted L1 change of the pointwise conditional
    projector, the entropy change, and (conditional representation) the
    stationarity-equation residual.
    """
    state = result.state
    grid = state.grid if not isinstance(state, _dyn.MeanFieldState) else state.grid
    if model is None:
        rep = (
            "conditional" if isinstance(state, ConditionalSplit)
            else "uhlmann" if isinstance(state, UhlmannSplit)
            else "mean_field"
        )
        model = _MODEL_OF_REP[rep]

    if isinstance(state, _dyn.MeanFieldState):
        Xq, Xp = _dyn._mean_velocity(grid, state.rho, ham)
        speed = float(np.max(np.hypot(Xq, Xp)))
    else:
        Xq, Xp = _inv.split_velocity(state, ham)
        speed = float(np.max(np.hypot(Xq, Xp)))
    minh = min(grid.dq, grid.dp)
    dt = cfl * minh / max(speed, 1e-12)
    steps = max(int(np.ceil(T_check / dt)), 4)
    dt = T_check / steps
    cfg = _dyn.StepperConfig(dt=dt, steps=steps, sample_every=steps)
    run = _dyn.rk4_run(model, state, ham, cfg)
    if run.aborted:
        raise _dyn.NumericalAbort(f"stationarity run aborted: {run.abort_reason}")
    final = run.final_state

    metrics = {"T_check": T_check, "dt": dt, "steps": steps}
    D0, DT = _density_of(state), _density_of(final)
    metrics["d_change_l1"] = float(grid.integrate(np.abs(DT - D0))) / float(
        grid.integrate(np.abs(D0))
    )
    P0, PT = _projector_of(state), _projector_of(final)
    if P0 is not None:
        diff = np.linalg.norm(PT - P0, axis=(-2, -1))
        metrics["projector_change_l1"] = float(grid.integrate(D0 * diff))
    if isinstance(state, ConditionalSplit):
        metrics["entropy_change"] = (
            _inv.shannon_pure(final).value - _inv.shannon_pure(state).value
        )
        metrics.update(marina_residual(state, ham, result.mu))
    elif isinstance(state, UhlmannSplit):
        metrics["entropy_change"] = (
            _inv.entropy_uhlmann(final).value - _inv.entropy_uhlmann(state).value
        )
    return metrics


def _density_of(state):
    if isinstance(state, _dyn.MeanFieldState):
        return state.D
    if isinstance(state, HybridDensity):
        return trace_field(state.P)
    return state.D


def _projector_of(state):
    if isinstance(state, ConditionalSplit):
        return np.einsum("ija,ijb->ijab", state.psi, np.conj(state.psi))
    if isinstance(state, UhlmannSplit):
        return np.einsum("ijak,ijbk->ijab", state.W, np.conj(state.W))
    return None


def meanfield_maxent_residual(state: _dyn.MeanFieldState, ham: Hamiltonian, mu):
    """Residuals of the two mean-field maximum-entropy conditions.

    quantum:   (1 + lambda_1) 1 + ln rho + mu integral(D H) = 0
    classical: 1 + lambda_2 + ln D + mu Tr(rho H) = 0

    with the scalar multipliers fitted by least squares. Relative norms are
    returned; both vanish for the uncoupled Gibbs pair.
    """
    grid = state.grid
    D, rho = state.D, state.rho
    n = rho.shape[-1]

    w, v = np.linalg.eigh(hermitize(rho))
    lnrho = (v * np.log(np.maximum(w, 1e-300))) @ np.conj(v.T)
    Hbar = hermitize(grid.integrate(D[..., None, None] * ham.H))
    Mq = lnrho + mu * Hbar
    Mq_traceless = Mq - (np.trace(Mq) / n) * np.eye(n)
    r_quantum = float(np.linalg.norm(Mq_traceless)) / max(float(np.linalg.norm(Mq)), 1e-300)

    heff = np.einsum("ab,ijba->ij", rho, ham.H).real
    g = np.log(np.maximum(D, 1e-300)) + mu * heff
    gbar = float(grid.integrate(g)) / grid.area
    resid = g - gbar
    r_classical = float(np.sqrt(grid.integrate(resid**2) / grid.area)) / max(
        float(np.sqrt(grid.integrate(g**2) / grid.area)), 1e-300
    )
    return r_quantum, r_classical


def project_to_constraints(grid, D_raw, E_field, target_E, tol=1e-12, max_iter=200):
    """Project a perturbed density back onto mass 1 and the target energy.

    Reweights by exp(-delta E_field) with delta found by bisection; keeps
    positivity. Used by the local-maximality probe around Gibbs states.
    """
    D = np.maximum(D_raw, 0.0)
    D = D / float(grid.integrate(D))

    def energy(delta):
        w = D * np.exp(-delta * (E_field - float(np.min(E_field))))
        w = w / float(grid.integrate(w))
        return float(grid.integrate(w * E_field)), w

    lo, hi = -50.0, 50.0
    e_lo, _ = energy(lo)
    e_hi, _ = energy(hi)
    if not (e_hi <= target_E <= e_lo):
        raise ValueError("target energy not reachable by reweighting this perturbation")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        e_mid, w = energy(mid)
        if abs(e_mid - target_E) <= tol * max(abs(target_E), 1e-30):
            return w
        if e_mid > target_E:
            lo = mid
        else:
            hi = mid
    return w
