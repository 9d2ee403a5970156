"""Evolution models and the fixed-step RK4 driver.

Models
------
* ``mean_field``            (D, rho): D advected by Tr(rho H), rho rotated by
                            the D-averaged Hamiltonian.
* ``ehrenfest_density``     P transported along <X_H> and rotated by [H, .].
* ``ehrenfest_conditional`` (D, psi) form of the same dynamics.
* ``ehrenfest_uhlmann``     (D, W) form with Frobenius pairing.
* ``beyond_ehrenfest``      P with the gradient-corrected vector field and the
                            modified Hamiltonian (Sigma-hat terms).

All transport terms use the conservative form div(field * velocity); with the
antisymmetric stencils the grid sum of such a divergence telescopes to zero,
so total mass is conserved to round-off. Hermitian tendencies are symmetrized
each stage and the anti-Hermitian residual is reported as a discretization
health metric. The integrator is classic RK4 with a CFL guard; no adaptivity,
so conservation drifts carry a clean dt^4 signal.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .grids import PhaseGrid, dagger, hermitize, trace_field
from .hamiltonians import Hamiltonian
from .states import ConditionalSplit, HybridDensity, UhlmannSplit

MODEL_KINDS = (
    "mean_field",
    "ehrenfest_density",
    "ehrenfest_conditional",
    "ehrenfest_uhlmann",
    "beyond_ehrenfest",
)


class NumericalAbort(RuntimeError):
    """Evolution produced NaN/Inf or broke the CFL guard."""

    def __init__(self, message, step=None, time=None, state=None):
        super().__init__(message)
        self.step = step
        self.time = time
        self.state = state


@dataclass
class MeanFieldState:
    """Factorized state: classical density D(q,p) and quantum matrix rho."""

    grid: PhaseGrid
    D: np.ndarray
    rho: np.ndarray

    def __post_init__(self):
        self.D = np.asarray(self.D, dtype=float)
        self.rho = np.asarray(self.rho, dtype=complex)


@dataclass
class StepperConfig:
    dt: float
    steps: int
    sample_every: int = 1
    eps_tr_rel: float = 1e-12
    renormalize: bool = False
    cfl_warn: float = 0.35
    cfl_max: float = 0.5


# -- right-hand sides ----------------------------------------------------------


def mean_field_rhs(grid, D, rho, ham):
    """Tendencies of the factorized model.

    dD/dt = {Tr(rho H), D};  i hbar drho/dt = [integral(D H), rho].
    The effective classical Hamiltonian gradient is assembled from the
    catalog's analytic gradients.
    """
    dHeff_q = np.einsum("ab,ijba->ij", rho, ham.dH_q).real
    dHeff_p = np.einsum("ab,ijba->ij", rho, ham.dH_p).real
    dD = dHeff_q * grid.partial_p(D) - dHeff_p * grid.partial_q(D)
    Hbar = hermitize(grid.integrate(D[..., None, None] * ham.H))
    drho = (-1j / grid.hbar) * (Hbar @ rho - rho @ Hbar)
    speed = float(np.max(np.hypot(dHeff_p, dHeff_q)))
    return (dD, drho), {"max_speed": speed}


def _mean_velocity(grid, rho, ham):
    Xq = np.einsum("ab,ijba->ij", rho, ham.X_q).real
    Xp = np.einsum("ab,ijba->ij", rho, ham.X_p).real
    return Xq, Xp


def ehrenfest_rhs(grid, P, ham, eps_tr_rel=1e-12):
    """dP/dt = -div(P <X_H>) - (i/hbar)[H, P], symmetrized."""
    P = np.asarray(P, dtype=complex)
    TrP = trace_field(P)
    eps = eps_tr_rel * max(float(np.max(TrP)), 1e-300)
    denom = TrP + eps
    Xq = np.einsum("ijab,ijba->ij", P, ham.X_q).real / denom
    Xp = np.einsum("ijab,ijba->ij", P, ham.X_p).real / denom
    if not (np.all(np.isfinite(Xq)) and np.all(np.isfinite(Xp))):
        bad = np.argwhere(~(np.isfinite(Xq) & np.isfinite(Xp)))[0]
        raise NumericalAbort(
            f"non-finite transport velocity at grid point {tuple(bad)} "
            "(zero-trace region without regularization)"
        )
    tend = -grid.divergence(P * Xq[..., None, None], P * Xp[..., None, None])
    tend += (-1j / grid.hbar) * (ham.H @ P - P @ ham.H)
    resid = float(np.max(np.linalg.norm(tend - dagger(tend), axis=(-2, -1))))
    scale = max(float(np.max(np.linalg.norm(tend, axis=(-2, -1)))), 1e-300)
    info = {
        "max_speed": float(np.max(np.hypot(Xq, Xp))),
        "antiherm_resid": resid / scale,
        "velocity": (Xq, Xp),
    }
    return (hermitize(tend),), info


def conditional_rhs(grid, D, psi, ham):
    """System dD/dt = -div(D X), i hbar (d_t + X.grad) psi = H psi,
    with X = <psi, X_H psi> pointwise."""
    Xq = np.einsum("ija,ijab,ijb->ij", np.conj(psi), ham.X_q, psi).real
    Xp = np.einsum("ija,ijab,ijb->ij", np.conj(psi), ham.X_p, psi).real
    dD = -grid.divergence(D * Xq, D * Xp)
    Hpsi = np.einsum("ijab,ijb->ija", ham.H, psi)
    dpsi = -(Xq[..., None] * grid.partial_q(psi) + Xp[..., None] * grid.partial_p(psi))
    dpsi += (-1j / grid.hbar) * Hpsi
    info = {"max_speed": float(np.max(np.hypot(Xq, Xp))), "velocity": (Xq, Xp)}
    return (dD, dpsi), info


def uhlmann_rhs(grid, D, W, ham):
    """As conditional_rhs with the Frobenius pairing: X = Re Tr(W^dag X_H W)."""
    Xq = np.einsum("ijak,ijab,ijbk->ij", np.conj(W), ham.X_q, W).real
    Xp = np.einsum("ijak,ijab,ijbk->ij", np.conj(W), ham.X_p, W).real
    dD = -grid.divergence(D * Xq, D * Xp)
    HW = np.einsum("ijab,ijbk->ijak", ham.H, W)
    dW = -(Xq[..., None, None] * grid.partial_q(W) + Xp[..., None, None] * grid.partial_p(W))
    dW += (-1j / grid.hbar) * HW
    info = {"max_speed": float(np.max(np.hypot(Xq, Xp))), "velocity": (Xq, Xp)}
    return (dD, dW), info


def beyond_ehrenfest_rhs(grid, P, ham, eps_tr_rel=1e-12):
    """Gradient-corrected model: dP/dt = -div(P X) - (i/hbar)[scriptH, P].

    X_k   = <X_H>_k + (1/D) Tr(X_H . grad Sigma_k - Sigma . grad X_H,k)
    Sigma = (i hbar / 2D) [P, X_P],  X_P = (d_p P, -d_q P)
    scriptH = H + (i hbar / D) [grad P - P grad ln sqrt(D), X_H]

    Dots contract the 2-component phase-space index; matrix products are kept
    in the written (left-to-right) order.
    """
    P = np.asarray(P, dtype=complex)
    hbar = grid.hbar
    TrP = trace_field(P)
    eps = eps_tr_rel * max(float(np.max(TrP)), 1e-300)
    D = TrP + eps
    Dmat = D[..., None, None]

    dPq = grid.partial_q(P)
    dPp = grid.partial_p(P)
    XP = (dPp, -dPq)
    XH = (ham.X_q, ham.X_p)
    dXH = _beyond_xh_grads(grid, ham)

    Sig = tuple((0.5j * hbar) * (P @ XPk - XPk @ P) / Dmat for XPk in XP)
    dSig = tuple((grid.partial_q(Sk), grid.partial_p(Sk)) for Sk in Sig)

    avgX = tuple(np.einsum("ijab,ijba->ij", P, XHk).real / D for XHk in XH)
    calX = []
    for k in range(2):
        corr = XH[0] @ dSig[k][0] + XH[1] @ dSig[k][1]
        corr -= Sig[0] @ dXH[k][0] + Sig[1] @ dXH[k][1]
        calX.append(avgX[k] + np.einsum("ijaa->ij", corr).real / D)

    dlnsq = 0.5 * grid.partial_q(D) / D
    dlnsp = 0.5 * grid.partial_p(D) / D
    G = (dPq - P * dlnsq[..., None, None], dPp - P * dlnsp[..., None, None])
    comm = (G[0] @ XH[0] - XH[0] @ G[0]) + (G[1] @ XH[1] - XH[1] @ G[1])
    scrH = hermitize(ham.H + (1j * hbar) * comm / Dmat)

    tend = -grid.divergence(P * calX[0][..., None, None], P * calX[1][..., None, None])
    tend += (-1j / hbar) * (scrH @ P - P @ scrH)
    if not np.all(np.isfinite(tend)):
        bad = np.argwhere(~np.all(np.isfinite(tend), axis=(-2, -1)))[0]
        raise NumericalAbort(f"non-finite tendency at grid point {tuple(bad)}")
    resid = float(np.max(np.linalg.norm(tend - dagger(tend), axis=(-2, -1))))
    scale = max(float(np.max(np.linalg.norm(tend, axis=(-2, -1)))), 1e-300)
    info = {
        "max_speed": float(np.max(np.hypot(calX[0], calX[1]))),
        "antiherm_resid": resid / scale,
        "velocity": (calX[0], calX[1]),
    }
    return (hermitize(tend),), info


def _beyond_xh_grads(grid, ham):
    # X_H is static; cache its stencil gradients on the Hamiltonian object.
    key = "_xh_grads"
    if key not in ham.extras:
        ham.extras[key] = (
            (grid.partial_q(ham.X_q), grid.partial_p(ham.X_q)),
            (grid.partial_q(ham.X_p), grid.partial_p(ham.X_p)),
        )
    return ham.extras[key]


def beyond_sigma_grad(grid, P, eps_tr_rel=1e-12):
    """Gradient-indexed Sigma-hat, (i hbar / 2D) [P, d_k P] for k = q, p.

    The model's energy pairs these components straight against
    (X_H,q, X_H,p); equivalently, the symplectically-indexed Sigma-hat of the
    evolution equation is paired with X_H through the symplectic form. That
    index convention is the one the flow actually conserves (the straight
    X-on-X pairing is not a constant of motion).
    """
    TrP = trace_field(P)
    eps = eps_tr_rel * max(float(np.max(TrP)), 1e-300)
    Dmat = (TrP + eps)[..., None, None]
    grads = (grid.partial_q(P), grid.partial_p(P))
    return tuple((0.5j * grid.hbar) * (P @ Gk - Gk @ P) / Dmat for Gk in grads)


def energy_of(model, state, ham, eps_tr_rel=1e-12):
    """Hamiltonian functional of the given model at the given state."""
    grid = state.grid
    if model == "mean_field":
        heff = np.einsum("ab,ijba->ij", state.rho, ham.H).real
        return float(grid.integrate(state.D * heff))
    P = _as_density_values(state)
    e = float(grid.integrate(np.einsum("ijab,ijba->ij", P, ham.H).real))
    if model == "beyond_ehrenfest":
        Sig = beyond_sigma_grad(grid, P, eps_tr_rel)
        extra = np.einsum("ijab,ijba->ij", Sig[0], ham.X_q).real
        extra += np.einsum("ijab,ijba->ij", Sig[1], ham.X_p).real
        e += float(grid.integrate(extra))
    return e


def _as_density_values(state):
    if isinstance(state, HybridDensity):
        return state.P
    if isinstance(state, ConditionalSplit):
        outer = np.einsum("ija,ijb->ijab", state.psi, np.conj(state.psi))
        return state.D[..., None, None] * outer
    if isinstance(state, UhlmannSplit):
        outer = np.einsum("ijak,ijbk->ijab", state.W, np.conj(state.W))
        return state.D[..., None, None] * outer
    raise TypeError(f"cannot view {type(state).__name__} as a hybrid density")


# -- model operation table -------------------------------------------------------


class _Ops:
    """Per-model glue: state <-> array tuple, rhs, velocity, renormalize."""

    def __init__(self, unpack, pack, rhs, velocity, renorm):
        self.unpack = unpack
        self.pack = pack
        self.rhs = rhs
        self.velocity = velocity
        self.renorm = renorm


def _mf_renorm(grid, arrays):
    D, rho = arrays
    D = D / grid.integrate(D)
    rho = hermitize(rho)
    return (D, rho / np.real(np.trace(rho)))


def _cond_renorm(grid, arrays):
    D, psi = arrays
    norms = np.linalg.norm(psi, axis=-1)
    psi = psi / np.where(norms > 0, norms, 1.0)[..., None]
    return (D / grid.integrate(D), psi)


def _uhl_renorm(grid, arrays):
    D, W = arrays
    norms = np.linalg.norm(W, axis=(-2, -1))
    W = W / np.where(norms > 0, norms, 1.0)[..., None, None]
    return (D / grid.integrate(D), W)


def _dens_renorm(grid, arrays):
    (P,) = arrays
    return (hermitize(P) / grid.integrate(trace_field(P)),)


MODEL_OPS = {
    "mean_field": _Ops(
        lambda s: (s.D, s.rho),
        lambda s, a: MeanFieldState(s.grid, a[0], a[1]),
        lambda grid, ham, a, eps: mean_field_rhs(grid, a[0], a[1], ham),
        lambda grid, ham, a: _mean_velocity(grid, a[1], ham),
        _mf_renorm,
    ),
    "ehrenfest_density": _Ops(
        lambda s: (s.P,),
        lambda s, a: HybridDensity(s.grid, a[0]),
        lambda grid, ham, a, eps: ehrenfest_rhs(grid, a[0], ham, eps),
        None,
        _dens_renorm,
    ),
    "ehrenfest_conditional": _Ops(
        lambda s: (s.D, s.psi),
        lambda s, a: ConditionalSplit(s.grid, a[0], a[1]),
        lambda grid, ham, a, eps: conditional_rhs(grid, a[0], a[1], ham),
        None,
        _cond_renorm,
    ),
    "ehrenfest_uhlmann": _Ops(
        lambda s: (s.D, s.W),
        lambda s, a: UhlmannSplit(s.grid, a[0], a[1]),
        lambda grid, ham, a, eps: uhlmann_rhs(grid, a[0], a[1], ham),
        None,
        _uhl_renorm,
    ),
    "beyond_ehrenfest": _Ops(
        lambda s: (s.P,),
        lambda s, a: HybridDensity(s.grid, a[0]),
        lambda grid, ham, a, eps: beyond_ehrenfest_rhs(grid, a[0], ham, eps),
        None,
        _dens_renorm,
    ),
}


def expected_state_type(model):
    return {
        "mean_field": MeanFieldState,
        "ehrenfest_density": HybridDensity,
        "ehrenfest_conditional": ConditionalSplit,
        "ehrenfest_uhlmann": UhlmannSplit,
        "beyond_ehrenfest": HybridDensity,
    }[model]


# -- RK4 driver -------------------------------------------------------------------


@dataclass
class RunResult:
    times: list = field(default_factory=list)
    states: list = field(default_factory=list)
    rows: list = field(default_factory=list)
    loop_points: list = field(default_factory=list)
    aborted: bool = False
    abort_reason: str = ""
    cfl_max_seen: float = 0.0

    @property
    def final_state(self):
        return self.states[-1] if self.states else None


def rk4_run(model, state, ham, cfg: StepperConfig, sample_fn=None, loop=None,
            keep_states=True):
    """Integrate ``state`` with classic RK4, sampling diagnostics.

    ``sample_fn(t, state, loop_pts, info)`` is called every
    ``cfg.sample_every`` steps (plus the final step) and its dict is recorded.
    ``loop`` is an optional (K, 2) array of phase-space points advected with
    the model's scalar transport velocity as part of the RK4 state.
    Renormalization is OFF by default: norm and mass drift are themselves
    diagnostics, and projecting them away alters the conservation picture.
    """
    if model not in MODEL_OPS:
        raise ValueError(f"unknown model '{model}'")
    if not isinstance(state, expected_state_type(model)):
        raise TypeError(
            f"model '{model}' expects {expected_state_type(model).__name__}, "
            f"got {type(state).__name__}"
        )
    ops = MODEL_OPS[model]
    grid = state.grid
    y = tuple(np.array(a, copy=True) for a in ops.unpack(state))
    pts = None if loop is None else np.array(loop, dtype=float, copy=True)
    minh = min(grid.dq, grid.dp)
    result = RunResult()
    warned_cfl = False

    def full_rhs(arrays, loop_pts):
        tends, info = ops.rhs(grid, ham, arrays, cfg.eps_tr_rel)
        ptend = None
        if loop_pts is not None:
            if "velocity" in info:
                Xq, Xp = info["velocity"]
            else:
                Xq, Xp = ops.velocity(grid, ham, arrays)
            vq = grid.interpolate(Xq, loop_pts[:, 0], loop_pts[:, 1])
            vp = grid.interpolate(Xp, loop_pts[:, 0], loop_pts[:, 1])
            ptend = np.stack([vq, vp], axis=1)
        return tends, ptend, info

    dt = cfg.dt
    t = 0.0
    for step in range(cfg.steps + 1):
        is_sample = (step % cfg.sample_every == 0) or step == cfg.steps
        k1 = ptk1 = info1 = None
        if is_sample or step < cfg.steps:
            try:
                k1, ptk1, info1 = full_rhs(y, pts)
            except NumericalAbort as exc:
                result.aborted, result.abort_reason = True, str(exc)
                result.states.append(ops.pack(state, y))
                result.times.append(t)
                break
        if is_sample:
            snap = ops.pack(state, tuple(np.array(a, copy=True) for a in y))
            result.times.append(t)
            if keep_states or step == cfg.steps:  # final state always kept
                result.states.append(snap)
            if pts is not None:
                result.loop_points.append(pts.copy())
            if sample_fn is not None:
                row = sample_fn(t, snap, None if pts is None else pts.copy(), info1 or {})
                if row is not None:
                    result.rows.append(row)
        if step == cfg.steps:
            break

        ratio = dt * info1["max_speed"] / minh
        result.cfl_max_seen = max(result.cfl_max_seen, ratio)
        if ratio >= cfg.cfl_max:
            result.aborted = True
            result.abort_reason = (
                f"CFL guard tripped at step {step}: dt*speed/h = {ratio:.3f} >= {cfg.cfl_max}"
            )
            if not result.states:  # dump the last state for post-mortem
                result.states.append(ops.pack(state, y))
            break
        if ratio > cfg.cfl_warn and not warned_cfl:
            warnings.warn(f"advective CFL number {ratio:.3f} above {cfg.cfl_warn}", RuntimeWarning)
            warned_cfl = True

        y2 = tuple(a + 0.5 * dt * k for a, k in zip(y, k1))
        p2 = None if pts is None else pts + 0.5 * dt * ptk1
        k2, ptk2, _ = full_rhs(y2, p2)
        y3 = tuple(a + 0.5 * dt * k for a, k in zip(y, k2))
        p3 = None if pts is None else pts + 0.5 * dt * ptk2
        k3, ptk3, _ = full_rhs(y3, p3)
        y4 = tuple(a + dt * k for a, k in zip(y, k3))
        p4 = None if pts is None else pts + dt * ptk3
        k4, ptk4, _ = full_rhs(y4, p4)

        y = tuple(
            a + (dt / 6.0) * (ka + 2.0 * kb + 2.0 * kc + kd)
            for a, ka, kb, kc, kd in zip(y, k1, k2, k3, k4)
        )
        if pts is not None:
            pts = pts + (dt / 6.0) * (ptk1 + 2.0 * ptk2 + 2.0 * ptk3 + ptk4)
        if cfg.renormalize:
            y = ops.renorm(grid, y)
        if not all(np.all(np.isfinite(a)) for a in y):
            result.aborted = True
            result.abort_reason = f"non-finite state after step {step}"
            result.states.append(ops.pack(state, y))
            result.times.append(t + dt)
            break
        t += dt

    return result


def circle_loop(center, radius, K=256):
    """Closed polyline of K points on a circle (first point not repeated).

    Oriented clockwise in the (q, p) plane so that the circulation of p dq
    equals +(enclosed area).
    """
    th = np.linspace(0.0, -2 * np.pi, K, endpoint=False)
    return np.stack([center[0] + radius * np.cos(th), center[1] + radius * np.sin(th)], axis=1)
