"""Entropy/Casimir functionals, the hybrid Poisson bracket, the Poincare loop
invariant, and the Liouville-volume transport residual.

Functional families (P = hybrid density, D = Tr P, rho = P / Tr P):

* ``C1(Phi)``        integral of D * Phi(rho), Phi a spectral trace function;
* ``C2(Sigma)``      integral of D * Sigma(Lambda / D) for split states;
* ``C(Gamma)``       integral of D * Gamma(W W^dag, Lambda / D), the general
                     family containing both of the above and the Renyi-type
                     invariants Gamma(A, x) = x^(1-alpha) Tr A^alpha;
* mean-field, pure and Uhlmann entropies and their Renyi extensions.

The hybrid bracket is evaluated as

    {{f, g}} = integral( [Tr(P dq(Gf)) Tr(dp(Gg) P) - (q <-> p)] / Tr P
               - Re Tr(P (i/hbar) [Gf, Gg]) ) dq dp,

with Gf = df/dP. Derivatives of the gradient-dependent Casimirs are assembled
analytically in the (D, W) variables and mapped back through the chain rule

    (df/dP) W = (df/dD) W - (1/2D) <df/dW, W> W + (1/2D) df/dW,

using the exact adjoints of the discrete stencils, so that each derivative is
the exact gradient of the discretized functional.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .grids import EIG_CLAMP, hermitize, trace_field
from .hamiltonians import Hamiltonian
from .states import (
    ConditionalSplit,
    HybridDensity,
    UhlmannSplit,
    berry_data,
    compose,
    lambda_of,
    uhlmann_factor,
)
from . import dynamics as _dyn


# -- scalar and spectral function handles ---------------------------------------


@dataclass
class SpectralFn:
    """Phi: Her(n) -> R of trace type, Phi(A) = sum_i f(eig_i(A))."""

    name: str
    f: Callable
    df: Callable

    def value_of_eigs(self, w):
        return np.sum(self.f(w), axis=-1)

    def grad_matrix(self, w, v):
        return hermitize(np.einsum("...ab,...b,...cb->...ac", v, self.df(w), np.conj(v)))


@dataclass
class ScalarFn:
    """Sigma: R -> R with derivative, applied to the volume ratio x."""

    name: str
    f: Callable
    df: Callable


def _safe_log(w):
    return np.log(np.maximum(w, EIG_CLAMP))


def spectral_fn(name, alpha=None) -> SpectralFn:
    if name == "neg_x_log_x_trace":
        return SpectralFn(
            name,
            lambda w: np.where(w > EIG_CLAMP, -w * _safe_log(w), 0.0),
            lambda w: -_safe_log(w) - 1.0,
        )
    if name == "quadratic":
        return SpectralFn(name, lambda w: w**2, lambda w: 2.0 * w)
    if name == "power_alpha":
        if alpha is None:
            raise ValueError("power_alpha needs alpha")
        a = float(alpha)
        return SpectralFn(
            name,
            lambda w: np.power(np.maximum(w, EIG_CLAMP), a),
            lambda w: a * np.power(np.maximum(w, EIG_CLAMP), a - 1.0),
        )
    raise ValueError(f"unknown spectral function '{name}'")


def scalar_fn(name, alpha=None) -> ScalarFn:
    if name == "log":
        return ScalarFn(name, np.log, lambda x: 1.0 / x)
    if name == "quadratic":
        return ScalarFn(name, lambda x: x**2, lambda x: 2.0 * x)
    if name == "xlogx":
        return ScalarFn(
            name,
            lambda x: np.where(x > EIG_CLAMP, x * _safe_log(x), 0.0),
            lambda x: _safe_log(x) + 1.0,
        )
    if name == "power_alpha":
        if alpha is None:
            raise ValueError("power_alpha needs alpha")
        a = float(alpha)
        return ScalarFn(name, lambda x: np.power(x, a), lambda x: a * np.power(x, a - 1.0))
    raise ValueError(f"unknown scalar function '{name}'")


class GammaSpec:
    """Gamma(A, x) as a sum of built-in terms.

    Terms: ``("phi", SpectralFn)``, ``("sigma", ScalarFn)``, or
    ``("renyi", alpha)`` for x^(1-alpha) Tr A^alpha. The first two reproduce
    the C1 and C2 families exactly.
    """

    def __init__(self, terms):
        self.terms = list(terms)

    @classmethod
    def from_phi(cls, phi: SpectralFn):
        return cls([("phi", phi)])

    @classmethod
    def from_sigma(cls, sigma: ScalarFn):
        return cls([("sigma", sigma)])

    @classmethod
    def renyi(cls, alpha):
        return cls([("renyi", float(alpha))])

    @classmethod
    def entropy(cls):
        """Gamma(A, x) = -<A, ln A> + ln x, generating the Uhlmann entropy."""
        return cls([("phi", spectral_fn("neg_x_log_x_trace")), ("sigma", scalar_fn("log"))])

    def value(self, w, x):
        out = 0.0
        for kind, arg in self.terms:
            if kind == "phi":
                out = out + arg.value_of_eigs(w)
            elif kind == "sigma":
                out = out + arg.f(x)
            elif kind == "renyi":
                out = out + np.power(x, 1.0 - arg) * np.sum(
                    np.power(np.maximum(w, 0.0), arg), axis=-1
                )
        return out

    def grad_A(self, w, v, x):
        out = None
        for kind, arg in self.terms:
            if kind == "phi":
                g = arg.grad_matrix(w, v)
            elif kind == "renyi":
                pw = arg * np.power(np.maximum(w, EIG_CLAMP), arg - 1.0)
                g = np.power(x, 1.0 - arg)[..., None, None] * hermitize(
                    np.einsum("...ab,...b,...cb->...ac", v, pw, np.conj(v))
                )
            else:
                continue
            out = g if out is None else out + g
        return out

    def grad_x(self, w, x):
        out = np.zeros_like(x)
        for kind, arg in self.terms:
            if kind == "sigma":
                out = out + arg.df(x)
            elif kind == "renyi":
                out = out + (1.0 - arg) * np.power(x, -arg) * np.sum(
                    np.power(np.maximum(w, 0.0), arg), axis=-1
                )
        return out


# -- functionals of the hybrid density ------------------------------------------


def hermitian_basis(n):
    """Real basis of Her(n): diagonal units, symmetric and antisymmetric pairs."""
    basis = []
    for a in range(n):
        E = np.zeros((n, n), dtype=complex)
        E[a, a] = 1.0
        basis.append(("diag", a, a, E))
    for a in range(n):
        for b in range(a + 1, n):
            S = np.zeros((n, n), dtype=complex)
            S[a, b] = S[b, a] = 1.0
            basis.append(("sym", a, b, S))
            K = np.zeros((n, n), dtype=complex)
            K[a, b] = 1.0j
            K[b, a] = -1.0j
            basis.append(("asym", a, b, K))
    return basis


class Functional:
    """Base class: a real functional of a HybridDensity with a derivative."""

    name = "functional"

    def value(self, state: HybridDensity) -> float:
        raise NotImplementedError

    def derivative(self, state: HybridDensity) -> np.ndarray:
        """delta F / delta P as a Hermitian matrix field."""
        return numeric_local_derivative(self, state)

    def pointwise_integrand(self, grid, P):
        """Integrand phi with F = sum phi(P_ij) dq dp, when P-local (no gradients)."""
        return None


class MassFunctional(Functional):
    name = "mass"

    def value(self, state):
        return float(state.grid.integrate(trace_field(state.P)))

    def derivative(self, state):
        n = state.n
        return np.tile(np.eye(n, dtype=complex), state.grid.shape + (1, 1))

    def pointwise_integrand(self, grid, P):
        return trace_field(P)


class EnergyFunctional(Functional):
    name = "energy"

    def __init__(self, ham: Hamiltonian):
        self.ham = ham

    def value(self, state):
        return float(state.grid.integrate(np.einsum("ijab,ijba->ij", state.P, self.ham.H).real))

    def derivative(self, state):
        return np.array(self.ham.H, copy=True)

    def pointwise_integrand(self, grid, P):
        return np.einsum("ijab,ijba->ij", P, self.ham.H).real


class WeightedTraceFunctional(Functional):
    """F = integral w(q,p) Tr P, e.g. phase-space moments."""

    def __init__(self, weight, name="moment"):
        self.weight = np.asarray(weight, dtype=float)
        self.name = name

    def value(self, state):
        return float(state.grid.integrate(self.weight * trace_field(state.P)))

    def derivative(self, state):
        n = state.n
        return self.weight[..., None, None] * np.eye(n, dtype=complex)

    def pointwise_integrand(self, grid, P):
        return self.weight * trace_field(P)


class LinearProbeFunctional(Functional):
    """F = integral Re Tr(A(q,p) P); dF/dP = A."""

    def __init__(self, A, name="probe"):
        self.A = hermitize(np.asarray(A, dtype=complex))
        self.name = name

    def value(self, state):
        return float(state.grid.integrate(np.einsum("ijab,ijba->ij", state.P, self.A).real))

    def derivative(self, state):
        return np.array(self.A, copy=True)

    def pointwise_integrand(self, grid, P):
        return np.einsum("ijab,ijba->ij", P, self.A).real


class CasimirC1(Functional):
    """C1 = integral Tr P * Phi(P / Tr P); vacuum points contribute zero."""

    def __init__(self, phi: SpectralFn, eps_tr_rel=1e-12):
        self.phi = phi
        self.eps_tr_rel = eps_tr_rel
        self.name = f"C1[{phi.name}]"

    def _eigs(self, P):
        return np.linalg.eigh(hermitize(P))

    def value(self, state):
        return float(state.grid.integrate(self.pointwise_integrand(state.grid, state.P)))

    def pointwise_integrand(self, grid, P):
        D = trace_field(P)
        floor = self.eps_tr_rel * max(float(np.max(D)), 1e-300)
        Dsafe = np.where(D > floor, D, 1.0)
        w = np.linalg.eigvalsh(hermitize(P)) / Dsafe[..., None]
        return np.where(D > floor, D * self.phi.value_of_eigs(w), 0.0)

    def derivative(self, state):
        # dC1/dP = Phi'(rho) + (Phi(rho) - Tr(Phi'(rho) rho)) 1
        P = state.P
        D = trace_field(P)
        floor = self.eps_tr_rel * max(float(np.max(D)), 1e-300)
        Dsafe = np.where(D > floor, D, floor)
        w, v = self._eigs(P)
        w = w / Dsafe[..., None]
        grad = self.phi.grad_matrix(w, v)
        phi_val = self.phi.value_of_eigs(w)
        correction = phi_val - np.sum(self.phi.df(w) * w, axis=-1)
        n = state.n
        return grad + correction[..., None, None] * np.eye(n, dtype=complex)


class CasimirGeneral(Functional):
    """C = integral D Gamma(W W^dag, Lambda / D) through an Uhlmann factor.

    By default the state is factored with the deterministic gauge of
    ``uhlmann_factor``; that gauge is only piecewise smooth, so for random
    probe states a smooth factorization should be supplied via ``split``
    (Lambda needs differentiable W). The derivative is assembled analytically
    in (D, W) and mapped back with the chain rule, which requires the
    conditional density W W^dag to be invertible (full-rank probe states).
    """

    def __init__(self, gamma: GammaSpec, m=None, eps_tr_rel=1e-12, name="C_general",
                 split=None):
        self.gamma = gamma
        self.m = m
        self.eps_tr_rel = eps_tr_rel
        self.name = name
        self.split = split

    def _factor(self, state):
        if self.split is not None:
            split = self.split
            back = compose(split)
            if np.max(np.abs(back.P - state.P)) > 1e-8 * max(np.max(np.abs(state.P)), 1e-300):
                raise ValueError("provided split does not factor the given state")
        else:
            split = uhlmann_factor(state, m=self.m)
        D = split.D
        floor = self.eps_tr_rel * max(float(np.max(D)), 1e-300)
        Lam = lambda_of(split)
        return split, D, floor, Lam

    def value(self, state):
        split, D, floor, Lam = self._factor(state)
        return casimir_general_value(split, self.gamma, Lam=Lam, floor=floor)

    def derivative(self, state):
        grid = state.grid
        split, D, floor, Lam = self._factor(state)
        W = split.W
        Dsafe = np.where(D > floor, D, floor)
        x = Lam / Dsafe
        A = np.einsum("ijak,ijbk->ijab", W, np.conj(W))
        w, v = np.linalg.eigh(hermitize(A))

        dCdD = self.gamma.value(w, x) - x * self.gamma.grad_x(w, x)
        gA = self.gamma.grad_A(w, v, x)
        gx = self.gamma.grad_x(w, x)

        dCdW = np.zeros_like(W)
        if gA is not None:
            dCdW += 2.0 * Dsafe[..., None, None] * np.einsum("ijab,ijbk->ijak", gA, W)
        # exact discrete adjoint of the Lambda dependence
        hbar = grid.hbar
        Wq = grid.partial_q(W)
        Wp = grid.partial_p(W)
        dCdW += (2.0j * hbar) * (
            grid.partial_q(gx[..., None, None] * Wp) - grid.partial_p(gx[..., None, None] * Wq)
        )

        pair = np.einsum("ijak,ijak->ij", np.conj(dCdW), W).real
        GW = dCdD[..., None, None] * W - (pair / (2.0 * Dsafe))[..., None, None] * W
        GW += dCdW / (2.0 * Dsafe)[..., None, None]
        M = np.einsum("ijak,ijbk->ijab", W, np.conj(W))
        G = np.einsum("ijak,ijbk,ijbc->ijac", GW, np.conj(W), np.linalg.inv(M))
        return hermitize(G)


def numeric_local_derivative(func: Functional, state: HybridDensity, step_rel=1e-6):
    """Numeric dF/dP for P-local functionals, by central differences in the
    coefficients of the Hermitian basis, vectorized over the grid."""
    grid, P = state.grid, state.P
    if func.pointwise_integrand(grid, P) is None:
        raise ValueError(
            f"functional '{func.name}' does not expose a pointwise integrand; "
            "use its analytic derivative or the single-point probe"
        )
    n = state.n
    scale = max(float(np.max(np.abs(P))), 1e-30)
    h = step_rel * scale
    G = np.zeros(grid.shape + (n, n), dtype=complex)
    for kind, a, b, E in hermitian_basis(n):
        fp = func.pointwise_integrand(grid, P + h * E)
        fm = func.pointwise_integrand(grid, P - h * E)
        d = (fp - fm) / (2.0 * h)
        if kind == "diag":
            G[..., a, a] += d
        elif kind == "sym":
            G[..., a, b] += 0.5 * d
            G[..., b, a] += 0.5 * d
        else:
            G[..., a, b] += 0.5j * d
            G[..., b, a] += -0.5j * d
    return G


def derivative_probe(func: Functional, state: HybridDensity, i, j, step_rel=1e-6,
                     richardson=True):
    """Single-point dF/dP probe by perturbing the full functional at (i, j).

    Central differences in each Hermitian basis coefficient, scaled by
    1/(dq dp); with ``richardson`` the step is halved and the results
    compared, returning (G, discrepancy).
    """
    grid = state.grid
    n = state.n
    scale = max(float(np.max(np.abs(state.P))), 1e-30)

    def probe(h):
        G = np.zeros((n, n), dtype=complex)
        for kind, a, b, E in hermitian_basis(n):
            Pp = np.array(state.P, copy=True)
            Pm = np.array(state.P, copy=True)
            Pp[i, j] += h * E
            Pm[i, j] -= h * E
            d = (func.value(HybridDensity(grid, Pp)) - func.value(HybridDensity(grid, Pm)))
            d /= 2.0 * h * grid.dq * grid.dp
            if kind == "diag":
                G[a, a] += d
            elif kind == "sym":
                G[a, b] += 0.5 * d
                G[b, a] += 0.5 * d
            else:
                G[a, b] += 0.5j * d
                G[b, a] += -0.5j * d
        return G

    h = step_rel * scale
    G = probe(h)
    if not richardson:
        return G, None
    G2 = probe(0.5 * h)
    return G2, float(np.max(np.abs(G - G2)))


# -- hybrid Poisson bracket -------------------------------------------------------


def hybrid_bracket(f: Functional, g: Functional, state: HybridDensity, eps_tr_rel=1e-12,
                   return_scale=False):
    """{{f, g}}(P), antisymmetric by construction; vacuum handled as in C1.

    With ``return_scale`` also returns the integral of the pointwise
    magnitudes of the raw bracket pieces (the two transport products and the
    commutator term, before any cancellation): the natural size of what a
    Casimir cancels, hence the reference scale for |{{f, C}}| tests.
    """
    grid, P = state.grid, state.P
    Gf = f.derivative(state)
    Gg = g.derivative(state)
    TrP = trace_field(P)
    floor = eps_tr_rel * max(float(np.max(TrP)), 1e-300)
    mask = TrP > floor
    denom = np.where(mask, TrP, 1.0)

    Afq = np.einsum("ijab,ijba->ij", P, grid.partial_q(Gf)).real
    Afp = np.einsum("ijab,ijba->ij", P, grid.partial_p(Gf)).real
    Agq = np.einsum("ijab,ijba->ij", P, grid.partial_q(Gg)).real
    Agp = np.einsum("ijab,ijba->ij", P, grid.partial_p(Gg)).real
    term1 = np.where(mask, (Afq * Agp - Afp * Agq) / denom, 0.0)

    comm = Gf @ Gg - Gg @ Gf
    term2 = np.einsum("ijab,ijba->ij", P, comm).imag / grid.hbar
    value = float(grid.integrate(term1 + term2))
    if not return_scale:
        return value
    raw = np.where(mask, (np.abs(Afq * Agp) + np.abs(Afp * Agq)) / denom, 0.0)
    scale = float(grid.integrate(raw + np.abs(term2)))
    return value, scale


def bracket_consistency(f: Functional, state: HybridDensity, ham: Hamiltonian,
                        eps_tr_rel=1e-12):
    """Compare {{f, h}} with dF/dt chained through the Ehrenfest tendency."""
    grid = state.grid
    lhs = hybrid_bracket(f, EnergyFunctional(ham), state, eps_tr_rel)
    tend = _dyn.ehrenfest_rhs(grid, state.P, ham, eps_tr_rel)[0][0]
    Gf = f.derivative(state)
    rhs = float(grid.integrate(np.einsum("ijab,ijba->ij", Gf, tend).real))
    mag = float(
        grid.integrate(
            np.linalg.norm(Gf, axis=(-2, -1)) * np.linalg.norm(tend, axis=(-2, -1))
        )
    )
    scale = max(abs(lhs), abs(rhs), mag, 1e-300)
    return {"bracket": lhs, "chain_rate": rhs, "residual": abs(lhs - rhs) / scale, "scale": scale}


# -- split-state entropies and Casimirs --------------------------------------------


class FlaggedValue(NamedTuple):
    value: float
    lambda_positive: bool


def casimir_c2(split: ConditionalSplit, sigma: ScalarFn, eps_rel=1e-12) -> FlaggedValue:
    """C2 = integral D Sigma(Lambda / D); flags a sign-indefinite Lambda.

    With Sigma = ln this is the pure-state hybrid entropy (minus the KL
    divergence of D from Lambda); that interpretation is invalid when Lambda
    is not positive on the support, hence the flag.
    """
    grid = split.grid
    Lam = lambda_of(split)
    D = split.D
    floor = eps_rel * max(float(np.max(D)), 1e-300)
    mask = D > floor
    ok = bool(np.min(Lam[mask]) > 0.0) if np.any(mask) else True
    Dsafe = np.where(mask, D, 1.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        integrand = np.where(mask, D * sigma.f(Lam / Dsafe), 0.0)
    return FlaggedValue(float(grid.integrate(integrand)), ok)


def shannon_pure(split: ConditionalSplit) -> FlaggedValue:
    """S = -integral D ln(D / Lambda)."""
    return casimir_c2(split, scalar_fn("log"))


def entropy_meanfield(grid, D, rho) -> float:
    """von Neumann entropy of rho plus Shannon entropy of D."""
    w = np.linalg.eigvalsh(hermitize(np.asarray(rho)))
    svn = float(np.sum(np.where(w > EIG_CLAMP, -w * _safe_log(w), 0.0)))
    Dpos = np.where(D > EIG_CLAMP, D, 1.0)
    return svn - float(grid.integrate(D * np.log(Dpos)))


def renyi_meanfield(grid, D, rho, alpha) -> float:
    """H_alpha = (ln Tr rho^alpha + ln integral D^alpha) / (1 - alpha)."""
    a = float(alpha)
    if a == 1.0:
        raise ValueError("alpha must differ from 1")
    w = np.maximum(np.linalg.eigvalsh(hermitize(np.asarray(rho))), 0.0)
    qterm = np.log(np.sum(w**a))
    cterm = np.log(float(grid.integrate(np.maximum(D, 0.0) ** a)))
    return float((qterm + cterm) / (1.0 - a))


def _conditional_spectrum(split):
    """(D, Lambda, eigenvalues of the conditional density) for either split."""
    if isinstance(split, ConditionalSplit):
        nu = np.ones(split.grid.shape + (1,))
    elif isinstance(split, UhlmannSplit):
        A = np.einsum("ijak,ijbk->ijab", split.W, np.conj(split.W))
        nu = np.maximum(np.linalg.eigvalsh(hermitize(A)), 0.0)
    else:
        raise TypeError("expected a ConditionalSplit or UhlmannSplit")
    return split.D, lambda_of(split), nu


def entropy_uhlmann(split, eps_rel=1e-12) -> FlaggedValue:
    """S = -Tr integral P ln(P / Lambda), from the pointwise spectrum of P."""
    grid = split.grid
    D, Lam, nu = _conditional_spectrum(split)
    floor = eps_rel * max(float(np.max(D)), 1e-300)
    mask = D > floor
    ok = bool(np.min(Lam[mask]) > 0.0) if np.any(mask) else True
    lam = D[..., None] * nu  # eigenvalues of P
    with np.errstate(invalid="ignore", divide="ignore"):
        terms = np.where(
            lam > EIG_CLAMP * max(float(np.max(D)), 1e-300),
            -lam * np.log(np.where(lam > 0, lam, 1.0) / Lam[..., None]),
            0.0,
        )
        integrand = np.where(mask, np.sum(terms, axis=-1), 0.0)
    return FlaggedValue(float(grid.integrate(integrand)), ok)


def renyi_mqc(split, alpha, eps_rel=1e-12) -> FlaggedValue:
    """H_alpha = (1-alpha)^-1 ln integral Lambda Tr(P / Lambda)^alpha."""
    a = float(alpha)
    if a == 1.0:
        raise ValueError("alpha must differ from 1")
    grid = split.grid
    D, Lam, nu = _conditional_spectrum(split)
    floor = eps_rel * max(float(np.max(D)), 1e-300)
    mask = D > floor
    ok = bool(np.min(Lam[mask]) > 0.0) if np.any(mask) else True
    if not ok:
        return FlaggedValue(float("nan"), False)
    lam = D[..., None] * nu
    with np.errstate(invalid="ignore", divide="ignore"):
        tr = np.sum(np.power(np.maximum(lam / Lam[..., None], 0.0), a), axis=-1)
        integrand = np.where(mask, Lam * tr, 0.0)
    return FlaggedValue(float(np.log(grid.integrate(integrand)) / (1.0 - a)), ok)


def casimir_general_value(split: UhlmannSplit, gamma: GammaSpec, Lam=None, floor=None,
                          eps_rel=1e-12) -> float:
    """C = integral D Gamma(W W^dag, Lambda / D) for a (D, W) state."""
    grid = split.grid
    D = split.D
    if Lam is None:
        Lam = lambda_of(split)
    if floor is None:
        floor = eps_rel * max(float(np.max(D)), 1e-300)
    A = np.einsum("ijak,ijbk->ijab", split.W, np.conj(split.W))
    w = np.maximum(np.linalg.eigvalsh(hermitize(A)), 0.0)
    Dsafe = np.where(D > floor, D, 1.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        integrand = np.where(D > floor, D * gamma.value(w, Lam / Dsafe), 0.0)
    return float(grid.integrate(integrand))


# -- Poincare loop invariant --------------------------------------------------------


def loop_integral(split, points) -> float:
    """Closed line integral of <field, (p + i hbar d_q) field> dq
    + <field, i hbar d_p field> dp over an advected polyline.

    Equals the circulation of (A - A_B) for unit-norm conditional fields:
    the integrand components are (p - A_q, -A_p), with the Berry connection
    interpolated from its grid stencils and p taken from the (unwrapped)
    loop coordinates themselves.
    """
    grid = split.grid
    vals = split.psi if isinstance(split, ConditionalSplit) else split.W
    bd = berry_data(grid, vals, warn_nonpositive=False)
    Aq = grid.interpolate(bd.A_B.X_q, points[:, 0], points[:, 1])
    Ap = grid.interpolate(bd.A_B.X_p, points[:, 0], points[:, 1])
    Fq = points[:, 1] - Aq
    Fp = -Ap
    dq = np.roll(points[:, 0], -1) - points[:, 0]
    dp = np.roll(points[:, 1], -1) - points[:, 1]
    mq = 0.5 * (Fq + np.roll(Fq, -1))
    mp = 0.5 * (Fp + np.roll(Fp, -1))
    return float(np.sum(mq * dq + mp * dp))


# -- Liouville volume transport ------------------------------------------------------


def split_velocity(split, ham: Hamiltonian):
    if isinstance(split, ConditionalSplit):
        Xq = np.einsum("ija,ijab,ijb->ij", np.conj(split.psi), ham.X_q, split.psi).real
        Xp = np.einsum("ija,ijab,ijb->ij", np.conj(split.psi), ham.X_p, split.psi).real
    else:
        Xq = np.einsum("ijak,ijab,ijbk->ij", np.conj(split.W), ham.X_q, split.W).real
        Xp = np.einsum("ijak,ijab,ijbk->ij", np.conj(split.W), ham.X_p, split.W).real
    return Xq, Xp


def lambda_transport_residual(times, splits, ham: Hamiltonian):
    """Residual of d_t Lambda + div(Lambda X) on a sampled trajectory.

    Central differences in time across consecutive samples; returns
    (t_mid, rms, max) arrays over the interior sample times.
    """
    if len(splits) < 3:
        raise ValueError("need at least three samples")
    grid = splits[0].grid
    lams = [lambda_of(s) for s in splits]
    t_mid, rms, mx = [], [], []
    for k in range(1, len(splits) - 1):
        dt2 = times[k + 1] - times[k - 1]
        dLam = (lams[k + 1] - lams[k - 1]) / dt2
        Xq, Xp = split_velocity(splits[k], ham)
        resid = dLam + grid.divergence(lams[k] * Xq, lams[k] * Xp)
        t_mid.append(times[k])
        rms.append(float(np.sqrt(np.mean(resid**2))))
        mx.append(float(np.max(np.abs(resid))))
    return np.array(t_mid), np.array(rms), np.array(mx)
