"""Random probe states and functionals for bracket/Casimir verification.

The general Casimirs depend on derivatives of the conditional wave operator,
so probe states are built directly from smooth (D, W) data: the deterministic
factorization gauge of ``uhlmann_factor`` is only piecewise smooth on generic
random fields and would pollute Lambda with gauge jumps.
"""

from __future__ import annotations

import numpy as np

from . import invariants as _inv
from .grids import hermitize, random_band_limited, trace_field
from .states import HybridDensity, UhlmannSplit, compose


def random_psd_density(grid, n, rng, kmax=2, floor=0.3):
    """Smooth random PSD matrix field with trace bounded away from zero.

    Suitable for the trace-local functionals (C1, moments, probes); for the
    gradient-dependent Casimirs prefer ``random_smooth_split``.
    """
    G = random_band_limited(grid, rng, kmax=kmax, trailing=(n, n), complex_valued=True)
    P = np.einsum("ijab,ijcb->ijac", G, np.conj(G))
    P = hermitize(P)
    mean_tr = float(np.mean(trace_field(P)))
    P += floor * mean_tr * np.eye(n)
    P /= float(grid.integrate(trace_field(P)))
    return HybridDensity(grid, P)


def random_smooth_split(grid, n, rng, kmax=1, amplitude=0.4, floor=0.3):
    """Random full-rank (D, W) with globally smooth W and positive Lambda.

    W = exp(i S(q,p)) sqrt(diag(w)) with S a small random Hermitian field and
    CONSTANT weights w: the gauge Noether charge W^dag W is then spatially
    uniform, which is exactly the condition under which the Liouville volume
    is insensitive to the gauge convention at first order and the general
    Casimirs are well-defined functionals of the composed density.
    """
    S = amplitude * random_band_limited(grid, rng, kmax=kmax, trailing=(n, n),
                                        complex_valued=True)
    S = hermitize(S)
    w_eig, v = np.linalg.eigh(S)  # unitary field U = exp(i S)
    U = np.einsum("...ab,...b,...cb->...ac", v, np.exp(1j * w_eig), np.conj(v))
    weights = np.linspace(1.5, 0.5, n)
    weights = weights / weights.sum()
    W = U * np.sqrt(weights)[None, None, None, :]

    D = floor + (1.0 - floor) * (1.0 + random_band_limited(grid, rng, kmax=kmax)) / 2.0
    D = np.maximum(D, 0.1)
    D /= float(grid.integrate(D))
    return UhlmannSplit(grid, D, W)


def aligned_smooth_split(grid, rng=None, theta0=0.75, dtheta=0.35):
    """n = m = 2 smooth split whose canonical factorization gauge equals the
    construction: eigenvalues strictly ordered, leading components bounded
    away from zero. Used to validate derivatives against the literal
    single-point numeric variation of the composed density.
    """
    th = theta0 + dtheta * np.sin(grid.Q * 2 * np.pi / grid.Lq) * np.cos(grid.P * 2 * np.pi / grid.Lp)
    ph = 0.5 * np.sin(grid.P * 2 * np.pi / grid.Lp)
    w1 = 0.65  # constant spectral weight: uniform gauge Noether charge
    c, s = np.cos(th), np.sin(th)
    W = np.zeros(grid.shape + (2, 2), dtype=complex)
    W[..., 0, 0] = c * np.sqrt(w1)
    W[..., 1, 0] = s * np.exp(1j * ph) * np.sqrt(w1)
    W[..., 0, 1] = s * np.sqrt(1 - w1)
    W[..., 1, 1] = -c * np.exp(1j * ph) * np.sqrt(1 - w1)
    D = 0.3 + 0.2 * np.cos(grid.Q * 2 * np.pi / grid.Lq) * np.sin(grid.P * 2 * np.pi / grid.Lp)
    D /= float(grid.integrate(D))
    return UhlmannSplit(grid, D, W)


def random_probe_functionals(grid, n, rng, count=20, kmax=3):
    """Band-limited linear functionals f(P) = integral Re Tr(A P)."""
    probes = []
    for k in range(count):
        A = random_band_limited(grid, rng, kmax=kmax, trailing=(n, n), complex_valued=True)
        probes.append(_inv.LinearProbeFunctional(hermitize(A), name=f"probe{k}"))
    return probes


def casimir_probe_report(split, ham, rng, n_probes=20, kmax=2):
    """Bracket random functionals against the Casimir family on a state.

    ``split`` is a smooth (D, W) probe state; the report records, per probe
    f, |{{f, C}}| for each Casimir C, the no-cancellation bracket scale, and
    the antisymmetry residual.
    """
    state = compose(split)
    grid = state.grid
    n = state.n
    probes = random_probe_functionals(grid, n, rng, count=n_probes, kmax=kmax)
    casimirs = {
        "C1_entropy": _inv.CasimirC1(_inv.spectral_fn("neg_x_log_x_trace")),
        "C1_quadratic": _inv.CasimirC1(_inv.spectral_fn("quadratic")),
        "C_general_entropy": _inv.CasimirGeneral(_inv.GammaSpec.entropy(), split=split),
        "C_general_renyi2": _inv.CasimirGeneral(_inv.GammaSpec.renyi(2.0), split=split),
        "C2_log": _inv.CasimirGeneral(_inv.GammaSpec.from_sigma(_inv.scalar_fn("log")),
                                      split=split),
    }
    reference = _inv.EnergyFunctional(ham)

    rows = []
    anti = []
    for f in probes:
        fg, scale = _inv.hybrid_bracket(f, reference, state, return_scale=True)
        entry = {"probe": f.name, "scale": scale}
        for cname, C in casimirs.items():
            entry[cname] = abs(_inv.hybrid_bracket(f, C, state))
        rows.append(entry)
        gf = _inv.hybrid_bracket(reference, f, state)
        anti.append(abs(fg + gf) / (abs(fg) + scale))

    worst = {}
    for cname in casimirs:
        worst[cname] = max(r[cname] / max(r["scale"], 1e-300) for r in rows)
    return {
        "rows": rows,
        "worst_ratio": worst,
        "max_ratio": max(worst.values()),
        "antisymmetry_max": max(anti),
        "n_probes": n_probes,
    }
