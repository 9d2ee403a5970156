"""Scenario configuration: YAML sections -> runtime objects.

Sections: ``domain`` (q0,q1,p0,p1), ``grid`` (Nq,Np,n[,m]), ``physics``
(hbar), ``time`` (dt or cfl, steps or t_final, sample_every, renormalize),
``model``, ``hamiltonian`` (kind + parameters), ``initial`` (representation +
profile specs), ``diagnostics`` (functional list, loop spec, probe seed) and
``equilibrium`` (representation, E or mu, branch). Missing keys raise
``ConfigError`` carrying the dotted key path.
"""

from __future__ import annotations

import numpy as np
import yaml

from . import hamiltonians as _ham
from .dynamics import MODEL_KINDS, MeanFieldState, StepperConfig, MODEL_OPS, circle_loop
from .equilibria import MaxEntProblem
from .grids import PhaseGrid, hermitize
from .hamiltonians import eigenfields
from .snapshots import read_snapshot
from .states import ConditionalSplit, UhlmannSplit, compose, quantum_marginal


class ConfigError(ValueError):
    def __init__(self, path, message="missing or invalid key"):
        super().__init__(f"{message}: {path}")
        self.path = path


def load_config(path):
    with open(path) as fh:
        cfg = yaml.safe_load(fh)
    if not isinstance(cfg, dict):
        raise ConfigError("<root>", "config must be a mapping")
    return cfg


def require(cfg, path, kind=None):
    node = cfg
    for part in path.split("."):
        if not isinstance(node, dict) or part not in node:
            raise ConfigError(path)
        node = node[part]
    if kind is not None:
        try:
            node = kind(node)
        except (TypeError, ValueError):
            raise ConfigError(path, "wrong type") from None
    return node


def get(cfg, path, default=None):
    node = cfg
    for part in path.split("."):
        if not isinstance(node, dict) or part not in node:
            return default
        node = node[part]
    return node


def build_grid(cfg) -> PhaseGrid:
    return PhaseGrid(
        require(cfg, "domain.q0", float),
        require(cfg, "domain.q1", float),
        require(cfg, "domain.p0", float),
        require(cfg, "domain.p1", float),
        require(cfg, "grid.Nq", int),
        require(cfg, "grid.Np", int),
        hbar=float(get(cfg, "physics.hbar", 1.0)),
    )


def build_hamiltonian(grid, cfg) -> _ham.Hamiltonian:
    spec = require(cfg, "hamiltonian")
    try:
        return _ham.build(grid, spec)
    except KeyError as exc:
        raise ConfigError(f"hamiltonian.{exc.args[0]}") from None


def _complex_array(data):
    """Complex entries are [re, im] pairs at the innermost level, e.g. a
    2-vector is [[1.0, 0.0], [0.0, 0.0]]."""
    arr = np.asarray(data, dtype=float)
    if arr.ndim == 0 or arr.shape[-1] != 2:
        raise ConfigError("<complex entry>", "complex values must be [re, im] pairs")
    return arr[..., 0] + 1j * arr[..., 1]


def _density_profile(grid, spec, path):
    name = spec.get("profile")
    if name == "gaussian":
        qc, pc = spec.get("center", (0.0, 0.0))
        sq, sp = spec.get("sigma", (1.0, 1.0))
        D = np.exp(
            -0.5 * ((grid.Q - qc) / sq) ** 2 - 0.5 * ((grid.P - pc) / sp) ** 2
        )
    elif name == "von_mises":
        # torus-native Gaussian: exp(kappa (cos(k dx) - 1)), seam-smooth by
        # construction, width ~ 1/sqrt(kappa) near the peak
        qc, pc = spec.get("center", (0.0, 0.0))
        kq, kp = spec.get("kappa", (2.0, 2.0))
        aq = 2 * np.pi / grid.Lq
        ap = 2 * np.pi / grid.Lp
        D = np.exp(
            kq * (np.cos(aq * (grid.Q - qc)) - 1.0) / aq**2
            + kp * (np.cos(ap * (grid.P - pc)) - 1.0) / ap**2
        )
    elif name == "uniform":
        D = np.ones(grid.shape)
    elif name == "double_gaussian":
        D = np.zeros(grid.shape)
        for bump in spec.get("bumps", []):
            qc, pc = bump.get("center", (0.0, 0.0))
            sq, sp = bump.get("sigma", (1.0, 1.0))
            w = float(bump.get("weight", 1.0))
            D += w * np.exp(
                -0.5 * ((grid.Q - qc) / sq) ** 2 - 0.5 * ((grid.P - pc) / sp) ** 2
            )
    else:
        raise ConfigError(f"{path}.profile", f"unknown density profile '{name}'")
    D = D / float(grid.integrate(D))
    w = float(spec.get("uniform_weight", 0.0))
    if w > 0.0:
        D = (1.0 - w) * D + w / grid.area
    return D


def _state_profile(grid, ham, spec, path):
    name = spec.get("profile")
    if name == "constant":
        vec = _complex_array(require(spec, "vector"))
        vec = vec / np.linalg.norm(vec)
        return np.broadcast_to(vec, grid.shape + vec.shape).copy()
    if name == "eigen":
        branch = int(spec.get("branch", 0))
        return np.ascontiguousarray(eigenfields(ham).state(branch))
    if name == "twisted":
        # periodic for any amplitude: the mixing angle is itself a periodic
        # function of p, theta = amplitude * sin(k kappa_p (p - pc))
        k = int(spec.get("k", 1))
        ell = int(spec.get("l", 1))
        qc, pc = spec.get("center", (0.5 * (grid.q0 + grid.q1), 0.5 * (grid.p0 + grid.p1)))
        amp = float(spec.get("amplitude", 1.0))
        th = amp * np.sin(k * (2 * np.pi / grid.Lp) * (grid.P - pc))
        ph = ell * (2 * np.pi / grid.Lq) * (grid.Q - qc)
        psi = np.zeros(grid.shape + (2,), dtype=complex)
        psi[..., 0] = np.cos(th)
        psi[..., 1] = np.exp(1j * ph) * np.sin(th)
        return psi
    raise ConfigError(f"{path}.profile", f"unknown state profile '{name}'")


def _waveop_profile(grid, ham, spec, m, path):
    name = spec.get("profile")
    n = ham.n
    if name == "constant":
        W = _complex_array(require(spec, "matrix"))
        W = W / np.linalg.norm(W)
        return np.broadcast_to(W, grid.shape + W.shape).copy()
    if name == "eigen_mix":
        weights = [float(w) for w in require(spec, "weights")]
        if len(weights) > m:
            raise ConfigError(f"{path}.weights", "more weights than ancilla columns")
        total = sum(weights)
        eig = eigenfields(ham)
        W = np.zeros(grid.shape + (n, m), dtype=complex)
        for b, w in enumerate(weights):
            W[..., :, b] = np.sqrt(w / total) * eig.state(b)
        return W
    if name == "embed_state":
        psi = _state_profile(grid, ham, require(spec, "state"), f"{path}.state")
        W = np.zeros(grid.shape + (n, m), dtype=complex)
        W[..., :, 0] = psi
        return W
    raise ConfigError(f"{path}.profile", f"unknown wave-operator profile '{name}'")


def require_spec(spec, key, path):
    if key not in spec:
        raise ConfigError(f"{path}.{key}")
    return spec[key]


def build_initial_state(grid, ham, cfg):
    """Returns the initial state object matching initial.representation."""
    init = require(cfg, "initial")
    rep = require(cfg, "initial.representation")
    if "snapshot" in init:
        state = read_snapshot(init["snapshot"])
        if not state.grid.compatible(grid):
            raise ConfigError("initial.snapshot", "snapshot grid does not match config")
        return state
    if rep == "conditional":
        D = _density_profile(grid, require(cfg, "initial.density"), "initial.density")
        psi = _state_profile(grid, ham, require(cfg, "initial.state"), "initial.state")
        return ConditionalSplit(grid, D, psi)
    if rep == "uhlmann":
        m = int(get(cfg, "grid.m", ham.n))
        D = _density_profile(grid, require(cfg, "initial.density"), "initial.density")
        W = _waveop_profile(grid, ham, require(cfg, "initial.waveop"), m, "initial.waveop")
        return UhlmannSplit(grid, D, W)
    if rep == "density":
        base = dict(cfg)
        sub = dict(require(cfg, "initial"))
        inner_rep = sub.get("compose_from", "conditional")
        sub["representation"] = inner_rep
        base = {**cfg, "initial": sub}
        return compose(build_initial_state(grid, ham, base))
    if rep == "mean_field":
        D = _density_profile(grid, require(cfg, "initial.density"), "initial.density")
        rho_spec = require(cfg, "initial.rho")
        if "matrix" in rho_spec:
            rho = hermitize(_complex_array(rho_spec["matrix"]))
            rho = rho / np.real(np.trace(rho))
        elif rho_spec.get("profile") == "marginal_of_state":
            psi = _state_profile(grid, ham, require_spec(rho_spec, "state", "initial.rho"),
                                 "initial.rho.state")
            rho = quantum_marginal(ConditionalSplit(grid, D, psi))
        else:
            raise ConfigError("initial.rho", "give a matrix or profile=marginal_of_state")
        return MeanFieldState(grid, D, rho)
    raise ConfigError("initial.representation", f"unknown representation '{rep}'")


def model_of(cfg, override=None):
    model = override or get(cfg, "model")
    if model is None:
        raise ConfigError("model")
    if model not in MODEL_KINDS:
        raise ConfigError("model", f"unknown model '{model}'")
    return model


def build_stepper(cfg, grid, ham, model, state) -> StepperConfig:
    dt = get(cfg, "time.dt")
    steps = get(cfg, "time.steps")
    cfl = get(cfg, "time.cfl")
    t_final = get(cfg, "time.t_final")
    if dt is None:
        if cfl is None:
            raise ConfigError("time.dt", "give dt or cfl")
        ops = MODEL_OPS[model]
        arrays = ops.unpack(state)
        _, info = ops.rhs(grid, ham, arrays, float(get(cfg, "time.eps_tr_rel", 1e-12)))
        speed = max(info["max_speed"], 1e-12)
        dt = float(cfl) * min(grid.dq, grid.dp) / speed
        if t_final is not None:
            steps = max(int(np.ceil(float(t_final) / dt)), 1)
            dt = float(t_final) / steps
    if steps is None:
        if t_final is None:
            raise ConfigError("time.steps", "give steps or t_final")
        steps = max(int(round(float(t_final) / float(dt))), 1)
    return StepperConfig(
        dt=float(dt),
        steps=int(steps),
        sample_every=int(get(cfg, "time.sample_every", 1)),
        eps_tr_rel=float(get(cfg, "time.eps_tr_rel", 1e-12)),
        renormalize=bool(get(cfg, "time.renormalize", False)),
    )


def build_loop(cfg):
    spec = get(cfg, "diagnostics.loop")
    if spec is None:
        return None
    center = spec.get("center", (0.0, 0.0))
    radius = float(spec.get("radius", 0.5))
    K = int(spec.get("points", 256))
    return circle_loop((float(center[0]), float(center[1])), radius, K)


def build_problem(grid, ham, cfg) -> MaxEntProblem:
    eq = require(cfg, "equilibrium")
    rep = require(cfg, "equilibrium.representation")
    E = eq.get("E")
    mu = eq.get("mu")
    return MaxEntProblem(
        representation=rep,
        ham=ham,
        E=None if E is None else float(E),
        mu=None if mu is None else float(mu),
        branch=int(eq.get("branch", 0)),
    )
