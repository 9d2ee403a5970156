"""Command-line harness: simulate / equilibrium / casimir-check / convergence.

Exit codes: 0 success, 1 configuration error, 2 numerical abort.
``MQC_THREADS`` caps the BLAS/OpenMP thread pools of the data-parallel
kernels (set before the numerics are imported).
"""

from __future__ import annotations

import argparse
import json
import os
import sys


def _cap_threads():
    t = os.environ.get("MQC_THREADS")
    if t:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                    "NUMEXPR_NUM_THREADS"):
            os.environ.setdefault(var, t)


def build_parser():
    parser = argparse.ArgumentParser(prog="mqclab",
                                     description="Mixed quantum-classical dynamics laboratory")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (("simulate", cmd_simulate), ("equilibrium", cmd_equilibrium),
                     ("casimir-check", cmd_casimir_check), ("convergence", cmd_convergence)):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="scenario config (YAML)")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--model", default=None, help="override the configured model")
        p.add_argument("--quiet", action="store_true")
        if name == "convergence":
            p.add_argument("--levels", type=int, default=3)
            p.add_argument("--mode", choices=("both", "temporal"), default="both")
        p.set_defaults(fn=fn)
    return parser


def main(argv=None):
    _cap_threads()
    args = build_parser().parse_args(argv)
    from .config import ConfigError
    from .dynamics import NumericalAbort

    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except NumericalAbort as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1


def _say(args, msg):
    if not args.quiet:
        print(msg)


def _prepare(args):
    from . import config as C

    cfg = C.load_config(args.config)
    grid = C.build_grid(cfg)
    ham = C.build_hamiltonian(grid, cfg)
    return C, cfg, grid, ham


def _meta(cfg, model, run=None, extra=None):
    meta = {
        "format": "mqclab-meta 1",
        "model": model,
        "config": cfg,
        "notes": {
            "beyond_ordering": (
                "trace corrections in the gradient-corrected vector field keep "
                "the written left-to-right operator order"
            ),
            "vacuum_continuation": (
                "conditional factors below the density floor are continued from "
                "the nearest valid point along grid lines"
            ),
        },
    }
    if run is not None:
        lam_mins = [r.get("lambda_min") for r in run.rows if r.get("lambda_min") is not None]
        meta["flags"] = {
            "aborted": run.aborted,
            "abort_reason": run.abort_reason,
            "cfl_max_seen": run.cfl_max_seen,
            "lambda_nonpositive_seen": bool(lam_mins and min(lam_mins) <= 0.0),
        }
    if extra:
        meta.update(extra)
    return meta


def cmd_simulate(args):
    import numpy as np

    from . import config as C
    from . import diagnostics as diag
    from .dynamics import rk4_run
    from .snapshots import write_snapshot

    Cmod, cfg, grid, ham = _prepare(args)
    model = Cmod.model_of(cfg, args.model)
    state = Cmod.build_initial_state(grid, ham, cfg)
    stepper = Cmod.build_stepper(cfg, grid, ham, model, state)
    loop = Cmod.build_loop(cfg)
    dspec = Cmod.get(cfg, "diagnostics", {}) or {}
    sample_fn = diag.make_sample_fn(
        model, ham,
        functionals=dspec.get("functionals"),
        renyi_alpha=float(dspec.get("renyi_alpha", 2.0)),
        c1_phi=dspec.get("c1_phi", "neg_x_log_x_trace"),
        c2_sigma=dspec.get("c2_sigma", "log"),
        with_loop=loop is not None,
    )

    os.makedirs(args.out, exist_ok=True)
    write_snapshot(os.path.join(args.out, "initial.snap"), _snapshotable(state))
    run = rk4_run(model, state, ham, stepper, sample_fn=sample_fn, loop=loop,
                  keep_states=False)
    with open(os.path.join(args.out, "diagnostics.csv"), "w") as fh:
        fh.write(diag.rows_to_csv(run.rows))
    with open(os.path.join(args.out, "meta.json"), "w") as fh:
        json.dump(_meta(cfg, model, run), fh, indent=2, sort_keys=True)
        fh.write("\n")
    if run.aborted:
        if run.states:
            write_snapshot(os.path.join(args.out, "abort.snap"), _snapshotable(run.states[-1]))
        print(f"numerical abort: {run.abort_reason}", file=sys.stderr)
        return 2
    write_snapshot(os.path.join(args.out, "final.snap"), _snapshotable(run.states[-1]))
    _say(args, f"{model}: {stepper.steps} steps of dt={stepper.dt:.6g}, "
               f"{len(run.rows)} samples, max CFL {run.cfl_max_seen:.3f}")
    return 0


def cmd_equilibrium(args):
    from . import config as C
    from . import equilibria as eq
    from .snapshots import write_snapshot

    Cmod, cfg, grid, ham = _prepare(args)
    problem = Cmod.build_problem(grid, ham, cfg)
    if problem.representation == "uhlmann":
        result = eq.gibbs_uhlmann(problem)
    elif problem.representation == "conditional":
        result = eq.gibbs_conditional(problem)
    else:
        mu = problem.mu if problem.mu is not None else eq.solve_mu(problem)[0]
        state = eq.gibbs_meanfield_uncoupled(grid, ham, mu)
        from . import dynamics as dyn
        result = eq.EquilibriumResult(state, mu, float("nan"), problem.branch,
                                      dyn.energy_of("mean_field", state, ham))

    metrics = dict(result.residuals)
    if bool(Cmod.get(cfg, "equilibrium.certify", True)):
        T_check = float(Cmod.get(cfg, "equilibrium.T_check", 6.283185307179586))
        metrics.update(eq.stationarity_residual(result, ham, T_check=T_check))

    os.makedirs(args.out, exist_ok=True)
    write_snapshot(os.path.join(args.out, "equilibrium.snap"), _snapshotable(result.state))
    record = {
        "mu": result.mu,
        "Z_C": result.Z_C,
        "branch": result.branch,
        "energy": result.energy,
        "metrics": metrics,
    }
    with open(os.path.join(args.out, "equilibrium.json"), "w") as fh:
        json.dump(record, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")
    _say(args, f"mu={result.mu:.6g} energy={result.energy:.6g} "
               + " ".join(f"{k}={v:.3e}" for k, v in metrics.items()
                          if isinstance(v, float) and k != "T_check"))
    return 0


def cmd_casimir_check(args):
    import numpy as np

    from . import config as C
    from .probes import casimir_probe_report, random_smooth_split

    Cmod, cfg, grid, ham = _prepare(args)
    dspec = Cmod.get(cfg, "diagnostics", {}) or {}
    seed = int(dspec.get("probes_seed", 12345))
    n_probes = int(dspec.get("n_probes", 20))
    rng = np.random.default_rng(seed)
    split = random_smooth_split(grid, int(Cmod.require(cfg, "grid.n", int)), rng)
    report = casimir_probe_report(split, ham, rng, n_probes=n_probes)

    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "casimir_report.json"), "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")
    _say(args, "worst |{{f,C}}| / scale per Casimir:")
    for k, v in sorted(report["worst_ratio"].items()):
        _say(args, f"  {k:20s} {v:.3e}")
    _say(args, f"antisymmetry max: {report['antisymmetry_max']:.3e}")
    return 0


def cmd_convergence(args):
    import numpy as np

    from . import config as C
    from . import diagnostics as diag
    from .dynamics import rk4_run

    Cmod, cfg, grid0, _ = _prepare(args)
    has_fixed_T = Cmod.get(cfg, "time.t_final") is not None or (
        Cmod.get(cfg, "time.dt") is not None and Cmod.get(cfg, "time.steps") is not None
    )
    if not has_fixed_T:
        raise Cmod.ConfigError("time.t_final", "convergence study needs a fixed final time")

    drift_cols = ["mass", "energy", "C1", "C2", "S_pure", "S_uhlmann", "renyi_alpha"]
    table = []
    hs = []
    for level in range(args.levels):
        scaled = json.loads(json.dumps(cfg))
        f = 2**level
        if args.mode == "both":
            scaled["grid"]["Nq"] = cfg["grid"]["Nq"] * f
            scaled["grid"]["Np"] = cfg["grid"]["Np"] * f
        if "dt" in scaled.get("time", {}):
            scaled["time"]["dt"] = cfg["time"]["dt"] / f
            if "steps" in scaled["time"]:
                scaled["time"]["steps"] = cfg["time"]["steps"] * f
        scaled["time"]["sample_every"] = int(cfg["time"].get("sample_every", 1)) * f

        grid = Cmod.build_grid(scaled)
        ham = Cmod.build_hamiltonian(grid, scaled)
        model = Cmod.model_of(scaled, args.model)
        state = Cmod.build_initial_state(grid, ham, scaled)
        stepper = Cmod.build_stepper(scaled, grid, ham, model, state)
        dspec = Cmod.get(scaled, "diagnostics", {}) or {}
        sample_fn = diag.make_sample_fn(model, ham, functionals=dspec.get("functionals"),
                                        renyi_alpha=float(dspec.get("renyi_alpha", 2.0)))
        run = rk4_run(model, state, ham, stepper, sample_fn=sample_fn, keep_states=False)
        if run.aborted:
            print(f"numerical abort at level {level}: {run.abort_reason}", file=sys.stderr)
            return 2
        drifts = {}
        for col in drift_cols:
            vals = [r[col] for r in run.rows if r.get(col) is not None]
            drifts[col] = max(abs(v - vals[0]) for v in vals) if vals else None
        hs.append(grid.dq if args.mode == "both" else stepper.dt)
        table.append(drifts)
        _say(args, f"level {level}: N={grid.Nq} dt={stepper.dt:.3e} " +
             " ".join(f"{c}={drifts[c]:.3e}" for c in drift_cols if drifts[c] is not None))

    fits = {}
    x = np.log(np.array(hs))
    for col in drift_cols:
        ys = [row[col] for row in table]
        if any(y is None for y in ys) or any(y <= 0 for y in ys):
            continue
        y = np.log(np.array(ys))
        A = np.stack([x, np.ones_like(x)], axis=1)
        coef, res, *_ = np.linalg.lstsq(A, y, rcond=None)
        yhat = A @ coef
        ss_res = float(np.sum((y - yhat) ** 2))
        ss_tot = float(np.sum((y - np.mean(y)) ** 2))
        fits[col] = {"order": float(coef[0]), "r2": 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0}

    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "convergence.csv"), "w") as fh:
        fh.write("level,h," + ",".join(drift_cols) + "\n")
        for lvl, (h, row) in enumerate(zip(hs, table)):
            cells = [str(lvl), format(h, ".17g")]
            cells += ["" if row[c] is None else format(row[c], ".17g") for c in drift_cols]
            fh.write(",".join(cells) + "\n")
        fh.write("\n")
        fh.write("diagnostic,order,r2\n")
        for col, fit in fits.items():
            fh.write(f"{col},{fit['order']:.4f},{fit['r2']:.6f}\n")
    for col, fit in fits.items():
        _say(args, f"{col}: observed order {fit['order']:.2f} (R2 {fit['r2']:.4f})")
    return 0


def _snapshotable(state):
    from .dynamics import MeanFieldState
    from .states import HybridDensity

    if isinstance(state, MeanFieldState):
        P = state.D[..., None, None] * state.rho
        return HybridDensity(state.grid, P)
    return state


def _json_default(obj):
    try:
        return float(obj)
    except (TypeError, ValueError):
        return str(obj)


if __name__ == "__main__":
    sys.exit(main())
