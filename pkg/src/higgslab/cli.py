"""Command-line front end: ``higgslab {flow,eigen,verify,resume} --config PATH``.

Exit codes: 0 success, 1 verification failure, 2 configuration error,
3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from . import bundle, flow, functionals, io, spectral
from .config import ConfigError, RunConfig, load_config
from .geometry import TorusGeometry

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("higgslab")


class _Console:
    def __init__(self, quiet: bool):
        self.quiet = quiet

    def __call__(self, *parts):
        if not self.quiet:
            print(*parts, flush=True)


def build_geometry(cfg: RunConfig) -> TorusGeometry:
    g = cfg.geometry
    return TorusGeometry(g.n, tuple(g.sides), tuple(g.grid))


def build_pair(cfg: RunConfig, geom: TorusGeometry):
    b = cfg.bundle
    if b.model == "zero":
        return bundle.Connection.zero(geom, b.rank), bundle.HiggsField.zero(geom, b.rank)
    return bundle.random_higgs_pair(geom, b.seed, rank=b.rank, roughness=b.roughness,
                                    amplitude=b.amplitude, gauge_strength=b.gauge_strength,
                                    model=b.model)


def flow_options(cfg: RunConfig) -> flow.FlowOptions:
    f = cfg.flow
    return flow.FlowOptions(dt0=f.dt0, t_max=f.t_max, target_residual=f.target_residual,
                            descent_rtol=f.descent_rtol, drift_budget=f.drift_budget,
                            dt_max=f.dt_max, energy_step=f.energy_step, adaptive=f.adaptive,
                            store_every=0, init_tol=f.init_tol)


def eigen_options(cfg: RunConfig) -> spectral.EigenOptions:
    e = cfg.eigen
    return spectral.EigenOptions(penalties=tuple(float(p) for p in e.penalties), max_iter=e.max_iter,
                                 gtol=e.tol, seed=e.seed, exclude_constants=e.exclude_constants,
                                 traceless=e.traceless)


def _out_dir(cfg: RunConfig, args) -> Path:
    out = Path(args.out or cfg.output.dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"output directory {out} is not writable ({exc.strerror})") from None
    return out


# -- subcommands ----------------------------------------------------------------

def _run_flow(cfg, args, say, state0: flow.HiggsState, append: bool) -> int:
    out = _out_dir(cfg, args)
    ckpt = out / cfg.output.checkpoint
    every = cfg.flow.checkpoint_every
    latest = {"state": state0}

    def on_step(state, count):
        latest["state"] = state
        if every and count % every == 0:
            io.write_checkpoint(ckpt, state)

    with io.DiagnosticsWriter(out / cfg.output.diagnostics, cfg.output.emit_every, append) as sink:
        try:
            res = flow.run_flow(state0.A, state0.theta, flow_options(cfg), emit=sink, t0=state0.t,
                                check_initial=not append, on_step=on_step)
        except flow.StepFailure:
            # keep the last good state so the run can be inspected or resumed
            io.write_checkpoint(ckpt, latest["state"])
            raise
    io.write_checkpoint(ckpt, res.final)
    last = res.records[-1]
    say(f"flow finished at t={last.t:.6g}: ymh={last.ymh:.6e} sup|Theta|={last.theta_sup_residual:.3e} "
        f"({len(res.records)} records, converged={res.converged})")
    return EXIT_OK


def cmd_flow(cfg: RunConfig, args, say) -> int:
    geom = build_geometry(cfg)
    if args.checkpoint:
        state0 = io.read_checkpoint(args.checkpoint)
        state0 = flow.HiggsState(state0.A, state0.theta, 0.0)
    else:
        A, th = build_pair(cfg, geom)
        state0 = flow.HiggsState(A, th, 0.0)
    return _run_flow(cfg, args, say, state0, append=False)


def cmd_resume(cfg: RunConfig, args, say) -> int:
    if not args.checkpoint:
        raise ConfigError("resume requires --checkpoint PATH")
    state0 = io.read_checkpoint(args.checkpoint)
    say(f"resuming from t={state0.t:.6g}")
    return _run_flow(cfg, args, say, state0, append=True)


def cmd_eigen(cfg: RunConfig, args, say) -> int:
    out = _out_dir(cfg, args)
    opts = eigen_options(cfg)
    if args.checkpoint:
        A = io.read_checkpoint(args.checkpoint).A
    else:
        A = bundle.Connection.zero(build_geometry(cfg), cfg.bundle.rank)
    res = spectral.least_eigenvalue(A, opts)
    payload = res.as_dict()
    status = EXIT_OK
    e = cfg.eigen
    if e.sweep_amplitudes and e.sweep_seeds:
        geom = A.geometry
        cal_seeds = e.calibration_seeds or [s + 10_000 for s in e.sweep_seeds[:3]]
        amp = max(e.sweep_amplitudes)
        c = spectral.calibrate_continuity_constant(
            A, [spectral.random_perturbation(geom, s, A.rank, amp) for s in cal_seeds],
            safety=e.safety, options=opts)
        rows = []
        for seed in e.sweep_seeds:
            for amp in e.sweep_amplitudes:
                a = spectral.random_perturbation(geom, seed, A.rank, amp)
                rep = spectral.eigen_continuity_check(A, a, c, opts, lambda0=res.lambda_hat)
                rows.append({"seed": seed, "a_norm": rep.a_norm,
                             "delta_lambda": rep.lambda1 - rep.lambda0, "passed": rep.passed})
                say(f"seed {seed:4d}  |a| = {rep.a_norm:.3e}  dlambda = {rep.lambda1 - rep.lambda0:+.3e}  "
                    f"{'ok' if rep.passed else 'VIOLATED'}")
        payload["continuity"] = {"c": c, "rows": rows}
        if not all(r["passed"] for r in rows):
            status = EXIT_VERIFY
    (out / cfg.output.eigen).write_text(json.dumps(payload) + "\n", encoding="utf-8")
    say(f"lambda_hat = {res.lambda_hat:.6e}  wedge feasibility = {res.wedge_feasibility:.2e}")
    if not res.converged:
        say("warning: eigen solver hit the iteration limit; best estimate reported")
    return status


def _verify_data(cfg, args, geom):
    if args.checkpoint:
        st = io.read_checkpoint(args.checkpoint)
        return [(st.A, st.theta)]
    b = cfg.bundle
    pairs = []
    for k in range(cfg.verify.samples):
        if b.model == "zero":
            pairs.append(build_pair(cfg, geom))
        else:
            pairs.append(bundle.random_higgs_pair(geom, b.seed + k, rank=b.rank, roughness=b.roughness,
                                                  amplitude=b.amplitude, gauge_strength=b.gauge_strength,
                                                  model=b.model))
    return pairs


def _corrupt(theta, geom, seed):
    rng = np.random.default_rng(seed)
    bump = bundle.random_band_limited(geom, rng, (theta.rank, theta.rank), 2)
    comps = theta.comps.copy()
    comps[0] = comps[0] + 0.1 * bump
    return bundle.HiggsField(geom, comps)


def cmd_verify(cfg: RunConfig, args, say) -> int:
    v = cfg.verify
    geom = build_geometry(cfg)
    results = []   # (name, value, threshold)
    pairs = _verify_data(cfg, args, geom)
    if v.corrupt_theta:
        pairs = [(A, _corrupt(th, geom, cfg.bundle.seed)) for A, th in pairs]
    for check in v.checks:
        if check == "weitzenbock":
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always")
                worst = max(spectral.weitzenbock_check(A, th).residual for A, th in pairs)
            for w in caught:
                say(f"warning: {w.message}")
            results.append(("weitzenbock", worst, v.weitzenbock_tol))
        elif check == "energy":
            worst = max(abs(functionals.energy_report(A, th).identity_gap) for A, th in pairs)
            results.append(("energy_identity", worst, v.energy_tol))
        elif check == "chern":
            worst = 0.0
            for A, _ in pairs:
                c1, c2 = functionals.chern_numbers(A)
                worst = max(worst, abs(c1), abs(c2))
            results.append(("chern_weil", worst, v.chern_tol))
        elif check == "cutoff":
            Ns = sorted(v.cutoff_N)
            table = [(N, *spectral.cutoff_norms(N, v.cutoff_R)) for N in Ns]
            for N, l4, h2 in table:
                say(f"  cutoff N={N:<4g} |grad beta|_L4={l4:.6f} |Hess beta|_L2={h2:.6f} "
                    f"sqrt(log N)*sum={np.sqrt(np.log(N)) * (l4 + h2):.6f}")
            sums = [l4 + h2 for _, l4, h2 in table]
            scaled = [np.sqrt(np.log(N)) * s for (N, _, _), s in zip(table, sums)]
            monotone = all(b < a for a, b in zip(sums, sums[1:]))
            spread = max(scaled) / min(scaled)
            results.append(("cutoff_spread", spread, 2.0))
            results.append(("cutoff_monotone", 0.0 if monotone else 1.0, 0.5))
        elif check == "cross_check":
            worst = 0.0
            n = max(int(round(v.cross_check_t / v.cross_check_dt)), 1)
            dt = v.cross_check_t / n
            for A, th in pairs:
                s, ms = flow.HiggsState(A, th), flow.MetricState.identity(A, th)
                for _ in range(n):
                    s = flow.rk4_step(s, dt)
                    ms = flow.metric_flow_step(ms, dt)
                ms = flow.MetricState(ms.h, ms.A0, ms.theta0, s.t)
                worst = max(worst, flow.cross_check_residuals(s, ms).sup_gap)
            results.append(("cross_check", worst, v.cross_check_tol))
    ok = True
    for name, value, thr in results:
        passed = value < thr
        ok &= passed
        say(f"{'PASS' if passed else 'FAIL'} {name}: {value:.3e} (threshold {thr:.1e})")
    return EXIT_OK if ok else EXIT_VERIFY


COMMANDS = {"flow": cmd_flow, "eigen": cmd_eigen, "verify": cmd_verify, "resume": cmd_resume}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="higgslab", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, metavar="PATH")
    p.add_argument("--checkpoint", metavar="PATH")
    p.add_argument("--out", metavar="DIR")
    p.add_argument("--seed", type=int, metavar="U64")
    p.add_argument("--quiet", action="store_true")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    say = _Console(args.quiet)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s")
    try:
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.bundle.seed = args.seed
            cfg.eigen.seed = args.seed
        return COMMANDS[args.command](cfg, args, say)
    except (ConfigError, io.CheckpointError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (flow.StepFailure, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        # invalid initial data and similar input problems
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
