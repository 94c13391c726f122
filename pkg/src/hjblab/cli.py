"""Command-line surface: scenario runs, experiments, and the selftest battery.

Every run reads one scenario config, writes its artifacts (CSV fields, JSON
summaries) plus a replayable manifest into the output directory, and exits
nonzero when any declared scientific check fails, so the suite doubles as CI.
"""

from __future__ import annotations

import argparse
import datetime
import json
import os
import sys
import warnings

import numpy as np

from . import __version__
from .coefficients import catalog_names
from .config import ConfigError, RunManifest, load_config
from .experiments import (
    counterexample_report,
    countable_truncation_study,
    dpp_battery,
    mollify_value_sweep,
    verification_check,
)
from .grids import field_to_csv
from .hjb import hjb_residual, policy_iteration, solve_hjb_direct
from .mollify import coefficient_ladder
from .montecarlo import (
    FeedbackRule,
    GridPolicyControl,
    constant_control,
    simulate_cost,
)
from .selftest import run_selftest

SUBCOMMANDS = (
    "solve-hjb", "policy-iter", "verify", "dpp-check", "mollify-sweep",
    "truncation-study", "simulate", "counterexample", "catalog", "selftest",
)


def _now():
    return datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")


def _out_dir(args):
    root = args.out or os.environ.get("HJBLAB_OUT", ".")
    os.makedirs(root, exist_ok=True)
    return root


def _manifest(cfg, args):
    m = RunManifest(
        config_hash=cfg.config_hash(),
        config_echo=cfg.echo,
        seeds={"mc": cfg.mc["seed"], "override": args.seed_override},
    )
    m.started = _now()
    return m


def _finish(manifest, out_dir):
    manifest.finished = _now()
    path = os.path.join(out_dir, "manifest.json")
    manifest.write(path)
    ok = manifest.all_passed
    print(("OK" if ok else "FAILED") + f" -> {path}")
    for c in manifest.checks:
        print(f"  [{'PASS' if c['passed'] else 'FAIL'}] {c['name']} {c['detail']}")
    return 0 if ok else 1


def _write_field(field, path, manifest):
    field_to_csv(field, path)
    manifest.add_artifact(path)


def _build(cfg, args):
    oracle = cfg.build_oracle()
    aset = cfg.build_action_set()
    sim = cfg.build_sim(seed_override=args.seed_override, n_threads=args.threads)
    return oracle, aset, sim


def cmd_solve_hjb(cfg, args, out_dir):
    manifest = _manifest(cfg, args)
    oracle, aset, _ = _build(cfg, args)
    u = solve_hjb_direct(oracle, aset, cfg.grid, scheme=cfg.scheme)
    res = hjb_residual(u, oracle, aset, cfg.grid, scheme=cfg.scheme)
    _write_field(u, os.path.join(out_dir, "value.csv"), manifest)
    manifest.add_check("inner_sweeps_converged", u.meta["converged"],
                       f"{len(u.meta['inner_flagged_steps'])} flagged steps")
    manifest.add_check("hjb_residual", res <= 1e-9 * max(1.0, float(np.max(np.abs(u.values)))) + 1e-9,
                       f"residual {res:.3e}")
    if hasattr(u, "policy"):
        u.policy.to_csv(os.path.join(out_dir, "policy.csv"))
        manifest.add_artifact(os.path.join(out_dir, "policy.csv"))
    return _finish(manifest, out_dir)


def cmd_policy_iter(cfg, args, out_dir):
    manifest = _manifest(cfg, args)
    oracle, aset, _ = _build(cfg, args)
    u, policy, trace = policy_iteration(
        oracle, aset, cfg.grid, scheme=cfg.scheme, tol=cfg.tol,
        max_iters=cfg.max_iters, slack_delta=cfg.slack_delta,
        C_monotone=cfg.C_monotone,
    )
    u_dir = solve_hjb_direct(oracle, aset, cfg.grid, scheme=cfg.scheme)
    sup = float(np.max(np.abs(u.values - u_dir.values)))
    _write_field(u, os.path.join(out_dir, "value.csv"), manifest)
    trace.to_csv(os.path.join(out_dir, "trace.csv"))
    manifest.add_artifact(os.path.join(out_dir, "trace.csv"))
    policy.to_csv(os.path.join(out_dir, "policy.csv"))
    manifest.add_artifact(os.path.join(out_dir, "policy.csv"))
    manifest.add_check("converged", trace.converged, f"{trace.iterations} iterations")
    manifest.add_check("oracle_agreement", sup <= 10 * cfg.tol, f"sup diff {sup:.3e}")
    manifest.add_check("monotone_descent", max(trace.max_pos_diffs[1:], default=0.0) <= 1e-10,
                       f"worst ascent {max(trace.max_pos_diffs[1:], default=0.0):.2e}")
    return _finish(manifest, out_dir)


def cmd_verify(cfg, args, out_dir):
    manifest = _manifest(cfg, args)
    oracle, aset, sim = _build(cfg, args)
    u = solve_hjb_direct(oracle, aset, cfg.grid, scheme=cfg.scheme)
    candidates = [(f"const_{i}", constant_control(aset.action(i)))
                  for i in range(min(len(aset), 5))]
    rep = verification_check(u, oracle, aset, sim, candidates)
    with open(os.path.join(out_dir, "verification.json"), "w") as fh:
        fh.write(_report_json(cfg, rep.to_json()))
    manifest.add_artifact(os.path.join(out_dir, "verification.json"))
    manifest.add_check("verification", rep.passed, rep.summary())
    return _finish(manifest, out_dir)


def cmd_dpp_check(cfg, args, out_dir):
    manifest = _manifest(cfg, args)
    oracle, aset, sim = _build(cfg, args)
    u = solve_hjb_direct(oracle, aset, cfg.grid, scheme=cfg.scheme)
    t_mids = [frac * cfg.grid.T for frac in cfg.experiment["t_mid"]]
    subopt = []
    sub_idx = cfg.experiment.get("suboptimal_action")
    if sub_idx is not None:
        subopt.append((f"const_{sub_idx}", constant_control(aset.action(int(sub_idx)))))
    rep = dpp_battery(u, oracle, GridPolicyControl(u.policy, name="argmin"), sim,
                      t_mids, suboptimal_controls=subopt)
    with open(os.path.join(out_dir, "dpp.json"), "w") as fh:
        fh.write(json.dumps([vars(r) for r in rep.rows], indent=2, sort_keys=True) + "\n")
    manifest.add_artifact(os.path.join(out_dir, "dpp.json"))
    manifest.add_check("dpp", rep.passed, f"{len(rep.rows)} rows")
    return _finish(manifest, out_dir)


def _report_json(cfg, report_text):
    """Embed the full config echo and seeds so the artifact replays itself."""
    return json.dumps(
        {"config": cfg.echo, "seeds": {"mc": cfg.mc["seed"]},
         "report": json.loads(report_text)},
        indent=2, sort_keys=True,
    ) + "\n"


def cmd_mollify_sweep(cfg, args, out_dir):
    manifest = _manifest(cfg, args)
    oracle, aset, _ = _build(cfg, args)
    if not cfg.eps_list:
        raise ConfigError(["mollify.eps: a sweep needs a nonempty ladder"])
    sweep = mollify_value_sweep(oracle, aset, cfg.grid, cfg.eps_list,
                                scheme=cfg.scheme, scenario=cfg.label,
                                store_fields=True)
    with open(os.path.join(out_dir, "sweep.json"), "w") as fh:
        fh.write(_report_json(cfg, sweep.to_json()))
    manifest.add_artifact(os.path.join(out_dir, "sweep.json"))
    for rung in sweep.resolved_rungs():
        path = os.path.join(out_dir, f"gap_eps_{rung.epsilon:g}.csv")
        _write_field(rung.gap_field, path, manifest)
    ladder = coefficient_ladder(oracle, aset.action(0), cfg.grid, cfg.eps_list)
    ladder.to_csv(os.path.join(out_dir, "ladder.csv"))
    manifest.add_artifact(os.path.join(out_dir, "ladder.csv"))
    manifest.add_check("liminf", sweep.liminf_pass, "")
    manifest.add_check("countable_convergence", sweep.countable_pass,
                       f"threshold {sweep.countable_threshold:.4f}")
    return _finish(manifest, out_dir)


def cmd_truncation_study(cfg, args, out_dir):
    manifest = _manifest(cfg, args)
    oracle, _, sim = _build(cfg, args)
    rep = countable_truncation_study(oracle, cfg.family(), cfg.experiment["N_list"],
                                     cfg.grid, sim=sim, eps_list=cfg.eps_list,
                                     scheme=cfg.scheme)
    with open(os.path.join(out_dir, "truncation.json"), "w") as fh:
        fh.write(_report_json(cfg, rep.to_json()))
    manifest.add_artifact(os.path.join(out_dir, "truncation.json"))
    manifest.add_check("value_monotone_in_N", rep.monotone_pass, "")
    manifest.add_check("eps_convergence_per_N", rep.eps_pass, "")
    manifest.add_check("open_loop_costs", rep.open_loop_pass, "")
    return _finish(manifest, out_dir)


def cmd_simulate(cfg, args, out_dir):
    manifest = _manifest(cfg, args)
    oracle, aset, sim = _build(cfg, args)
    spec = cfg.experiment.get("control", {"type": "argmin"})
    kind = spec.get("type", "argmin")
    if kind == "constant":
        control = constant_control(spec.get("value", aset.action(0)))
    elif kind == "diagonal":
        control = FeedbackRule(lambda t, X: X[:, 0], name="a_eq_x")
    elif kind == "argmin":
        u = solve_hjb_direct(oracle, aset, cfg.grid, scheme=cfg.scheme)
        control = GridPolicyControl(u.policy, name="argmin_feedback")
    else:
        raise ConfigError([f"experiment.control.type: unknown control {kind!r}"])
    est = simulate_cost(oracle, control, sim, cfg.grid, scenario=cfg.label)
    with open(os.path.join(out_dir, "estimate.json"), "w") as fh:
        fh.write(est.to_json(scenario=cfg.label, control=control.name) + "\n")
    manifest.add_artifact(os.path.join(out_dir, "estimate.json"))
    manifest.add_check("finite_estimate", np.isfinite(est.mean) and np.isfinite(est.se),
                       f"{est.mean:.6g} +- {est.se:.2g}")
    return _finish(manifest, out_dir)


def cmd_counterexample(cfg, args, out_dir):
    manifest = _manifest(cfg, args)
    sim = cfg.build_sim(seed_override=args.seed_override, n_threads=args.threads)
    rep = counterexample_report(cfg.grid.T, cfg.experiment["x_samples"], cfg.grid,
                                sim=sim, mc_enabled=True)
    with open(os.path.join(out_dir, "counterexample.json"), "w") as fh:
        fh.write(_report_json(cfg, rep.to_json()))
    manifest.add_artifact(os.path.join(out_dir, "counterexample.json"))
    lines = ["s,x,v_exact,v_num,v_lim_exact,v_lim_num,gap_num"]
    for r in rep.rows:
        lines.append(f"{r.s!r},{r.x!r},{r.v_exact!r},{r.v_num!r},"
                     f"{r.v_lim_exact!r},{r.v_lim_num!r},{r.gap_num!r}")
    with open(os.path.join(out_dir, "counterexample_rows.csv"), "w") as fh:
        fh.write("\n".join(lines) + "\n")
    manifest.add_artifact(os.path.join(out_dir, "counterexample_rows.csv"))
    manifest.add_check("strict_gap", rep.gap_pass, f"gap(0,0)={rep.gap_at_origin:.4f}")
    manifest.add_check("mc_crosscheck", rep.mc_pass, "")
    manifest.add_check("boundary_contamination", rep.contamination <= rep.contamination_tol,
                       rep.advice or f"{rep.contamination:.2e}")
    return _finish(manifest, out_dir)


def cmd_catalog(args, out_dir):
    entries = {
        "counterexample": "drift 0 on the diagonal x = a, 1 elsewhere; cost dist(x,0)^2",
        "constant_drift": "b = a c (params: c); closed-form frozen value on boxes",
        "step_drift": "b = a c sign(x1), sign(0) = +1 (params: c)",
        "checkerboard": "b = a alternating sign cells (params: kx, kt)",
        "bang_bang": "b = a with A = {-1, +1}; cost dist(x,0)^2",
        "smooth_baseline": "C-infinity manufactured pair with known solution (params: T, amplitude)",
        "tabulated": "fields loaded from CSV files (see coefficients.tabulated)",
    }
    for name in catalog_names():
        print(f"{name}: {entries.get(name, '')}")
    return 0


def cmd_selftest(cfg, args, out_dir):
    result = run_selftest(out_dir, threads=args.threads)
    for o in result.outcomes:
        print(o.line())
    print(f"total runtime {result.total_runtime:.1f}s")
    return 0 if result.all_passed else 1


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="hjblab",
        description="HJB laboratory for controlled diffusions with measurable drift",
    )
    parser.add_argument("--version", action="version", version=f"hjblab {__version__}")
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("config_positional", nargs="?", default=None,
                        help="scenario config path (alternative to --config)")
    parser.add_argument("--config", default=None, help="scenario config path")
    parser.add_argument("--out", default=None,
                        help="output directory (default $HJBLAB_OUT or cwd)")
    parser.add_argument("--seed-override", type=int, default=None)
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--strict", action="store_true",
                        help="treat warnings as check failures")
    args = parser.parse_args(argv)

    out_dir = _out_dir(args)
    if args.subcommand == "catalog":
        return cmd_catalog(args, out_dir)
    if args.subcommand == "selftest":
        return cmd_selftest(None, args, out_dir)

    path = args.config or args.config_positional
    if not path:
        parser.error(f"{args.subcommand} needs a scenario config (--config PATH)")
    try:
        cfg = load_config(path)
    except ConfigError as e:
        print("config invalid:", file=sys.stderr)
        for v in e.violations:
            print(f"  - {v}", file=sys.stderr)
        return 2

    handlers = {
        "solve-hjb": cmd_solve_hjb,
        "policy-iter": cmd_policy_iter,
        "verify": cmd_verify,
        "dpp-check": cmd_dpp_check,
        "mollify-sweep": cmd_mollify_sweep,
        "truncation-study": cmd_truncation_study,
        "simulate": cmd_simulate,
        "counterexample": cmd_counterexample,
    }
    try:
        if args.strict:
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always")
                code = handlers[args.subcommand](cfg, args, out_dir)
            if caught and code == 0:
                for w in caught:
                    print(f"strict: warning treated as failure: {w.message}",
                          file=sys.stderr)
                return 1
            return code
        return handlers[args.subcommand](cfg, args, out_dir)
    except ConfigError as e:
        print("config invalid for this subcommand:", file=sys.stderr)
        for v in e.violations:
            print(f"  - {v}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
