"""expctl command-line front end.

Exit codes: 0 ok, 1 configuration error, 2 engine error, 3 a --check
comparison failed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import topology
from .bounds import (check_filter_rate, check_final_patch_sum,
                     check_patch_rate_curve, check_q_final)
from .control import ControllerConfig, integrate_controlled
from .design import DesignProblem, design_min_cost, feasible, uniform_rate
from .errors import ConfigError
from .markov import categorical_init_dist, master_equation, monte_carlo
from .meanfield import SubsetSystem, integrate_aggregate
from .passivity import build_Qbar, passivity_index_bound
from .scenario import (BUILTIN_SCENARIOS, builtin_scenario, load_scenario,
                       run_scenario, scenario_initial_state, write_csv,
                       _markov_csv, _meanfield_csv)
from .virus import VirusModel

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_ENGINE = 2
EXIT_CHECK = 3


def _load_net(args):
    return topology.load_edge_list(args.net)


def _load_model(args):
    return VirusModel.from_file(args.model)


def _beta_arg(value, n):
    if os.path.exists(value):
        with open(value) as fh:
            return np.asarray(json.load(fh), dtype=float)
    if "," in value:
        return np.asarray([float(x) for x in value.split(",")], dtype=float)
    return np.full(n, float(value))


def _controller_from_args(args):
    if args.controller == "none":
        return None
    return ControllerConfig(kind=args.controller, alpha=args.alpha,
                            gamma=args.gamma, beta_floor=args.beta_floor)


def _write_json(path, payload):
    def default(obj):
        if isinstance(obj, (np.floating, np.integer)):
            return obj.item()
        if isinstance(obj, np.ndarray):
            return obj.tolist()
        raise TypeError(type(obj).__name__)
    text = json.dumps(payload, indent=2, sort_keys=True, default=default) + "\n"
    if path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", newline="\n") as fh:
            fh.write(text)


def cmd_gen_net(args):
    net = topology.erdos_renyi(args.n, args.p, args.seed)
    topology.save_edge_list(net, args.out)
    print(f"wrote {args.out}: n={net.n} m={net.n_edges}")
    return EXIT_OK


def cmd_sim_markov(args):
    net = _load_net(args)
    model = _load_model(args)
    controller = _controller_from_args(args)
    probs = [float(x) for x in args.init_prob.split(",")] if args.init_prob else \
        [0.0] * model.m
    grid = np.linspace(0.0, args.horizon, args.grid)
    traj = monte_carlo(net, model, probs, _beta_arg(args.beta, net.n),
                       q0=args.q, controller=controller, trials=args.trials,
                       horizon=args.horizon, grid=grid, seed=args.seed)
    _markov_csv(args.out, traj, model.m)
    print(f"wrote {args.out}: final any-virus fraction {traj.frac_any[-1]:.6f}")
    return EXIT_OK


def cmd_sim_mf(args):
    net = _load_net(args)
    model = _load_model(args)
    beta = _beta_arg(args.beta, net.n)
    grid = np.linspace(0.0, args.horizon, args.grid)
    probs = [float(x) for x in args.init_prob.split(",")] if args.init_prob else \
        [0.0] * model.m
    index = model.set_index()
    if args.dynamics == "subset":
        system = SubsetSystem(net, model)
        x0 = np.zeros((net.n, system.nsets))
        for v, p in enumerate(probs):
            x0[:, index[1 << v]] = p
        traj = system.integrate(x0, beta, q=args.q, horizon=args.horizon,
                                h=args.h, grid=grid)
        frac_v = [traj.xbar_v[:, :, v].mean(axis=1) for v in range(model.m)]
        frac_any = traj.any_frac
    else:
        x0 = np.full(net.n, sum(probs))
        grid, agg = integrate_aggregate(net, model, x0, beta, args.horizon,
                                        h=args.h, grid=grid)
        frac_any = agg.mean(axis=1)
        frac_v = [frac_any] * model.m
    header = ["t", "frac_any"] + [f"frac_v{v+1}" for v in range(model.m)] + \
        ["mean_beta", "q"]
    cols = [grid, frac_any] + frac_v + \
        [np.full(len(grid), float(np.mean(beta))), np.full(len(grid), args.q)]
    write_csv(args.out, header, cols)
    print(f"wrote {args.out}: final any-virus fraction {frac_any[-1]:.6f}")
    return EXIT_OK


def cmd_mc_compare(args):
    net = _load_net(args)
    model = _load_model(args)
    beta = _beta_arg(args.beta, net.n)
    probs = [float(x) for x in args.init_prob.split(",")]
    grid = np.linspace(0.0, args.horizon, args.grid)
    mc = monte_carlo(net, model, probs, beta, q0=args.q, trials=args.trials,
                     horizon=args.horizon, grid=grid, seed=args.seed)
    system = SubsetSystem(net, model)
    index = model.set_index()
    x0 = np.zeros((net.n, system.nsets))
    for v, p in enumerate(probs):
        x0[:, index[1 << v]] = p
    mf = system.integrate(x0, beta, q=args.q, horizon=args.horizon, h=args.h,
                          grid=grid)
    margin = mf.any_frac - (mc.frac_any - 3.0 * mc.se_any)
    write_csv(args.out, ["t", "mf_any", "mc_any", "mc_se", "margin"],
              [grid, mf.any_frac, mc.frac_any, mc.se_any, margin])
    ok = bool(margin.min() >= 0.0)
    print(f"wrote {args.out}: min margin {margin.min():.6f} ({'ok' if ok else 'VIOLATED'})")
    if args.check and not ok:
        return EXIT_CHECK
    return EXIT_OK


def cmd_design_static(args):
    net = _load_net(args)
    model = _load_model(args)
    Qbar = build_Qbar(net, model)
    costs = None
    if args.costs and args.costs != "uniform":
        with open(args.costs) as fh:
            costs = np.asarray(json.load(fh), dtype=float)
    problem = DesignProblem(Qbar=Qbar, eps=args.eps, costs=costs, n=net.n)
    result = design_min_cost(problem)
    payload = {
        "eps": args.eps,
        "beta": result.beta,
        "cost": result.cost,
        "margin": result.margin,
        "feasible": result.feasible,
        "converged": result.converged,
        "iterations": result.iterations,
        "uniform_rate": uniform_rate(net, model, args.eps),
    }
    _write_json(args.out, payload)
    print(f"design cost {result.cost:.6f}, margin {result.margin:.3e}, "
          f"feasible={result.feasible}")
    return EXIT_OK if result.feasible else EXIT_ENGINE


def cmd_passivity(args):
    net = _load_net(args)
    model = _load_model(args)
    rho, per_host = passivity_index_bound(net, model)
    from .linalg import eig_sym
    payload = {
        "rho_bound": rho,
        "mu1_Qbar": float(eig_sym(build_Qbar(net, model))[-1]),
        "per_host_mu1": per_host,
    }
    _write_json(args.out, payload)
    print(f"rho bound {rho:.6f}")
    return EXIT_OK


def cmd_adaptive_run(args):
    net = _load_net(args)
    model = _load_model(args)
    controller = _controller_from_args(args)
    if controller is None:
        print("adaptive-run needs --controller other than none", file=sys.stderr)
        return EXIT_CONFIG
    probs = [float(x) for x in args.init_prob.split(",")]
    index = model.set_index()
    system = SubsetSystem(net, model)
    dynamics = args.dynamics
    x0 = np.zeros((net.n, system.nsets))
    for v, p in enumerate(probs):
        x0[:, index[1 << v]] = p
    grid = np.linspace(0.0, args.horizon, args.grid)
    traj = integrate_controlled(net, model, x0, _beta_arg(args.beta0, net.n),
                                controller, q0=args.q0, dynamics=dynamics,
                                horizon=args.horizon, h=args.h, grid=grid)
    _meanfield_csv(args.out, traj, model)
    print(f"wrote {args.out}: final max xbar {traj.xbar[-1].max():.3e}, "
          f"final mean beta {traj.mean_beta[-1]:.4f}, final q {traj.q[-1]:.4f}")
    return EXIT_OK


def cmd_bounds_report(args):
    scenario = _scenario_arg(args.scenario)
    net = scenario.build_network()
    model = scenario.model
    x0, _, beta0 = scenario_initial_state(scenario, net, model)
    controller = scenario.controller
    reports = []
    if controller is None:
        print("scenario has no controller; nothing to bound", file=sys.stderr)
        return EXIT_CONFIG
    traj = integrate_controlled(net, model, x0, beta0, controller,
                                q0=scenario.q0, dynamics=scenario.dynamics,
                                horizon=scenario.horizon, h=scenario.h,
                                grid=scenario.grid())
    if controller.kind in ("monotone", "joint"):
        reports.append(check_patch_rate_curve(traj, net, model, controller.alpha))
        reports.extend(check_final_patch_sum(traj, net, model, controller.alpha))
    if controller.kind in ("filter", "joint"):
        reports.append(check_filter_rate(traj, net, model, controller.gamma, beta0))
        reports.append(check_q_final(traj, net, model, controller.gamma, beta0))
    if controller.kind == "nonmonotone":
        from .control import nonmonotone_fixed_point
        x_star, _ = nonmonotone_fixed_point(controller.alpha, controller.gamma,
                                            model.lam(0, 0), 1)
        err = float(np.abs(traj.xbar[-1][net.degrees > 0] - x_star).max())
        reports.append({"name": "nonmonotone_fixed_point", "bound": x_star,
                        "observed": err, "satisfied": bool(err <= 0.02),
                        "slack": 0.02 - err, "approximate": False,
                        "note": "max |x_i(T) - x*| over connected hosts"})
    payload = [r if isinstance(r, dict) else r.to_dict() for r in reports]
    _write_json(args.out, payload)
    bad = [r["name"] for r in payload
           if not r["satisfied"] and not r["approximate"]]
    print(f"{len(payload)} bound reports, exact violations: {bad or 'none'}")
    if args.check and bad:
        return EXIT_CHECK
    return EXIT_OK


def cmd_oracle_compare(args):
    net = _load_net(args)
    model = _load_model(args)
    beta = _beta_arg(args.beta, net.n)
    probs = [float(x) for x in args.init_prob.split(",")]
    grid = np.linspace(0.0, args.horizon, args.grid)
    sets = model.realizable_sets()
    index = model.set_index()
    init_dist = categorical_init_dist(
        net.n, len(sets), probs, [index[1 << v] for v in range(model.m)])
    _, exact = master_equation(net, model, init_dist, beta, q=args.q,
                               horizon=args.horizon, grid=grid, h=args.h)
    mc = monte_carlo(net, model, probs, beta, q0=args.q, trials=args.trials,
                     horizon=args.horizon, grid=grid, seed=args.seed,
                     collect_host_sets=True)
    worst = 0.0
    for i in range(net.n):
        for k in range(len(sets) + 1):
            p_exact = exact[:, i, k]
            p_mc = mc.host_set_mean[:, i, k]
            se = np.sqrt(np.maximum(p_exact * (1 - p_exact), 0.0) / args.trials)
            dev = np.abs(p_mc - p_exact) - 3.0 * np.maximum(se, 1e-12)
            worst = max(worst, float(dev.max()))
    payload = {"max_excess_over_3se": worst, "ok": worst <= 0.0,
               "trials": args.trials, "grid_points": len(grid)}
    _write_json(args.out, payload)
    print(f"max excess over 3 standard errors: {worst:.3e}")
    if args.check and worst > 0.0:
        return EXIT_CHECK
    return EXIT_OK


def _scenario_arg(value):
    if value in BUILTIN_SCENARIOS:
        return builtin_scenario(value)
    return load_scenario(value)


def cmd_run_scenario(args):
    if args.list:
        for name in sorted(BUILTIN_SCENARIOS):
            print(name)
        return EXIT_OK
    if not args.scenario:
        raise ConfigError("need --scenario <name or file> (or --list)")
    scenario = _scenario_arg(args.scenario)
    report = run_scenario(scenario, out_dir=args.out_dir)
    for path in report["outputs"]:
        print(f"wrote {path}")
    ok = report["checks"].get("engines_ok", True)
    if args.check and not ok:
        return EXIT_CHECK
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="expctl",
        description="Multi-virus propagation simulation and passivity-based "
                    "defense design")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-net", help="sample a G(n,p) network to an edge list")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_net)

    def common_sim(p, beta_flag="--beta"):
        p.add_argument("--net", required=True)
        p.add_argument("--model", required=True)
        p.add_argument(beta_flag, default="0", help="scalar, comma list, or JSON file")
        p.add_argument("--horizon", type=float, default=1.0)
        p.add_argument("--grid", type=int, default=51)
        p.add_argument("--out", required=True)

    p = sub.add_parser("sim-markov", help="Monte-Carlo Gillespie simulation")
    common_sim(p)
    p.add_argument("--q", type=float, default=0.0)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--gamma", type=float, default=0.0)
    p.add_argument("--beta-floor", type=float, default=1e-3)
    p.add_argument("--controller", default="none",
                   choices=["none", "monotone", "nonmonotone", "filter", "joint"])
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--init-prob", default="", help="per-virus comma list")
    p.set_defaults(func=cmd_sim_markov)

    p = sub.add_parser("sim-mf", help="mean-field integration, static defenses")
    common_sim(p)
    p.add_argument("--q", type=float, default=0.0)
    p.add_argument("--dynamics", default="subset", choices=["subset", "aggregate"])
    p.add_argument("--h", type=float, default=1e-3)
    p.add_argument("--init-prob", default="", help="per-virus comma list")
    p.set_defaults(func=cmd_sim_mf)

    p = sub.add_parser("mc-compare",
                       help="mean-field curve against Monte-Carlo minus 3 SE")
    common_sim(p)
    p.add_argument("--q", type=float, default=0.0)
    p.add_argument("--h", type=float, default=1e-3)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--init-prob", required=True)
    p.add_argument("--check", action="store_true")
    p.set_defaults(func=cmd_mc_compare)

    p = sub.add_parser("design-static", help="minimum-cost static patch rates")
    p.add_argument("--net", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--costs", default="uniform", help="'uniform' or JSON file")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_design_static)

    p = sub.add_parser("passivity", help="passivity-index bound and gain spectra")
    p.add_argument("--net", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_passivity)

    p = sub.add_parser("adaptive-run", help="controller co-simulation (ODE form)")
    p.add_argument("--net", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--controller", required=True,
                   choices=["monotone", "nonmonotone", "filter", "joint"])
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--gamma", type=float, default=0.0)
    p.add_argument("--beta0", default="1.0")
    p.add_argument("--q0", type=float, default=0.0)
    p.add_argument("--beta-floor", type=float, default=1e-3)
    p.add_argument("--dynamics", default="subset", choices=["subset", "aggregate"])
    p.add_argument("--horizon", type=float, default=10.0)
    p.add_argument("--h", type=float, default=1e-3)
    p.add_argument("--grid", type=int, default=201)
    p.add_argument("--init-prob", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_adaptive_run)

    p = sub.add_parser("bounds-report", help="closed-form bounds vs a scenario run")
    p.add_argument("--scenario", required=True,
                   help="built-in name or scenario file")
    p.add_argument("--out", required=True)
    p.add_argument("--check", action="store_true")
    p.set_defaults(func=cmd_bounds_report)

    p = sub.add_parser("oracle-compare",
                       help="Monte-Carlo marginals against the exact joint chain")
    common_sim(p)
    p.add_argument("--q", type=float, default=0.0)
    p.add_argument("--h", type=float, default=1e-3)
    p.add_argument("--trials", type=int, default=10000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--init-prob", required=True)
    p.add_argument("--check", action="store_true")
    p.set_defaults(func=cmd_oracle_compare)

    p = sub.add_parser("run-scenario", help="run a scenario (built-in or file)")
    p.add_argument("--scenario", default="")
    p.add_argument("--out-dir", default=".")
    p.add_argument("--check", action="store_true")
    p.add_argument("--list", action="store_true", help="list built-in scenarios")
    p.set_defaults(func=cmd_run_scenario)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # engine failures map to a dedicated exit code
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ENGINE


if __name__ == "__main__":
    sys.exit(main())
