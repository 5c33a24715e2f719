"""Scenario configuration, built-in experiment definitions, and orchestration.

A scenario bundles a network source, a virus model, an initial-infection
law, a defense (static rates and/or an adaptive controller), and run
parameters. Parsing is strict: unknown keys are rejected with their path.
Outputs (CSV trajectories plus a JSON report) are byte-identical for a
fixed (scenario, seed).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import topology
from .control import ControllerConfig, integrate_controlled
from .errors import ConfigError
from .markov import monte_carlo
from .meanfield import SubsetSystem, integrate_aggregate
from .virus import VirusModel

_SCENARIO_KEYS = {
    "name", "network", "model", "init", "defense", "horizon", "h",
    "grid_points", "seed", "trials", "engine", "dynamics", "sweep",
}
_NETWORK_KEYS = {"kind", "n", "p", "seed", "path", "pairs"}
_INIT_KEYS = {"kind", "probs", "low", "high"}
_DEFENSE_KEYS = {"beta", "q0", "controller"}
_CONTROLLER_KEYS = {"kind", "alpha", "gamma", "beta_floor", "q_cap"}
_SWEEP_KEYS = {"param", "values"}


@dataclass(frozen=True)
class Scenario:
    network: dict
    model: VirusModel
    init: dict
    beta: object            # scalar, per-host list, or {"kind": "uniform_random", ...}
    q0: float = 0.0
    controller: ControllerConfig = None
    horizon: float = 1.0
    h: float = 1e-3
    grid_points: int = 201
    seed: int = 0
    trials: int = 100
    engine: str = "both"    # markov | meanfield | both
    dynamics: str = "subset"
    sweep: dict = None
    name: str = ""

    def grid(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon, self.grid_points)

    def build_network(self):
        return _build_network(self.network)

    def to_dict(self) -> dict:
        d = {
            "name": self.name,
            "network": self.network,
            "model": self.model.to_dict(),
            "init": self.init,
            "defense": {"beta": self.beta, "q0": self.q0},
            "horizon": self.horizon,
            "h": self.h,
            "grid_points": self.grid_points,
            "seed": self.seed,
            "trials": self.trials,
            "engine": self.engine,
            "dynamics": self.dynamics,
        }
        if self.controller is not None:
            d["defense"]["controller"] = {
                "kind": self.controller.kind, "alpha": self.controller.alpha,
                "gamma": self.controller.gamma,
                "beta_floor": self.controller.beta_floor,
                "q_cap": self.controller.q_cap,
            }
        if self.sweep:
            d["sweep"] = self.sweep
        return d


def _require(cond, message, fieldname):
    if not cond:
        raise ConfigError(message, field=fieldname)


def _check_keys(d, allowed, path):
    for key in d:
        if key not in allowed:
            raise ConfigError("unknown key", field=f"{path}.{key}")


def _build_network(spec):
    kind = spec.get("kind")
    if kind == "erdos_renyi":
        return topology.erdos_renyi(spec["n"], spec["p"], spec["seed"])
    if kind == "edge_list":
        return topology.load_edge_list(spec["path"])
    if kind == "edges":
        return topology.from_edge_list(spec["n"], [tuple(p) for p in spec["pairs"]])
    raise ConfigError(f"unknown network kind {kind!r}", field="network.kind")


def parse_scenario(payload, base_dir=".") -> Scenario:
    """Validate a scenario dict (or JSON text) into a Scenario."""
    if isinstance(payload, str):
        try:
            payload = json.loads(payload)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"line {exc.lineno}: {exc.msg}") from exc
    _check_keys(payload, _SCENARIO_KEYS, "scenario")
    for key in ("network", "model", "init"):
        _require(key in payload, "missing required key", f"scenario.{key}")

    net_spec = dict(payload["network"])
    _check_keys(net_spec, _NETWORK_KEYS, "network")
    if net_spec.get("kind") == "erdos_renyi":
        for key in ("n", "p", "seed"):
            _require(key in net_spec, "missing required key", f"network.{key}")
        _require(0.0 <= net_spec["p"] <= 1.0, "edge probability outside [0,1]",
                 "network.p")
    if net_spec.get("kind") == "edge_list":
        net_spec["path"] = os.path.join(base_dir, net_spec["path"])

    model_spec = payload["model"]
    if isinstance(model_spec, dict) and set(model_spec) == {"path"}:
        model = VirusModel.from_file(os.path.join(base_dir, model_spec["path"]))
    else:
        model = VirusModel.from_dict(model_spec)

    init = dict(payload["init"])
    _check_keys(init, _INIT_KEYS, "init")
    kind = init.get("kind")
    if kind == "per_virus":
        probs = init.get("probs")
        _require(isinstance(probs, list) and len(probs) == model.m,
                 "need one probability per virus", "init.probs")
        _require(all(0.0 <= p <= 1.0 for p in probs) and sum(probs) <= 1.0 + 1e-12,
                 "probabilities must lie in [0,1] and sum to at most 1",
                 "init.probs")
    elif kind == "uniform_random":
        _require(model.m == 1, "uniform_random init is single-virus", "init.kind")
        _require(0.0 <= init.get("low", 0.0) <= init.get("high", 1.0) <= 1.0,
                 "need 0 <= low <= high <= 1", "init")
    else:
        raise ConfigError(f"unknown init kind {kind!r}", field="init.kind")

    defense = dict(payload.get("defense", {"beta": 0.0}))
    _check_keys(defense, _DEFENSE_KEYS, "defense")
    beta = defense.get("beta", 0.0)
    if isinstance(beta, dict):
        _check_keys(beta, {"kind", "low", "high"}, "defense.beta")
        _require(beta.get("kind") == "uniform_random", "unknown beta spec",
                 "defense.beta.kind")
    q0 = float(defense.get("q0", 0.0))
    _require(0.0 <= q0 <= 1.0, "q0 outside [0,1]", "defense.q0")
    controller = None
    if "controller" in defense and defense["controller"] is not None:
        ctl = dict(defense["controller"])
        _check_keys(ctl, _CONTROLLER_KEYS, "defense.controller")
        if ctl.get("kind", "none") != "none":
            try:
                controller = ControllerConfig(**ctl)
            except (TypeError, ValueError) as exc:
                raise ConfigError(str(exc), field="defense.controller") from exc

    sweep = payload.get("sweep")
    if sweep is not None:
        sweep = dict(sweep)
        _check_keys(sweep, _SWEEP_KEYS, "sweep")
        _require(sweep.get("param") in ("alpha", "gamma"),
                 "sweep parameter must be alpha or gamma", "sweep.param")
        _require(controller is not None, "sweep needs a controller", "sweep")

    horizon = float(payload.get("horizon", 1.0))
    _require(horizon > 0, "horizon must be positive", "horizon")
    h = float(payload.get("h", 1e-3))
    _require(h > 0, "step must be positive", "h")
    grid_points = int(payload.get("grid_points", 201))
    _require(grid_points >= 2, "need at least two grid points", "grid_points")
    trials = int(payload.get("trials", 100))
    _require(trials >= 1, "need at least one trial", "trials")
    engine = payload.get("engine", "both")
    _require(engine in ("markov", "meanfield", "both"), "unknown engine", "engine")
    dynamics = payload.get("dynamics", "subset")
    _require(dynamics in ("subset", "aggregate"), "unknown dynamics", "dynamics")

    return Scenario(
        network=net_spec, model=model, init=init, beta=beta, q0=q0,
        controller=controller, horizon=horizon, h=h, grid_points=grid_points,
        seed=int(payload.get("seed", 0)), trials=trials, engine=engine,
        dynamics=dynamics, sweep=sweep, name=payload.get("name", ""),
    )


def load_scenario(path) -> Scenario:
    with open(path) as fh:
        text = fh.read()
    return parse_scenario(text, base_dir=os.path.dirname(os.path.abspath(path)))


def serialize_scenario(scenario: Scenario) -> str:
    return json.dumps(scenario.to_dict(), indent=2, sort_keys=True) + "\n"


# --- initial states ----------------------------------------------------

def _init_rng(seed):
    # spawn_key (0,) is reserved for scenario-level draws; trials use (1+k,)
    return np.random.Generator(np.random.PCG64(
        np.random.SeedSequence(entropy=seed, spawn_key=(0,))))


def scenario_initial_state(scenario, net, model):
    """(x0 for the mean-field engines, init spec for monte_carlo, beta0 array)."""
    rng = _init_rng(scenario.seed)
    sets = model.realizable_sets()
    index = model.set_index()
    nsets = len(sets)
    if scenario.init["kind"] == "per_virus":
        probs = np.asarray(scenario.init["probs"], dtype=float)
        x0 = np.zeros((net.n, nsets))
        for v, p in enumerate(probs):
            x0[:, index[1 << v]] = p
        mc_init = probs
    else:
        low = scenario.init.get("low", 0.0)
        high = scenario.init.get("high", 1.0)
        per_host = low + (high - low) * rng.random(net.n)
        x0 = per_host[:, None].copy()
        mc_init = _BernoulliInit(per_host)

    beta = scenario.beta
    if isinstance(beta, dict):
        lo, hi = float(beta["low"]), float(beta["high"])
        beta0 = lo + (hi - lo) * rng.random(net.n)
    else:
        beta0 = np.broadcast_to(np.asarray(beta, dtype=float), (net.n,)).copy()
    return x0, mc_init, beta0


class _BernoulliInit:
    """Per-host single-virus Bernoulli initial infection."""

    def __init__(self, probs):
        self.probs = np.asarray(probs, dtype=float)

    def __call__(self, rng):
        return (rng.random(len(self.probs)) < self.probs).astype(np.int32)


# --- output helpers ----------------------------------------------------

def write_csv(path, header, columns):
    """Full-precision CSV; repr round-trips every 64-bit float."""
    cols = [np.asarray(c) for c in columns]
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in zip(*cols):
            fh.write(",".join(repr(float(x)) for x in row) + "\n")


def _markov_csv(path, traj, m):
    header = ["t", "mean_frac_any", "se_any"] + \
        [f"mean_frac_v{v+1}" for v in range(m)] + ["mean_beta", "mean_q"]
    cols = [traj.t, traj.frac_any, traj.se_any] + \
        [traj.frac_v[:, v] for v in range(m)] + [traj.mean_beta, traj.mean_q]
    write_csv(path, header, cols)


def _meanfield_csv(path, traj, model):
    header = ["t", "frac_any"] + [f"frac_v{v+1}" for v in range(model.m)] + \
        ["mean_beta", "q"]
    frac_any = traj.xbar.mean(axis=1)
    frac_v = [traj.xbar_v[:, :, v].mean(axis=1) for v in range(model.m)]
    cols = [traj.t, frac_any] + frac_v + [traj.mean_beta, traj.q]
    write_csv(path, header, cols)


# --- execution ---------------------------------------------------------

def run_scenario(scenario: Scenario, out_dir=".") -> dict:
    """Run every engine the scenario asks for; write CSVs and a JSON report.

    Returns the report dict. Checks recorded in the report compare engines
    (mean-field above Monte-Carlo within three standard errors, aggregate
    dominating the subset sum) and summarize controller outcomes.
    """
    os.makedirs(out_dir, exist_ok=True)
    net = scenario.build_network()
    model = scenario.model
    base = scenario.name or "scenario"
    report = {
        "scenario": scenario.to_dict(),
        "network": {"n": net.n, "edges": net.n_edges,
                    "d_min": int(net.degrees.min()), "d_max": int(net.degrees.max())},
        "outputs": [],
        "checks": {},
        "runs": [],
    }

    sweep_values = [None]
    if scenario.sweep:
        sweep_values = scenario.sweep["values"]

    for value in sweep_values:
        controller = scenario.controller
        label = base
        if value is not None:
            label = f"{base}_{scenario.sweep['param']}{value:g}"
            kwargs = {scenario.sweep["param"]: value}
            controller = ControllerConfig(
                kind=controller.kind,
                alpha=kwargs.get("alpha", controller.alpha),
                gamma=kwargs.get("gamma", controller.gamma),
                beta_floor=controller.beta_floor, q_cap=controller.q_cap)
        run = _run_single(scenario, net, model, controller, label, out_dir)
        report["outputs"].extend(run.pop("outputs"))
        report["runs"].append(run)

    _cross_run_checks(report, scenario)
    report_path = os.path.join(out_dir, f"{base}_report.json")
    with open(report_path, "w", newline="\n") as fh:
        json.dump(report, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")
    report["outputs"].append(report_path)
    return report


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not serializable: {type(obj)}")


def _run_single(scenario, net, model, controller, label, out_dir):
    x0, mc_init, beta0 = scenario_initial_state(scenario, net, model)
    grid = scenario.grid()
    run = {"label": label, "outputs": [], "checks": {}}
    mc = mf = None

    if scenario.engine in ("markov", "both"):
        mc = monte_carlo(net, model, mc_init, beta0, q0=scenario.q0,
                         controller=controller, trials=scenario.trials,
                         horizon=scenario.horizon, grid=grid,
                         seed=scenario.seed)
        path = os.path.join(out_dir, f"{label}_markov.csv")
        _markov_csv(path, mc, model.m)
        run["outputs"].append(path)

    if scenario.engine in ("meanfield", "both"):
        config = controller or ControllerConfig(kind="none")
        mf = integrate_controlled(
            net, model, x0, beta0, config, q0=scenario.q0,
            dynamics=scenario.dynamics, horizon=scenario.horizon,
            h=scenario.h, grid=grid)
        path = os.path.join(out_dir, f"{label}_meanfield.csv")
        _meanfield_csv(path, mf, model)
        run["outputs"].append(path)
        run["final_max_xbar"] = float(mf.xbar[-1].max())
        run["final_mean_beta"] = float(mf.mean_beta[-1])
        run["final_q"] = float(mf.q[-1])
        below = np.nonzero(mf.xbar.max(axis=1) < 1e-3)[0]
        run["t_below_1e-3"] = float(mf.t[below[0]]) if below.size else None

    if mc is not None and mf is not None:
        margin = mf.xbar.mean(axis=1) - (mc.frac_any - 3.0 * mc.se_any)
        run["checks"]["meanfield_above_mc"] = {
            "min_margin": float(margin.min()),
            "ok": bool(margin.min() >= 0.0),
        }

    if scenario.engine in ("meanfield", "both") and scenario.dynamics == "subset":
        # aggregate upper bound from the same initial any-virus profile
        _, agg = integrate_aggregate(net, model, x0.sum(axis=1), beta0,
                                     scenario.horizon, h=scenario.h, grid=grid)
        gap = agg - mf.xbar
        run["checks"]["aggregate_dominates_subset"] = {
            "min_gap": float(gap.min()),
            "ok": bool(gap.min() >= -1e-6),
        }
    return run


def _cross_run_checks(report, scenario):
    runs = report["runs"]
    checks = report["checks"]
    checks["engines_ok"] = all(
        all(c["ok"] for c in run["checks"].values()) for run in runs)
    if scenario.sweep and len(runs) >= 2 and scenario.engine != "markov":
        if scenario.sweep["param"] == "alpha":
            times = [run.get("t_below_1e-3") for run in runs]
            betas = [run.get("final_mean_beta") for run in runs]
            ordered_t = all(
                t2 is not None and (t1 is None or t2 <= t1)
                for t1, t2 in zip(times, times[1:]))
            checks["alpha_sweep"] = {
                "t_below": times, "final_mean_beta": betas,
                "larger_alpha_no_later": ordered_t,
                "larger_alpha_higher_beta": all(
                    b2 > b1 for b1, b2 in zip(betas, betas[1:])),
            }
        else:
            qs = [run.get("final_q") for run in runs]
            checks["gamma_sweep"] = {
                "final_q": qs,
                "smaller_gamma_smaller_q": all(
                    q1 < q2 for q1, q2 in zip(qs, qs[1:])),
            }


# --- built-in experiment suite -----------------------------------------

_ER100 = {"kind": "erdos_renyi", "n": 100, "p": 0.2, "seed": 13}   # 990 edges
_COEX = {"viruses": ["v1", "v2"], "mu": [2.0, 4.0], "p": [0.5, 0.5]}
_COMP = {"viruses": ["v1", "v2"], "mu": [2.0, 4.0], "p": [0.5, 0.5],
         "compete": [["v1", "v2"]]}

BUILTIN_SCENARIOS = {
    # static patching, Markov vs mean-field comparison
    "fig3-coexist": {
        "name": "fig3-coexist",
        "network": _ER100, "model": _COEX,
        "init": {"kind": "per_virus", "probs": [0.2, 0.2]},
        "defense": {"beta": 10.0},
        "horizon": 3.0, "grid_points": 61, "trials": 100, "seed": 101,
        "engine": "both", "dynamics": "subset",
    },
    "fig3-compete": {
        "name": "fig3-compete",
        "network": _ER100, "model": _COMP,
        "init": {"kind": "per_virus", "probs": [0.2, 0.2]},
        "defense": {"beta": 10.0},
        "horizon": 3.0, "grid_points": 61, "trials": 100, "seed": 102,
        "engine": "both", "dynamics": "subset",
    },
    # monotone adaptive patching, gain sweep
    "fig4a-adaptive-patch": {
        "name": "fig4a-adaptive-patch",
        "network": _ER100, "model": _COEX,
        "init": {"kind": "per_virus", "probs": [0.2, 0.2]},
        "defense": {"beta": 10.0,
                    "controller": {"kind": "monotone", "alpha": 10.0}},
        "sweep": {"param": "alpha", "values": [10.0, 50.0]},
        "horizon": 50.0, "h": 2e-3, "grid_points": 501, "seed": 103,
        "engine": "meanfield", "dynamics": "aggregate",
    },
    # adaptive filtering on top of static patching, gain sweep
    "fig5a-adaptive-filter": {
        "name": "fig5a-adaptive-filter",
        "network": _ER100, "model": _COEX,
        "init": {"kind": "per_virus", "probs": [0.15, 0.15]},
        "defense": {"beta": 10.0, "q0": 0.05,
                    "controller": {"kind": "filter", "gamma": 1e-3}},
        "sweep": {"param": "gamma", "values": [1e-3, 1e-2]},
        "horizon": 8.0, "grid_points": 161, "seed": 104,
        "engine": "meanfield", "dynamics": "subset",
    },
    # non-monotone patching toward the interior fixed point; the slow
    # closed-loop eigenvalue scales like gamma/(lam*degree), hence the horizon
    "fig5b-nonmono": {
        "name": "fig5b-nonmono",
        "network": {"kind": "erdos_renyi", "n": 100, "p": 0.05, "seed": 3},
        "model": {"viruses": ["v1"], "mu": [1.0], "p": [1.0]},
        "init": {"kind": "uniform_random", "low": 0.0, "high": 1.0},
        "defense": {"beta": {"kind": "uniform_random", "low": 1e-3, "high": 0.2},
                    "controller": {"kind": "nonmonotone", "alpha": 1.0,
                                   "gamma": 0.1}},
        "horizon": 150.0, "h": 5e-3, "grid_points": 301, "seed": 105,
        "engine": "meanfield", "dynamics": "subset",
    },
}


def builtin_scenario(name) -> Scenario:
    if name not in BUILTIN_SCENARIOS:
        raise ConfigError(f"unknown built-in scenario {name!r}; "
                          f"choices: {sorted(BUILTIN_SCENARIOS)}", field="scenario")
    return parse_scenario(dict(BUILTIN_SCENARIOS[name]))
