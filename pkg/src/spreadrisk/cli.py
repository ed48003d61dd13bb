"""Command-line front end.

Every option can come from a JSON config file (``--config``) whose keys match
the long flag names with underscores; flags given on the command line win.
Exit codes: 0 success, 1 check failed (verify/simulate), 2 infeasible,
3 numerical failure, 4 bad input.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import scenarios
from .certificate import (UnstableError, backward_certificate, risk_report,
                          schedule_matrices, verify_certificate)
from .conic import SolutionRejected, SolveOptions, build_problem1, build_problem2
from .dynamics import simulate_stochastic
from .network import SpreadingNetwork, StageParameters, validate
from .planning import SolveFailed, bench_stages, linear_fit, minimize_resources, plan_risk
from .plotting import (heatmap_csv, plot_allocation_heatmap, plot_bench, plot_sparsify_history,
                       plot_wildfire_map)
from .resources import AllocationSchedule
from .sparsify import reweighted_solve

EXIT_OK, EXIT_CHECK_FAILED, EXIT_INFEASIBLE, EXIT_NUMERICAL, EXIT_BAD_INPUT = 0, 1, 2, 3, 4

DEFAULTS = {
    "preset": None, "network": None, "landscape": None, "outbreak": None,
    "K": None, "h": None, "alpha": None, "gamma_stage": None, "gamma_total": None, "gamma": None,
    "mode": "max", "backend": None, "feas_tol": 1e-8, "rel_gap": 1e-6, "max_iters": 500,
    "out": "out", "format": "json", "seed": 0,
    "schedule": None, "zero_schedule": False, "compare_zero": False, "replications": 10_000,
    "horizon": None, "certificate": None, "tol": 1e-6,
    "problem": "P2", "sparsify_mode": "objective", "cap": None, "eps": 1e-4, "q_max": 10,
    "tau": 1e-6, "polish": False, "k_range": "2..8", "program": "P1",
}


class BadInput(Exception):
    pass


# ---------------------------------------------------------------------------
# configuration


def _merge_config(args) -> dict:
    cfg = dict(DEFAULTS)
    if args.config:
        try:
            doc = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise BadInput(f"cannot read config {args.config}: {exc}") from None
        unknown = set(doc) - set(DEFAULTS)
        if unknown:
            raise BadInput(f"unknown config keys: {', '.join(sorted(unknown))}")
        cfg.update(doc)
    for key, val in vars(args).items():
        if key in DEFAULTS and val is not None:
            cfg[key] = val
    return cfg


def _gamma_stage(value):
    if value is None or isinstance(value, (int, float)):
        return value
    if isinstance(value, str):
        parts = [p for p in value.replace(",", " ").split() if p]
        vals = [None if p.lower() in ("none", "inf") else float(p) for p in parts]
        return vals[0] if len(vals) == 1 else vals
    return list(value)


def load_scenario(cfg: dict):
    """Return ``(network, default params or None, raster or None)`` from the config."""
    given = [k for k in ("preset", "network", "landscape") if cfg.get(k)]
    if len(given) != 1:
        raise BadInput("give exactly one of --preset, --network or --landscape")
    if cfg.get("preset"):
        try:
            net, params = scenarios.preset(cfg["preset"])
        except KeyError as exc:
            raise BadInput(exc.args[0]) from None
        raster = net.meta.get("raster")
        if cfg.get("outbreak") and raster is not None:
            spec = scenarios.LandscapeSpec(raster=raster, outbreak_preset=cfg["outbreak"])
            net = scenarios.build_wildfire(spec)
        return net, params, raster
    if cfg.get("network"):
        return SpreadingNetwork.load(cfg["network"]), None, None
    spec = scenarios.LandscapeSpec.load(cfg["landscape"])
    net = scenarios.build_wildfire(spec, cfg.get("outbreak"))
    return net, scenarios.wildfire_params(), spec.raster


def stage_params(cfg: dict, base, K=None) -> StageParameters:
    K = K or cfg.get("K") or (base.K if base else None)
    h = cfg.get("h") if cfg.get("h") is not None else (base.h if base else None)
    alpha = cfg.get("alpha") if cfg.get("alpha") is not None else (base.alpha if base else None)
    if K is None or h is None or alpha is None:
        raise BadInput("K, h and alpha are required when no preset supplies them")
    gs = _gamma_stage(cfg.get("gamma_stage"))
    if gs is None and base is not None and base.gamma_stage is not None:
        gs = base.gamma_stage[0] if len(set(base.gamma_stage)) == 1 else list(base.gamma_stage)
    gt = cfg.get("gamma_total")
    if gt is None and base is not None:
        gt = base.gamma_total
    return StageParameters(K=int(K), h=float(h), alpha=float(alpha), gamma_stage=gs,
                           gamma_total=None if gt is None else float(gt))


def _options(cfg: dict) -> SolveOptions:
    return SolveOptions(feas_tol=float(cfg["feas_tol"]), rel_gap=float(cfg["rel_gap"]),
                        max_iters=int(cfg["max_iters"]))


def _k_range(text) -> list:
    if isinstance(text, list):
        return [int(k) for k in text]
    text = str(text)
    if ".." in text:
        a, b = text.split("..")
        return list(range(int(a), int(b) + 1))
    return [int(k) for k in text.replace(",", " ").split()]


def _outdir(cfg: dict) -> Path:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _emit(cfg: dict, summary: dict, csv_text: str | None = None) -> None:
    if cfg["format"] == "csv" and csv_text is not None:
        sys.stdout.write(csv_text)
    else:
        sys.stdout.write(json.dumps(summary, indent=1, default=_jsonable, ensure_ascii=False) + "\n")


def _jsonable(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not serialisable: {type(obj).__name__}")


# ---------------------------------------------------------------------------
# artifacts


def write_plan_artifacts(out: Path, plan, net, params, raster=None, extra=None) -> dict:
    sched = plan.schedule
    sched.save(out / "schedule.json")
    (out / "schedule.csv").write_text(sched.to_csv())
    cert_doc = plan.certificate.to_dict()
    cert_doc.update({"h": params.h, "schedule": sched.to_dict()})
    (out / "certificate.json").write_text(json.dumps(cert_doc, indent=1))
    (out / "risk.csv").write_text(plan.report.to_csv(net.node_ids))
    (out / "allocation.csv").write_text(heatmap_csv(sched))
    plot_allocation_heatmap(sched, out / "allocation.svg")
    if raster is not None:
        plot_wildfire_map(sched, raster, out / "allocation_map.svg")
    nu, nv = sched.nonzeros()
    res = plan.result
    summary = {
        "status": res.status, "backend": res.backend, "wall_time": res.wall_time,
        "iterations": res.iterations, "max_risk": plan.report.max_risk,
        "sum_risk": plan.report.sum_risk, "argmax_node": net.node_ids[plan.report.argmax],
        "budget_per_stage": plan.usage.per_stage.tolist(), "total_resources": plan.usage.total,
        "nonzeros_u": nu, "nonzeros_v": nv, "certificate_residual": plan.check.worst_residual,
        "K": params.K, "h": params.h, "alpha": params.alpha,
    }
    summary.update(extra or {})
    (out / "summary.json").write_text(json.dumps(summary, indent=1, default=_jsonable))
    return summary


# ---------------------------------------------------------------------------
# commands


def cmd_plan(cfg: dict) -> int:
    net, base, raster = load_scenario(cfg)
    params = stage_params(cfg, base)
    plan = plan_risk(net, params, mode=cfg["mode"], options=_options(cfg), backend=cfg["backend"])
    summary = write_plan_artifacts(_outdir(cfg), plan, net, params, raster, {"mode": cfg["mode"]})
    _emit(cfg, summary, plan.report.to_csv(net.node_ids))
    return EXIT_OK


def cmd_minimize_resources(cfg: dict) -> int:
    if cfg.get("gamma") is None:
        raise BadInput("minimize-resources needs --gamma")
    net, base, raster = load_scenario(cfg)
    params = stage_params(cfg, base)
    plan = minimize_resources(net, params, float(cfg["gamma"]), options=_options(cfg), backend=cfg["backend"])
    summary = write_plan_artifacts(_outdir(cfg), plan, net, params, raster, {"gamma": float(cfg["gamma"])})
    _emit(cfg, summary, plan.report.to_csv(net.node_ids))
    return EXIT_OK


def cmd_sparsify(cfg: dict) -> int:
    net, base, raster = load_scenario(cfg)
    params = stage_params(cfg, base)
    gamma = None if cfg.get("gamma") is None else float(cfg["gamma"])
    res = reweighted_solve(net, params, problem=cfg["problem"], gamma=gamma, mode=cfg["sparsify_mode"],
                           cap=None if cfg.get("cap") is None else float(cfg["cap"]),
                           objective_mode=cfg["mode"], eps=float(cfg["eps"]), q_max=int(cfg["q_max"]),
                           tau=float(cfg["tau"]), polish=bool(cfg["polish"]), options=_options(cfg),
                           backend=cfg["backend"])
    out = _outdir(cfg)
    (out / "iterations.csv").write_text(res.log_csv())
    plot_sparsify_history(res.history, out / "iterations.svg")
    summary = write_plan_artifacts(out, res.plan, net, params, raster, {
        "problem": cfg["problem"], "sparsify_mode": cfg["sparsify_mode"], "iterations_run": len(res.history),
        "converged": res.converged, "polished": res.polished, "warnings": res.warnings})
    _emit(cfg, summary, res.log_csv())
    return EXIT_OK


def certified_bound(net, schedule: AllocationSchedule, h: float, alpha: float) -> float:
    """``p^1 x_hat`` for the tightest certificate of a fixed schedule (inf if none exists)."""
    try:
        p = backward_certificate(schedule_matrices(schedule, h), net.cost, alpha)
    except UnstableError:
        return math.inf
    return float(p[0] @ net.x_hat)


def cmd_simulate(cfg: dict) -> int:
    net, base, _ = load_scenario(cfg)
    params = stage_params(cfg, base)
    if cfg.get("schedule"):
        sched = AllocationSchedule.load(cfg["schedule"], net)
    elif cfg.get("zero_schedule"):
        sched = AllocationSchedule.zeros(net, params.K)
    else:
        raise BadInput("simulate needs --schedule or --zero-schedule")
    horizon = None if cfg.get("horizon") is None else int(cfg["horizon"])

    def run(s):
        sim = simulate_stochastic(net, params.h, params.alpha, s.stage_rates(),
                                  replications=int(cfg["replications"]), seed=int(cfg["seed"]), T=horizon)
        bound = certified_bound(net, s, params.h, params.alpha)
        doc = sim.summary()
        if math.isfinite(bound):
            doc.update({"certified_bound": bound, "pass": bool(sim.mean <= bound + 3 * sim.stderr)})
        else:
            # the schedule leaves the linearised system unstable: nothing to compare against
            doc.update({"certified_bound": None, "pass": None})
        return doc

    summary = run(sched)
    if cfg.get("compare_zero"):
        zero = run(AllocationSchedule.zeros(net, sched.K))
        summary["zero_schedule"] = zero
        summary["planned_not_worse"] = bool(summary["mean"] <= zero["mean"])
    out = _outdir(cfg)
    (out / "simulate.json").write_text(json.dumps(summary, indent=1, default=_jsonable))
    _emit(cfg, summary)
    return EXIT_OK if summary["pass"] is not False else EXIT_CHECK_FAILED


def cmd_verify(cfg: dict) -> int:
    if not cfg.get("certificate"):
        raise BadInput("verify needs --certificate")
    net, base, _ = load_scenario(cfg)
    doc = json.loads(Path(cfg["certificate"]).read_text())
    try:
        p = np.asarray(doc["p"], float)
        alpha = float(doc["alpha"])
    except (KeyError, TypeError, ValueError) as exc:
        raise BadInput(f"malformed certificate: {exc}") from None
    if p.ndim != 2 or p.shape[1] != net.n:
        raise BadInput(f"certificate has shape {p.shape}, network has {net.n} nodes")
    h = doc.get("h", cfg.get("h") if cfg.get("h") is not None else (base.h if base else None))
    if h is None:
        raise BadInput("the certificate carries no h; pass --h")
    if cfg.get("schedule"):
        sched = AllocationSchedule.load(cfg["schedule"], net)
    elif "schedule" in doc:
        sched = AllocationSchedule.from_dict(doc["schedule"], net)
    else:
        sched = AllocationSchedule.zeros(net, p.shape[0])
    if sched.K != p.shape[0]:
        raise BadInput(f"schedule has {sched.K} stages, certificate {p.shape[0]}")
    chk = verify_certificate(p, schedule_matrices(sched, float(h)), net.cost, alpha, float(cfg["tol"]))
    rep = risk_report(p, net.x_hat)
    summary = {"valid": chk.valid, "worst_residual": chk.worst_residual,
               "violation": None if chk.violation is None else
               {"stage": chk.violation[0], "node": net.node_ids[chk.violation[1] - 1]},
               "max_risk": rep.max_risk, "tol": float(cfg["tol"])}
    _emit(cfg, summary, rep.to_csv(net.node_ids))
    return EXIT_OK if chk.valid else EXIT_CHECK_FAILED


def cmd_bench(cfg: dict) -> int:
    if not any(cfg.get(k) for k in ("preset", "network", "landscape")):
        cfg = dict(cfg, preset="wildfire-small")
    net, base, _ = load_scenario(cfg)
    Ks = _k_range(cfg["k_range"])
    opts = _options(cfg)
    rows = bench_stages(net, lambda K: stage_params(cfg, base, K=K), Ks, cfg["mode"], opts, cfg["backend"])
    fit = linear_fit([r[0] for r in rows], [r[1] for r in rows]) if len(rows) >= 2 else None
    out = _outdir(cfg)
    lines = ["K,seconds,status,iterations"] + [f"{K},{t!r},{st},{it}" for K, t, st, it in rows]
    csv_text = "\n".join(lines) + "\n"
    (out / "bench.csv").write_text(csv_text)
    summary = {"K": [r[0] for r in rows], "seconds": [r[1] for r in rows],
               "status": [r[2] for r in rows]}
    if fit is not None:
        summary.update({"slope": fit[0], "intercept": fit[1], "r2": fit[2]})
    (out / "bench.json").write_text(json.dumps(summary, indent=1))
    plot_bench([r[0] for r in rows], [r[1] for r in rows], out / "bench.svg", fit)
    _emit(cfg, summary, csv_text)
    return EXIT_OK if all(r[2] == "optimal" for r in rows) else EXIT_NUMERICAL


def cmd_validate(cfg: dict) -> int:
    net, base, _ = load_scenario(cfg)
    params = stage_params(cfg, base) if (base or cfg.get("K")) else None
    problems = validate(net, params)
    _emit(cfg, {"valid": not problems, "violations": problems})
    return EXIT_OK if not problems else EXIT_BAD_INPUT


def cmd_dump(cfg: dict) -> int:
    net, base, _ = load_scenario(cfg)
    params = stage_params(cfg, base)
    if cfg["program"] == "P1":
        prog = build_problem1(net, params, mode=cfg["mode"])
    elif cfg["program"] == "P2":
        if cfg.get("gamma") is None:
            raise BadInput("dumping P2 needs --gamma")
        prog = build_problem2(net, params, float(cfg["gamma"]))
    else:
        raise BadInput(f"unknown program {cfg['program']!r}")
    text = prog.dumps()
    out = _outdir(cfg)
    (out / f"{cfg['program'].lower()}.dump").write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


COMMANDS = {
    "plan": (cmd_plan, "minimise the certified risk under stage budgets"),
    "minimize-resources": (cmd_minimize_resources, "least resources certifying a risk cap --gamma"),
    "sparsify": (cmd_sparsify, "reweighted l1 iteration for sparser schedules"),
    "simulate": (cmd_simulate, "Monte-Carlo check of a schedule against its certified bound"),
    "verify": (cmd_verify, "re-verify a certificate file against a network"),
    "bench": (cmd_bench, "solver wall time across a range of K"),
    "validate": (cmd_validate, "report violated input invariants"),
    "dump": (cmd_dump, "write the canonical program listing"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("scenario")
    g.add_argument("--config", help="JSON config; keys are the long flag names with underscores")
    g.add_argument("--preset", help=f"one of {', '.join(scenarios.PRESETS)}")
    g.add_argument("--network", help="network JSON file")
    g.add_argument("--landscape", help="landscape JSON file (wildfire)")
    g.add_argument("--outbreak", choices=["diffuse", "point"], help="wildfire outbreak map preset")
    g = common.add_argument_group("stages")
    g.add_argument("-K", "--K", type=int, dest="K")
    g.add_argument("--h", type=float)
    g.add_argument("--alpha", type=float)
    g.add_argument("--gamma-stage", dest="gamma_stage", help="per-stage budget: one number or a list")
    g.add_argument("--gamma-total", dest="gamma_total", type=float)
    g.add_argument("--gamma", type=float, help="risk cap for Problem 2")
    g.add_argument("--mode", choices=["max", "sum"])
    g = common.add_argument_group("solver")
    g.add_argument("--backend", help="clarabel (default) or cvxpy; also SPREADRISK_BACKEND")
    g.add_argument("--feas-tol", dest="feas_tol", type=float)
    g.add_argument("--rel-gap", dest="rel_gap", type=float)
    g.add_argument("--max-iters", dest="max_iters", type=int)
    g = common.add_argument_group("output")
    g.add_argument("--out", help="output directory (default ./out)")
    g.add_argument("--format", choices=["json", "csv"], help="report printed on stdout")
    g.add_argument("--seed", type=int)

    parser = argparse.ArgumentParser(prog="spreadrisk", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, helptext) in COMMANDS.items():
        sp = sub.add_parser(name, parents=[common], help=helptext)
        if name == "sparsify":
            sp.add_argument("--problem", choices=["P1", "P2"])
            sp.add_argument("--sparsify-mode", dest="sparsify_mode", choices=["objective", "cap"])
            sp.add_argument("--cap", type=float, help="cardinality cap M for cap mode")
            sp.add_argument("--eps", type=float)
            sp.add_argument("--q-max", dest="q_max", type=int)
            sp.add_argument("--tau", type=float)
            sp.add_argument("--polish", action="store_true", default=None)
        elif name == "simulate":
            sp.add_argument("--schedule")
            sp.add_argument("--zero-schedule", dest="zero_schedule", action="store_true", default=None)
            sp.add_argument("--compare-zero", dest="compare_zero", action="store_true", default=None)
            sp.add_argument("--replications", type=int)
            sp.add_argument("--horizon", type=int)
        elif name == "verify":
            sp.add_argument("--certificate")
            sp.add_argument("--schedule", help="schedule JSON if the certificate file has none")
            sp.add_argument("--tol", type=float)
        elif name == "bench":
            sp.add_argument("--k-range", dest="k_range", help="e.g. 2..8 or 2,4,6")
        elif name == "dump":
            sp.add_argument("--program", choices=["P1", "P2"])
    return parser


def _fail(cfg, code: int, kind: str, message: str, status: str | None = None) -> int:
    doc = {"error": kind, "message": message, "exit_code": code}
    if status:
        doc["status"] = status
    text = json.dumps(doc)
    sys.stderr.write(text + "\n")
    if cfg is not None:
        try:
            (_outdir(cfg) / "error.json").write_text(text + "\n")
        except OSError:
            pass
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cfg = None
    try:
        cfg = _merge_config(args)
        return COMMANDS[args.command][0](cfg)
    except SolveFailed as exc:
        code = EXIT_INFEASIBLE if exc.status == "infeasible" else EXIT_NUMERICAL
        return _fail(cfg, code, "solve-failed", str(exc), exc.status)
    except SolutionRejected as exc:
        return _fail(cfg, EXIT_NUMERICAL, "solution-rejected", str(exc), "numerical")
    except (BadInput, ValueError, KeyError, FileNotFoundError, json.JSONDecodeError) as exc:
        return _fail(cfg, EXIT_BAD_INPUT, "bad-input", str(exc))


if __name__ == "__main__":
    sys.exit(main())
