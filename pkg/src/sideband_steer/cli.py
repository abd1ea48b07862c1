"""Batch command-line front end.

Commands: certify, classes, decouple, plan, lift, simulate, run-e2e.
Every artifact embeds the configuration and seed that produced it, and
identical invocations produce byte-identical files.  Exit codes: 0
success, 1 contract/certification failure, 2 usage, 3 planner failure,
4 winding search exhausted.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import re
import sys
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import _kernels
from . import lie_certifier as lc
from . import lift_simulator as ls
from . import modal_planner as mp
from . import operator_core as oc
from . import spectral_decoupling as sd
from . import torus_winding as tw
from .errors import InternalConsistencyError, SearchExhaustedError

EXIT_OK = 0
EXIT_CONTRACT = 1
EXIT_USAGE = 2
EXIT_PLANNER = 3
EXIT_SEARCH = 4

SEED_ENV = "SIDEBAND_STEER_SEED"


@dataclass
class RunConfig:
    """Knobs of an end-to-end run; see the command flags of the same names."""

    n: int = 3
    eps: float = 0.1
    M: float = 1.0
    eps_plan: float | None = None  # defaults to eps / 10
    s_max: int = 10**9
    seed: int = 0
    budget: int = mp.DEFAULT_BUDGET
    output_dir: str = "."
    family: str = "full"
    jobs: int = 1

    def validate(self) -> None:
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if self.M <= 0:
            raise ValueError("control bound M must be positive")
        if self.eps_plan is not None and not 0 < self.eps_plan < self.eps:
            raise ValueError("eps_plan must lie in (0, eps)")

    @property
    def planner_eps(self) -> float:
        return self.eps / 10.0 if self.eps_plan is None else self.eps_plan


def _default_seed() -> int:
    env = os.environ.get(SEED_ENV, "").strip()
    return int(env) if env else 0


_TERM_RE = re.compile(r"^([+-]?)(\d+\.?\d*|\.\d+)?\s*e(\d+)$")


def parse_state_spec(spec: str, dim: int, rng: np.random.Generator) -> np.ndarray:
    """Parse a state description: 'e<j>', sums like 'e1+0.5e5', or 'random'.

    The result is normalized.  Note 'e5' is the fifth basis vector, never
    a float exponent.
    """
    spec = spec.strip()
    if spec == "random":
        return oc.random_state(dim, rng)
    v = np.zeros(dim, dtype=np.complex128)
    terms = re.findall(r"[+-]?[^+-]+", spec.replace(" ", ""))
    for term in terms:
        mt = _TERM_RE.match(term)
        if not mt:
            raise ValueError(f"cannot parse state term {term!r}")
        sign = -1.0 if mt.group(1) == "-" else 1.0
        coeff = float(mt.group(2)) if mt.group(2) else 1.0
        j = int(mt.group(3))
        if not 1 <= j <= dim:
            raise ValueError(f"basis index e{j} outside dimension {dim}")
        v[j - 1] += sign * coeff
    return oc.normalize(v)


def _write_json(path: Path, payload: dict, config: dict) -> None:
    payload = {"config": config, **payload}
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _config_dict(args, keys) -> dict:
    d = {k: getattr(args, k) for k in keys if hasattr(args, k)}
    d["backend"] = _kernels.backend_name()
    return d


def _walk_parsers(parser):
    yield parser
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            for sub in action.choices.values():
                yield from _walk_parsers(sub)


def _load_config_defaults(parser: argparse.ArgumentParser, argv) -> list[str]:
    """Apply --config file values as parser defaults so flags win.

    Accepts either a plain config dict or a previously written artifact
    (whose settings live under its "config" key), so any run can be
    reproduced directly from its outputs.
    """
    if "--config" in argv:
        i = argv.index("--config")
        with open(argv[i + 1]) as fh:
            raw = json.load(fh)
        if isinstance(raw.get("config"), dict):
            raw = raw["config"]
        for p in _walk_parsers(parser):
            known = {a.dest for a in p._actions}
            p.set_defaults(**{k: v for k, v in raw.items() if k in known})
            for a in p._actions:
                if a.dest in raw and a.required:
                    a.required = False
    return argv


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_certify(args) -> int:
    outdir = Path(args.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    config = _config_dict(args, ("n", "family", "tol"))
    try:
        if args.family.startswith("law-eberly"):
            rep = lc.certify_law_eberly(args.n, args.family[-1], args.tol)
        else:
            rep = lc.certify_modal(args.n, args.family, args.tol)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    path = outdir / f"certify_{args.family}_n{args.n}.json"
    _write_json(path, rep.to_json(), config)
    print(f"family={args.family} n={args.n} dimension={rep.dimension} "
          f"target={rep.target} certified={rep.certified} -> {path}")
    return EXIT_OK if rep.certified else EXIT_CONTRACT


def cmd_classes(args) -> int:
    if args.m < 2:
        print("error: m must be >= 2", file=sys.stderr)
        return EXIT_USAGE
    outdir = Path(args.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    part = sd.resonance_partition(args.m)
    path = outdir / f"classes_m{args.m}.json"
    _write_json(path, part.to_json(), _config_dict(args, ("m",)))
    print(f"m={args.m} N={part.count} -> {path}")
    return EXIT_OK


def cmd_decouple(args) -> int:
    if args.eps <= 0:
        print("error: eps must be positive", file=sys.stderr)
        return EXIT_USAGE
    outdir = Path(args.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    config = _config_dict(args, ("op", "m", "cls", "t_hat", "eps", "s_max"))
    req = tw.DecouplingRequest(id=args.op, m=args.m, ell=args.cls,
                               t_hat=args.t_hat, eps=args.eps, s_max=args.s_max)
    try:
        res = tw.find_decoupling_time(req)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SearchExhaustedError as exc:
        print(f"search exhausted: {exc}", file=sys.stderr)
        return EXIT_SEARCH
    measured = tw.verify_sigma(req, res, dim_sim=4 * (args.m + 1))
    payload = res.to_json()
    payload["measured_sigma_norm"] = measured
    path = outdir / f"decouple_{args.op}_m{args.m}_c{args.cls}.json"
    _write_json(path, payload, config)
    # plot data: torus residual along the searched range
    grid = np.unique(np.linspace(0, max(res.s, 1), 512).astype(np.int64))
    profile = tw.bound_profile(args.m, args.cls, args.t_hat, grid)
    trace = outdir / f"decouple_trace_{args.op}_m{args.m}_c{args.cls}.csv"
    with open(trace, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["s", "bound"])
        for s, b in zip(grid, profile):
            wr.writerow([int(s), f"{b:.17g}"])
    print(f"s={res.s} t_bar={res.t_bar:.6g} bound={res.bound:.3e} "
          f"measured={measured:.3e} -> {path}")
    return EXIT_OK


def _plan_from_args(args, config) -> mp.Plan:
    p = ls.choose_prime(args.n)
    dim = 4 * p
    phi0 = parse_state_spec(args.phi0, dim, np.random.default_rng([args.seed, 0]))
    phiT = parse_state_spec(args.phiT, dim, np.random.default_rng([args.seed, 1]))
    plan = mp.plan_transfer(phi0, phiT, p, M=args.M, eps_plan=config["eps_plan"],
                            seed=args.seed, budget=args.budget, family=args.family)
    return plan


def cmd_plan(args) -> int:
    cfg = RunConfig(n=args.n, eps=args.eps, M=args.M, eps_plan=args.eps_plan,
                    seed=args.seed, budget=args.budget, family=args.family,
                    output_dir=args.output_dir)
    try:
        cfg.validate()
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    outdir = Path(args.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    config = _config_dict(args, ("n", "eps", "M", "seed", "budget", "family",
                                 "phi0", "phiT"))
    config["eps_plan"] = cfg.planner_eps
    plan = _plan_from_args(args, config)
    path = outdir / "plan.json"
    _write_json(path, plan.to_json(), config)
    print(f"p={plan.p} segments={len(plan.segments)} "
          f"achieved_error={plan.achieved_error:.3e} success={plan.success} -> {path}")
    return EXIT_OK if plan.success else EXIT_PLANNER


def cmd_lift(args) -> int:
    if args.eps <= 0:
        print("error: eps must be positive", file=sys.stderr)
        return EXIT_USAGE
    with open(args.plan) as fh:
        payload = json.load(fh)
    plan = mp.Plan.from_json(payload if "segments" in payload else payload["plan"])
    outdir = Path(args.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    config = _config_dict(args, ("plan", "eps", "s_max", "jobs"))
    try:
        lp = ls.lift_plan(plan, args.eps, s_max=args.s_max, jobs=args.jobs)
    except SearchExhaustedError as exc:
        print(f"search exhausted at segment {exc.segment_index}: {exc}", file=sys.stderr)
        return EXIT_SEARCH
    path = outdir / "lifted_plan.json"
    _write_json(path, lp.to_json(), config)
    print(f"segments={len(lp.segments)} total_predicted_error="
          f"{lp.total_predicted_error:.3e} dim_sim={lp.dim_sim} -> {path}")
    return EXIT_OK


def _write_trajectory(path: Path, lp: ls.LiftedPlan, phi0: np.ndarray,
                      final_error: float | None) -> None:
    dim = lp.dim_sim
    phi = np.zeros(dim, dtype=np.complex128)
    phi[:len(phi0)] = phi0
    t = 0.0
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["segment_index", "time_accumulated", "basis_index", "re", "im"])
        for i, seg in enumerate(lp.segments):
            one = ls.LiftedPlan(p=lp.p, eps=lp.eps, dim_sim=dim, segments=[seg])
            phi, _ = ls.simulate_lifted(one, phi)
            t += seg.duration
            for j in range(dim):
                wr.writerow([i, f"{t:.12g}", j + 1,
                             f"{phi[j].real:.17g}", f"{phi[j].imag:.17g}"])
        wr.writerow(["final_error", f"{t:.12g}", "",
                     "" if final_error is None else f"{final_error:.17g}", ""])


def cmd_simulate(args) -> int:
    lp = ls.LiftedPlan.load(args.lifted)
    outdir = Path(args.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    config = _config_dict(args, ("lifted", "phi0", "phiT", "seed"))
    rng = np.random.default_rng([args.seed, 0])
    phi0 = parse_state_spec(args.phi0, 4 * lp.p, rng)
    final, tail = ls.simulate_lifted(lp, phi0)
    final_error = None
    if args.phiT is not None:
        phiT = parse_state_spec(args.phiT, 4 * lp.p, np.random.default_rng([args.seed, 1]))
        target = np.zeros(lp.dim_sim, dtype=np.complex128)
        target[:len(phiT)] = phiT
        final_error = float(np.linalg.norm(final - target))
    _write_trajectory(outdir / "trajectory.csv", lp, phi0, final_error)
    _write_json(outdir / "simulate_summary.json",
                {"tail_mass": tail, "final_error": final_error,
                 "final_norm": float(np.linalg.norm(final))}, config)
    print(f"tail_mass={tail:.3e}" +
          ("" if final_error is None else f" final_error={final_error:.3e}"))
    return EXIT_OK


def cmd_run_e2e(args) -> int:
    cfg = RunConfig(n=args.n, eps=args.eps, M=args.M, eps_plan=args.eps_plan,
                    s_max=args.s_max, seed=args.seed, budget=args.budget,
                    output_dir=args.output_dir, family=args.family, jobs=args.jobs)
    try:
        cfg.validate()
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    outdir = Path(cfg.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    config = {**{k: v for k, v in asdict(cfg).items() if k != "output_dir"},
              "phi0": args.phi0, "phiT": args.phiT,
              "eps_plan": cfg.planner_eps, "backend": _kernels.backend_name()}

    p = ls.choose_prime(cfg.n)
    cert = lc.certify_modal(p, cfg.family)
    _write_json(outdir / "certify_report.json", cert.to_json(), config)
    if not cert.certified:
        print("error: generator family failed certification", file=sys.stderr)
        return EXIT_CONTRACT

    dim = 4 * p
    phi0 = parse_state_spec(args.phi0, dim, np.random.default_rng([cfg.seed, 0]))
    phiT = parse_state_spec(args.phiT, dim, np.random.default_rng([cfg.seed, 1]))
    plan = mp.plan_transfer(phi0, phiT, p, M=cfg.M, eps_plan=cfg.planner_eps,
                            seed=cfg.seed, budget=cfg.budget, family=cfg.family)
    _write_json(outdir / "plan.json", plan.to_json(), config)
    if not plan.success:
        print(f"planner failed: achieved_error={plan.achieved_error:.3e}",
              file=sys.stderr)
        return EXIT_PLANNER

    try:
        lp = ls.lift_plan(plan, cfg.eps - cfg.planner_eps, s_max=cfg.s_max,
                          jobs=cfg.jobs)
    except SearchExhaustedError as exc:
        print(f"search exhausted at segment {exc.segment_index}: {exc}",
              file=sys.stderr)
        return EXIT_SEARCH
    _write_json(outdir / "lifted_plan.json", lp.to_json(), config)

    try:
        report = ls.error_report(plan, lp, phi0, phiT)
    except InternalConsistencyError as exc:
        print(f"contract failure: {exc}", file=sys.stderr)
        return EXIT_CONTRACT
    _write_trajectory(outdir / "trajectory.csv", lp, phi0, report["final_error"])
    # plot data: predicted error budget vs segment index
    with open(outdir / "budget.csv", "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["segment_index", "coupling", "s", "predicted_error",
                     "running_budget"])
        for seg, run_sum in zip(report["per_segment"], report["running_budget"]):
            wr.writerow([seg["origin"], seg["coupling"],
                         "" if seg["s"] is None else seg["s"],
                         f"{seg['predicted_error']:.17g}", f"{run_sum:.17g}"])
    summary = {"final_error": report["final_error"], "eps": cfg.eps,
               "verdict": bool(report["final_error"] < cfg.eps),
               "tail_mass": report["tail_mass"],
               "modal_error": report["modal_error"],
               "lifting_error": report["lifting_error"],
               "total_predicted_error": report["total_predicted_error"],
               "segments": len(lp.segments)}
    _write_json(outdir / "summary.json", summary, config)
    print(f"final_error={report['final_error']:.4e} eps={cfg.eps} "
          f"verdict={'PASS' if summary['verdict'] else 'FAIL'} -> {outdir}/summary.json")
    return EXIT_OK if summary["verdict"] else EXIT_CONTRACT


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sideband-steer",
                                 description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--output-dir", default=".")
        p.add_argument("--config", default=None, help="JSON with default flag values")

    p = sub.add_parser("certify", help="Lie-rank controllability certificate")
    common(p)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--family", default="full",
                   choices=["full", "red-only", "blue-only",
                            "law-eberly-r", "law-eberly-b"])
    p.add_argument("--tol", type=float, default=lc.DEFAULT_TOL)
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("classes", help="resonance classes at order m")
    common(p)
    p.add_argument("--m", type=int, required=True)
    p.set_defaults(func=cmd_classes)

    p = sub.add_parser("decouple", help="select and certify a winding time")
    common(p)
    p.add_argument("--op", required=True, choices=[i for i in oc.ION_IDS
                                                   if oc.is_sideband(i)])
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--class", dest="cls", type=int, required=True)
    p.add_argument("--t-hat", dest="t_hat", type=float, required=True)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--s-max", dest="s_max", type=int, default=tw.DEFAULT_S_MAX)
    p.set_defaults(func=cmd_decouple)

    def plannerish(p, with_eps=True):
        common(p)
        p.add_argument("--n", type=int, default=3)
        p.add_argument("--eps", type=float, default=0.1)
        p.add_argument("--eps-plan", dest="eps_plan", type=float, default=None)
        p.add_argument("--M", type=float, default=1.0)
        p.add_argument("--seed", type=int, default=_default_seed())
        p.add_argument("--budget", type=int, default=mp.DEFAULT_BUDGET)
        p.add_argument("--family", default="full", choices=list(mp.FAMILIES))
        p.add_argument("--phi0", default="e1")
        p.add_argument("--phiT", default="e5")

    p = sub.add_parser("plan", help="piecewise-constant modal steering plan")
    plannerish(p)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("lift", help="lift a plan to the full system")
    common(p)
    p.add_argument("--plan", required=True)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--s-max", dest="s_max", type=int, default=tw.DEFAULT_S_MAX)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_lift)

    p = sub.add_parser("simulate", help="exact simulation of a lifted plan")
    common(p)
    p.add_argument("--lifted", required=True)
    p.add_argument("--phi0", default="e1")
    p.add_argument("--phiT", default=None)
    p.add_argument("--seed", type=int, default=_default_seed())
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("run-e2e", help="certify, plan, lift, simulate, verify")
    plannerish(p)
    p.add_argument("--s-max", dest="s_max", type=int, default=10**9)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_run_e2e)
    return ap


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    ap = build_parser()
    try:
        _load_config_defaults(ap, argv)
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else 0
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SearchExhaustedError as exc:
        print(f"search exhausted: {exc}", file=sys.stderr)
        return EXIT_SEARCH
    except InternalConsistencyError as exc:
        print(f"contract failure: {exc}", file=sys.stderr)
        return EXIT_CONTRACT


if __name__ == "__main__":
    sys.exit(main())
