"""Command line entry point: ``menshov <command> [options]``.

Every command writes its outputs plus ``manifest.json`` into ``--out``
(default ``$MENSHOV_OUT/<command>``, with ``MENSHOV_OUT`` defaulting to
``runs``). ``menshov replay <manifest>`` reruns a manifest. Exit codes: 0 ok,
2 structured algorithmic failure, 1 usage or input error; failures print a
JSON object on stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import platform
import sys
import time
from pathlib import Path

OUT_ENV = "MENSHOV_OUT"
_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                "NUMBA_NUM_THREADS")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ---------------------------------------------------------------- output helpers

def _dump(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True, default=_jsonable) + "\n"


def _jsonable(o):
    import numpy as np
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, complex):
        return {"re": o.real, "im": o.imag}
    raise TypeError(f"not serializable: {type(o).__name__}")


class Run:
    """Collects output files for one command and writes the manifest."""

    def __init__(self, args, command: str):
        self.args = args
        self.command = command
        root = os.environ.get(OUT_ENV, "runs")
        self.out = Path(args.out) if args.out else Path(root) / command
        self.out.mkdir(parents=True, exist_ok=True)
        self.files: list[str] = []
        self.t0 = time.time()

    def write(self, name: str, text: str):
        (self.out / name).write_text(text)
        self.files.append(name)

    def write_json(self, name: str, obj):
        self.write(name, _dump(obj))

    def manifest(self, status: str = "ok"):
        import numpy
        import scipy
        from . import __version__
        params = {k: v for k, v in vars(self.args).items()
                  if k not in ("func", "stdout", "out", "config")}
        m = {"command": self.command, "params": params, "seed": params.get("seed"),
             "schedule": params.get("schedule"), "status": status,
             "versions": {"menshov": __version__, "numpy": numpy.__version__,
                          "scipy": scipy.__version__, "python": platform.python_version()},
             "outputs": sorted(self.files), "wall_clock_s": round(time.time() - self.t0, 3)}
        (self.out / "manifest.json").write_text(_dump(m))

    def emit(self, obj):
        if self.args.stdout:
            sys.stdout.write(_dump(obj))


# ---------------------------------------------------------------- commands

def _law(args):
    from .spectrum import PerturbationLaw
    kind = "power" if args.law_exponent else "constant"
    return PerturbationLaw(kind, args.half_width, args.law_exponent)


def cmd_gen_spectrum(args, run: Run):
    import numpy as np
    from .spectrum import PerturbedSpectrum
    spec = PerturbedSpectrum(args.seed, _law(args))
    n = np.arange(args.n_min, args.n_max + 1, dtype=np.int64)
    r = spec.r(n)
    ln, lo = spec.lam_arrays(n)
    rows = ["n,r,lambda_n,lambda_offset"]
    rows += [f"{a},{b!r},{c},{d:.16e}" for a, b, c, d in
             zip(n.tolist(), r.tolist(), ln.tolist(), lo.tolist())]
    run.write("spectrum.csv", "\n".join(rows) + "\n")
    lam = n + r
    summary = {"seed": args.seed, "law": spec.law.to_dict(), "count": int(n.size),
               "mean_r": float(r.mean()) if n.size else 0.0,
               "max_abs_r": float(np.abs(r).max()) if n.size else 0.0,
               "strictly_increasing": bool(np.all(np.diff(lam) > 0))}
    run.write_json("summary.json", summary)
    return summary


def cmd_scan_l(args, run: Run):
    from .spectrum import PerturbedSpectrum, load_profile, plant_witness, scan_l
    profile = load_profile(args.profile)
    spec = PerturbedSpectrum(args.seed, _law(args))
    if args.plant_at:
        plant_witness(spec, args.k, args.plant_at, profile)
    l = scan_l(spec, args.k, args.l_min, args.l_max, profile, exclusion=args.exclusion)
    out = {"k": args.k, "l_min": args.l_min, "l_max": args.l_max, "l": l,
           "planted_at": args.plant_at, "profile": profile.to_dict()}
    run.write_json("scan.json", out)
    return out


def cmd_plant(args, run: Run):
    from .spectrum import PerturbedSpectrum, check_condition, load_profile, plant_witness
    profile = load_profile(args.profile)
    spec = PerturbedSpectrum(args.seed, _law(args))
    w = plant_witness(spec, args.k, args.l, profile, jitter=args.jitter)
    rep = check_condition(spec, args.k, args.l, profile, w.tolerance)
    out = {"witness": w.to_dict(), "M": w.M, "holds": rep.holds,
           "max_deviation": rep.max_deviation, "spectrum": spec.to_dict()}
    run.write_json("witness.json", out)
    return out


def cmd_estimate_prob(args, run: Run):
    from .spectrum import estimate_block_probability, load_profile
    profile = load_profile(args.profile)
    est = estimate_block_probability(args.k, profile, _law(args), args.trials, args.seed,
                                     tol=args.tolerance)
    out = {"k": args.k, "trials": args.trials, "seed": args.seed,
           "profile": profile.to_dict(), **est.to_dict()}
    run.write_json("estimate.json", out)
    return out


def _floats(text):
    return [float(t) for t in str(text).split(",") if t.strip()]


def cmd_build_correction(args, run: Run):
    from .correction import build_correction, verify_correction
    from .errors import AlgorithmFailure
    out = {}
    try:
        C = build_correction(args.eps, args.delta, args.strategy, args.degree_budget,
                             oversample=args.oversample)
        run.write_json("correction.json", C.to_dict())
        check = verify_correction(C.poly, args.eps, args.delta, 2 * args.oversample)
        out["primary"] = {"ok": True, "certificate": C.certificate.to_dict(),
                          "doubled_oversample": check.to_dict(),
                          "doubled_holds": check.holds(args.eps, args.delta)}
    except AlgorithmFailure as exc:
        out["primary"] = {"ok": False, "error": str(exc), "details": exc.details}
    if args.sweep:
        rows = []
        for e in _floats(args.sweep):
            S = build_correction(e, args.delta, "analytic", oversample=args.sweep_oversample)
            rows.append({"eps": e, **S.certificate.to_dict()})
        out["sweep"] = {"delta": args.delta, "rows": rows,
                        "C_max": max(r["C_achieved"] for r in rows)}
    run.write_json("certificate.json", out)
    if not out["primary"]["ok"]:
        raise AlgorithmFailure(out["primary"]["error"], out)
    return out


def _target(args, profile):
    from .grid import GridFunction
    from .representer import preset_target, samples_target
    if args.samples:
        gf = GridFunction.from_csv(Path(args.samples).read_text())
        return samples_target(gf, str(args.samples))
    return preset_target(args.target, profile)


def cmd_fit(args, run: Run):
    from fractions import Fraction
    from .approximator import FitConfig, fit_in_measure, residual
    from .grid import Grid, stage_grid
    from .spectrum import load_profile
    profile = load_profile(args.profile)
    tgt = _target(args, profile)
    g = stage_grid(args.half_length, args.d_max)
    grid = Grid(Fraction(args.half_length), min(g.step_pi, Fraction(1, 2 ** args.grid_log2)))
    target = tgt.on(grid)
    F, rep = fit_in_measure(target, args.eta, args.mu, profile, args.d_max, FitConfig(),
                            strict=args.strict)
    run.write_json("fit.json", {"poly": F.to_records(), "report": rep.to_dict()})
    run.write("residual.csv", residual(target, F).to_csv())
    return rep.to_dict()


def _rep_config(args):
    from .representer import RepresenterConfig, Schedule
    sched = Schedule.named(args.schedule)
    return RepresenterConfig(schedule=sched, grid_log2=args.grid_log2,
                             witness_mode=args.witness)


def cmd_represent(args, run: Run):
    from .analysis import convergence_trace
    from .errors import AlgorithmFailure, PreconditionError
    from .representer import (RepresentationState, block_values, coefficients_csv,
                              diag_grid_for, evaluate_S, export_coefficients, run_stage)
    from .spectrum import PerturbedSpectrum, load_profile
    from .grid import GridFunction
    profile = load_profile(args.profile)
    state = RepresentationState(PerturbedSpectrum(args.seed), _target(args, profile),
                                profile, _rep_config(args))
    failure = None
    for _ in range(args.stages):
        try:
            st = run_stage(state)
        except (AlgorithmFailure, PreconditionError) as exc:
            failure = {"stage": state.completed + 1, "error": str(exc),
                       "details": getattr(exc, "details", {})}
            break
        run.write_json(f"stage_{st.N:02d}.json", st.to_dict())
        grid = diag_grid_for(state, st.N)
        S = evaluate_S(state, st.N, grid)
        f = state.target.on(grid)
        A = block_values(st, grid)
        lines = ["x,f_re,f_im,A_re,A_im,S_re,S_im"]
        lines += [f"{x!r},{a.real!r},{a.imag!r},{b.real!r},{b.imag!r},{c.real!r},{c.imag!r}"
                  for x, a, b, c in zip(grid.nodes().tolist(), f.samples.tolist(),
                                        A.tolist(), S.samples.tolist())]
        run.write(f"stage_{st.N:02d}_grid.csv", "\n".join(lines) + "\n")
    run.write_json("state.json", state.to_dict())
    run.write("coefficients.csv", coefficients_csv(export_coefficients(state)))
    trace = convergence_trace(state, recompute=False)
    run.write("trace.csv", trace.to_csv())
    out = {"stages_completed": state.completed, "failure": failure,
           "monotonicity": trace.monotonicity(), "trace": trace.rows,
           "terms": sum(len(st.A) for st in state.stages)}
    run.write_json("summary.json", out)
    if failure:
        raise AlgorithmFailure(failure["error"], out)
    return out


def load_state(directory: Path):
    from .grid import GridFunction
    from .representer import preset_target, rebuild_state, samples_target
    from .spectrum import ShiftProfile
    d = json.loads((directory / "state.json").read_text())
    profile = ShiftProfile.from_dict(d["profile"])
    t = d["target"]
    if t["name"] == "samples":
        tgt = samples_target(GridFunction.from_csv(Path(t["source"]).read_text()), t["source"])
    else:
        tgt = preset_target(t["name"], profile)
    return rebuild_state(d, tgt)


def cmd_verify(args, run: Run):
    from .analysis import convergence_trace, default_cutoffs, symmetric_convergence
    state = load_state(Path(args.state))
    trace = convergence_trace(state, recompute=True)
    run.write("trace.csv", trace.to_csv())
    cuts = symmetric_convergence(state, default_cutoffs(state, args.inside_cutoffs))
    recorded = [{"N": st.N, "bad_measure_RN": st.diagnostics.get("bad_measure_RN"),
                 "A_majorant_sup": st.diagnostics.get("A_majorant_sup")} for st in state.stages]
    out = {"stages": state.completed, "trace": trace.rows, "recorded": recorded,
           "monotonicity": trace.monotonicity(),
           "cutoffs": [vars(c) for c in cuts],
           "cutoffs_ok": all(c.ok for c in cuts)}
    run.write_json("verify.json", out)
    return out


def cmd_counterexample(args, run: Run):
    from .analysis import smoothing_obstruction
    rep = smoothing_obstruction(args.beta, args.alpha, args.k, args.c, args.k_max,
                                args.n0, args.n1)
    out = rep.to_dict()
    run.write_json("obstruction.json", out)
    return out


COMMANDS = {
    "gen-spectrum": cmd_gen_spectrum, "scan-l": cmd_scan_l, "plant": cmd_plant,
    "estimate-prob": cmd_estimate_prob, "build-correction": cmd_build_correction,
    "fit": cmd_fit, "represent": cmd_represent, "verify": cmd_verify,
    "counterexample": cmd_counterexample,
}


# ---------------------------------------------------------------- parsing

def _common(p):
    p.add_argument("--out", help="output directory")
    p.add_argument("--stdout", action="store_true", help="print the main JSON result")
    p.add_argument("--threads", type=int, default=1, help="cap on worker threads")
    p.add_argument("--config", help="flat key=value file; flags override it")


def _law_args(p):
    p.add_argument("--half-width", type=float, default=0.5)
    p.add_argument("--law-exponent", type=float, default=0.0)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="menshov", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("gen-spectrum")
    _common(p); _law_args(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-min", type=int, default=-100)
    p.add_argument("--n-max", type=int, default=100)

    p = sub.add_parser("scan-l")
    _common(p); _law_args(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--l-min", type=int, default=3)
    p.add_argument("--l-max", type=int, default=10 ** 6)
    p.add_argument("--exclusion", type=int, default=0)
    p.add_argument("--plant-at", type=int, default=0)
    p.add_argument("--profile", default="default")

    p = sub.add_parser("plant")
    _common(p); _law_args(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--l", type=int, required=True)
    p.add_argument("--jitter", type=float, default=None)
    p.add_argument("--profile", default="default")

    p = sub.add_parser("estimate-prob")
    _common(p); _law_args(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--trials", type=int, default=10 ** 6)
    p.add_argument("--tolerance", type=float, default=None)
    p.add_argument("--profile", default="default")

    p = sub.add_parser("build-correction")
    _common(p)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--strategy", choices=("analytic", "minimax"), default="analytic")
    p.add_argument("--degree-budget", type=int, default=None)
    p.add_argument("--oversample", type=int, default=4)
    p.add_argument("--sweep", default="", help="comma separated eps values for the scaling sweep")
    p.add_argument("--sweep-oversample", type=int, default=1)

    for name in ("fit", "represent"):
        p = sub.add_parser(name)
        _common(p)
        p.add_argument("--target", default="step",
                       choices=("zero", "step", "sawtooth", "single-exponential"))
        p.add_argument("--samples", default=None, help="CSV x,re,im replacing --target")
        p.add_argument("--profile", default="default")
        p.add_argument("--grid-log2", type=int, default=14 if name == "represent" else 8)
        if name == "fit":
            p.add_argument("--half-length", type=int, default=1, help="interval [-N pi, N pi]")
            p.add_argument("--eta", type=float, default=0.25)
            p.add_argument("--mu", type=float, default=0.3)
            p.add_argument("--d-max", type=int, default=48)
            p.add_argument("--strict", action="store_true")
        else:
            p.add_argument("--stages", type=int, default=4)
            p.add_argument("--schedule", choices=("desk", "strict"), default="desk")
            p.add_argument("--seed", type=int, default=0)
            p.add_argument("--witness", choices=("plant", "scan"), default="plant")

    p = sub.add_parser("verify")
    _common(p)
    p.add_argument("--state", required=True, help="output directory of a represent run")
    p.add_argument("--inside-cutoffs", type=int, default=3)

    p = sub.add_parser("counterexample")
    _common(p)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--beta", type=float, default=0.0)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--k-max", type=int, default=12)
    p.add_argument("--c", type=float, default=1.0)
    p.add_argument("--n0", type=int, default=1000)
    p.add_argument("--n1", type=int, default=10 ** 6)

    p = sub.add_parser("replay")
    p.add_argument("manifest")
    p.add_argument("--out", default=None)
    p.add_argument("--stdout", action="store_true")
    return ap


def _read_config(path: str) -> dict:
    out = {}
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"bad config line: {line!r}")
        k, v = line.split("=", 1)
        out[k.strip().replace("-", "_")] = v.strip()
    return out


def _config_flags(argv) -> list[str]:
    """Expand ``--config FILE`` into flags placed before the explicit ones,
    so the command line wins."""
    path = None
    for i, a in enumerate(argv):
        if a == "--config" and i + 1 < len(argv):
            path = argv[i + 1]
        elif a.startswith("--config="):
            path = a.split("=", 1)[1]
    if path is None:
        return []
    flags = []
    for k, v in _read_config(path).items():
        flag = "--" + k.replace("_", "-")
        if v.lower() in ("true", "yes"):
            flags.append(flag)
        elif v.lower() not in ("false", "no"):
            flags += [flag, v]
    return flags


def parse(argv) -> argparse.Namespace:
    argv = list(argv)
    if argv and not argv[0].startswith("-"):
        argv = argv[:1] + _config_flags(argv[1:]) + argv[1:]
    args = build_parser().parse_args(argv)
    if args.command is None:
        raise UsageError("missing command")
    return args


def _replay_argv(manifest: dict, out: str | None) -> list[str]:
    argv = [manifest["command"]]
    for k, v in sorted(manifest["params"].items()):
        if k in ("command", "threads") or v is None or v is False:
            continue
        flag = "--" + k.replace("_", "-")
        argv += [flag] if v is True else [flag, str(v)]
    if out:
        argv += ["--out", out]
    return argv


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        if argv and argv[0] == "replay":
            args = parse(argv)
            manifest = json.loads(Path(args.manifest).read_text())
            argv = _replay_argv(manifest, args.out) + (["--stdout"] if args.stdout else [])
        args = parse(argv)
    except (UsageError, OSError, ValueError) as exc:
        sys.stderr.write(_dump({"error": "usage", "message": str(exc)}))
        return 1
    for var in _THREAD_VARS:
        os.environ[var] = str(max(1, args.threads))
    from .errors import AlgorithmFailure, PreconditionError
    run = Run(args, args.command)
    try:
        result = COMMANDS[args.command](args, run)
    except (AlgorithmFailure, PreconditionError) as exc:
        run.manifest("failed")
        sys.stderr.write(_dump({"error": type(exc).__name__, "message": str(exc),
                                "details": getattr(exc, "details", {})}))
        return 2
    except (OSError, ValueError) as exc:
        sys.stderr.write(_dump({"error": "input", "message": str(exc)}))
        return 1
    run.manifest()
    run.emit(result)
    return 0


if __name__ == "__main__":
    sys.exit(main())
