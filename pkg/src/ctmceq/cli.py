"""Command-line entry point.

Subcommands: eval, weak, strong, solve, sweep, mc, discrete, converge,
reproduce.  Every run writes one JSON report (plus CSV sidecars for
sweep and converge series) under --out; reports are byte-reproducible
for identical inputs except for the wall_time_s field.

Exit codes: 0 success, 2 configuration/usage error, 3 invalid model or
generator, 4 solver failure (no converged candidate), 1 internal error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, load_model, model_digest
from .discrete import (
    MeshSequence,
    convergence_run,
    discrete_equilibrium_check,
    discrete_solve,
    discretize,
    TransitionMatrix,
)
from .equilibrium import (
    ClassifyOptions,
    DEFAULT_SWEEP_GRID,
    SolveOptions,
    Verdict,
    expansion_probe,
    fixed_point_solve,
    lambda_bar_row,
    strong_check,
    weak_check,
    Baseline,
)
from .model import (
    GeneratorMatrix,
    InfeasibleRowError,
    ModelError,
    ModelSpec,
    row_from_free,
    two_state_generator,
    validate_generator,
)
from .montecarlo import estimate_payoff
from .payoff import (
    derivative_payoff_vector,
    payoff_vector,
    shifted_payoff_vector,
)
from .twostate import builtin, eg52_alpha

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_CONFIG = 2
EXIT_VALIDATION = 3
EXIT_SOLVER = 4


class SolverFailure(RuntimeError):
    pass


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, Verdict):
        return obj.value
    return obj


def _write_report(out_dir: Path, name: str, body: dict, started: float) -> Path:
    body = dict(body)
    body["tool_version"] = __version__
    body["wall_time_s"] = time.time() - started
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"{name}.json"
    path.write_text(
        json.dumps(_jsonable(body), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    return path


def _write_csv(out_dir: Path, name: str, header: list[str], rows) -> Path:
    path = out_dir / f"{name}.csv"
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(repr(v) if isinstance(v, float) else str(v) for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def _parse_matrix(text: str, n: int, what: str) -> np.ndarray:
    if text.startswith("@"):
        text = Path(text[1:]).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
        m = np.array(data, dtype=float)
    except (json.JSONDecodeError, ValueError) as exc:
        raise ConfigError(what, f"expected a JSON matrix literal: {exc}") from exc
    if m.shape != (n, n):
        raise ConfigError(what, f"expected shape {(n, n)}, got {m.shape}")
    return m


def _require_generator(model: ModelSpec, raw: np.ndarray) -> GeneratorMatrix:
    verdict = validate_generator(model, raw)
    if not verdict.ok:
        details = "; ".join(v.detail for v in verdict.violations)
        raise InfeasibleRowError(f"invalid generator: {details}")
    return GeneratorMatrix(raw)


def _classify_options(args) -> ClassifyOptions:
    return ClassifyOptions(tie_tol=args.tie_tol, val_tol=args.val_tol)


def _solve_options(args) -> SolveOptions:
    return SolveOptions(
        n_starts=args.starts,
        damping=args.damping,
        max_iter=args.max_iter,
        tol=args.solve_tol,
    )


def _report_weak(result) -> dict:
    return {
        "weak": result.weak,
        "gaps": result.gaps,
        "gamma_star": result.gamma_star,
        "flat_rows": [p.state for p in result.profiles if p.flat],
        "kkt_satisfied": all(k.satisfied for k in result.kkt),
    }


def _report_strong(report) -> dict:
    return report.to_dict()


# ---------------------------------------------------------------------------
# Subcommand handlers
# ---------------------------------------------------------------------------

def _cmd_eval(args, out: Path, started: float) -> int:
    model, data = load_model(args.config)
    Q = _require_generator(model, _parse_matrix(args.generator, model.n_states, "--generator"))
    results = {
        "payoff": payoff_vector(model, Q),
        "derivative_payoff": derivative_payoff_vector(model, Q),
    }
    if args.shift is not None:
        results["shifted_payoff"] = shifted_payoff_vector(model, Q, args.shift)
        results["shift"] = args.shift
    _write_report(
        out,
        "eval",
        {"command": "eval", "model_digest": model_digest(data), "results": results},
        started,
    )
    return EXIT_OK


def _cmd_weak(args, out: Path, started: float) -> int:
    model, data = load_model(args.config)
    Q = _require_generator(model, _parse_matrix(args.generator, model.n_states, "--generator"))
    res = weak_check(model, Q, _classify_options(args))
    _write_report(
        out,
        "weak",
        {"command": "weak", "model_digest": model_digest(data), "results": _report_weak(res)},
        started,
    )
    return EXIT_OK


def _cmd_strong(args, out: Path, started: float) -> int:
    model, data = load_model(args.config)
    Q = _require_generator(model, _parse_matrix(args.generator, model.n_states, "--generator"))
    rep = strong_check(model, Q, _classify_options(args))
    _write_report(
        out,
        "strong",
        {"command": "strong", "model_digest": model_digest(data), "results": _report_strong(rep)},
        started,
    )
    return EXIT_OK


def _cmd_solve(args, out: Path, started: float) -> int:
    model, data = load_model(args.config)
    res = fixed_point_solve(
        model, _solve_options(args), _classify_options(args), max_workers=args.threads
    )
    body = {
        "command": "solve",
        "model_digest": model_digest(data),
        "results": {
            "candidates": [
                {
                    "generator": c.generator.matrix,
                    "weak": c.weak.weak,
                    "verdict": strong_check(model, c.generator, _classify_options(args)).verdict,
                    "iterations": c.iterations,
                    "residual": c.residual,
                    "start_index": c.start_index,
                }
                for c in res.candidates
            ],
            "failed_starts": [
                {"start_index": f.start_index, "residual": f.residual}
                for f in res.failures
            ],
            "warnings": list(res.warnings),
        },
    }
    _write_report(out, "solve", body, started)
    if not res.candidates:
        raise SolverFailure("no start converged to an equilibrium candidate")
    return EXIT_OK


def _cmd_sweep(args, out: Path, started: float) -> int:
    model, data = load_model(args.config)
    Q = _require_generator(model, _parse_matrix(args.deviation, model.n_states, "--deviation"))
    Qstar = _require_generator(model, _parse_matrix(args.baseline, model.n_states, "--baseline"))
    grid = DEFAULT_SWEEP_GRID
    if args.grid:
        grid = tuple(float(x) for x in args.grid.split(","))
    probe = expansion_probe(model, args.state - 1, Q, Qstar, grid)
    _write_csv(
        out,
        "sweep",
        ["eps", "difference", "fitted_order"],
        [(float(e), float(d), probe.fitted_order) for e, d in zip(probe.eps, probe.diffs)],
    )
    _write_report(
        out,
        "sweep",
        {"command": "sweep", "model_digest": model_digest(data), "results": probe.to_dict()},
        started,
    )
    return EXIT_OK


def _cmd_mc(args, out: Path, started: float) -> int:
    model, data = load_model(args.config)
    Q = _require_generator(model, _parse_matrix(args.generator, model.n_states, "--generator"))
    kwargs = {}
    if args.switch_to:
        kwargs["switch_to"] = _require_generator(
            model, _parse_matrix(args.switch_to, model.n_states, "--switch-to")
        )
        kwargs["switch_at"] = args.switch_at
    est = estimate_payoff(model, Q, args.state - 1, args.paths, args.seed, **kwargs)
    analytic = payoff_vector(model, Q)[args.state - 1]
    body = {
        "command": "mc",
        "model_digest": model_digest(data),
        "seed": args.seed,
        "results": {"estimate": est.to_dict(), "analytic_plain": float(analytic)},
    }
    _write_report(out, "mc", body, started)
    return EXIT_OK


def _cmd_discrete(args, out: Path, started: float) -> int:
    model, data = load_model(args.config)
    disc = discretize(model, args.mesh)
    results: dict = {"mesh": args.mesh}
    if args.action == "solve":
        res = discrete_solve(disc.discrete, _solve_options(args), _classify_options(args))
        results["candidates"] = [
            {
                "transition": c.transition.matrix,
                "generator": disc.to_generator(c.transition).matrix,
                "equilibrium": c.check.equilibrium,
                "iterations": c.iterations,
            }
            for c in res.candidates
        ]
        results["warnings"] = list(res.warnings)
        ok = bool(res.candidates)
    else:
        u = TransitionMatrix(_parse_matrix(args.u, model.n_states, "--u"))
        chk = discrete_equilibrium_check(disc.discrete, u, _classify_options(args))
        results["equilibrium"] = chk.equilibrium
        results["gaps"] = chk.gaps
        ok = True
    _write_report(
        out,
        "discrete",
        {"command": "discrete", "model_digest": model_digest(data), "results": results},
        started,
    )
    if not ok:
        raise SolverFailure("no discrete equilibrium found")
    return EXIT_OK


def _cmd_converge(args, out: Path, started: float) -> int:
    model, data = load_model(args.config)
    meshes = MeshSequence(tuple(float(x) for x in args.meshes.split(",")))
    run = convergence_run(model, meshes, _solve_options(args), _classify_options(args))
    rows = []
    rate_keys = [
        (i, j)
        for i in range(model.n_states)
        for j in range(model.n_states)
        if i != j
    ]
    for step in run.steps:
        row = [step.mesh]
        row.extend(float(step.generator.matrix[i, j]) for i, j in rate_keys)
        row.append(float(step.aux_gap.max()))
        rows.append(tuple(row))
    _write_csv(
        out,
        "converge",
        ["delta"] + [f"q_{i + 1}_{j + 1}" for i, j in rate_keys] + ["gap"],
        rows,
    )
    body = {
        "command": "converge",
        "model_digest": model_digest(data),
        "results": {
            "meshes": [s.mesh for s in run.steps],
            "generators": [s.generator.matrix for s in run.steps],
            "aux_gaps": [s.aux_gap for s in run.steps],
            "cauchy": run.cauchy,
            "limit": run.limit.matrix,
            "limit_verdict": run.report.verdict,
        },
    }
    _write_report(out, "converge", body, started)
    return EXIT_OK


# ---------------------------------------------------------------------------
# reproduce
# ---------------------------------------------------------------------------

def _candidate_summary(model, generator, options) -> dict:
    rep = strong_check(model, generator, options)
    return {
        "generator": generator.matrix,
        "verdict": rep.verdict,
        "report": rep.to_dict(),
    }


def _reproduce_eg41(options, solve_options) -> dict:
    m, manifest = builtin("eg41")
    model = m.to_model_spec()
    res = fixed_point_solve(model, solve_options, options)
    cands = [_candidate_summary(model, c.generator, options) for c in res.candidates]
    return {"manifest": manifest, "candidates": cands}


def _reproduce_eg42(options, solve_options) -> dict:
    m, manifest = builtin("eg42")
    model = m.to_model_spec()
    res = fixed_point_solve(model, solve_options, options)
    out = {"manifest": manifest, "candidates": []}
    for c in res.candidates:
        a = float(c.generator.matrix[0, 1])
        residual = -2.0 * a + 0.5 * (1.0 / (a + 1.0) + 1.0 / (a + 2.0)) * (a * a + 2.0)
        entry = _candidate_summary(model, c.generator, options)
        entry["stationarity_residual"] = residual
        out["candidates"].append(entry)
    return out


def _reproduce_eg43(options, solve_options) -> dict:
    m, manifest = builtin("eg43")
    model = m.to_model_spec()
    documented = two_state_generator(5.0 / 12.0, 7.0 / 12.0)
    first = _candidate_summary(model, documented, options)
    res = fixed_point_solve(model, solve_options, options)
    found = [_candidate_summary(model, c.generator, options) for c in res.candidates]
    return {"manifest": manifest, "candidates": [first] + found}


def _reproduce_eg51(options, solve_options) -> dict:
    m, manifest = builtin("eg51", k=1.0)
    model = m.to_model_spec()
    zero = two_state_generator(0.0, 0.0)
    summary = _candidate_summary(model, zero, options)
    disc = discretize(model, 0.01)
    u0 = TransitionMatrix(np.eye(2))
    chk = discrete_equilibrium_check(disc.discrete, u0, options)
    run = convergence_run(model, MeshSequence((0.1, 0.05, 0.01)), solve_options, options)
    return {
        "manifest": manifest,
        "candidates": [summary],
        "discrete_check_h_0p01": {"equilibrium": chk.equilibrium, "gaps": chk.gaps},
        "convergence": {
            "limit": run.limit.matrix,
            "limit_verdict": run.report.verdict,
            "witnesses": [
                {
                    "state": w.state + 1,
                    "row": {str(j + 1): v for j, v in w.row_free.items()},
                    "lambda_candidate": w.lambda_candidate,
                    "lambda_star": w.lambda_star,
                }
                for w in run.report.witnesses
            ],
        },
    }


def _reproduce_eg52(options, solve_options) -> dict:
    m, manifest = builtin("eg52")
    model = m.to_model_spec()
    meshes = MeshSequence(tuple(manifest["meshes"]))
    run = convergence_run(model, meshes, solve_options, options)
    per_mesh = []
    for step in run.steps:
        alpha = float(step.transition.matrix[0, 1])
        expected = eg52_alpha(step.mesh)
        per_mesh.append(
            {
                "mesh": step.mesh,
                "alpha": alpha,
                "alpha_closed_form": expected,
                "abs_error": abs(alpha - expected),
                "rate_a": float(step.generator.matrix[0, 1]),
                "aux_gap": float(step.aux_gap.max()),
            }
        )
    return {
        "manifest": manifest,
        "per_mesh": per_mesh,
        "limit": run.limit.matrix,
        "limit_verdict": run.report.verdict,
        "cauchy": run.cauchy,
    }


_REPRODUCERS = {
    "eg41": _reproduce_eg41,
    "eg42": _reproduce_eg42,
    "eg43": _reproduce_eg43,
    "eg51": _reproduce_eg51,
    "eg52": _reproduce_eg52,
}


def _cmd_reproduce(args, out: Path, started: float) -> int:
    options = _classify_options(args)
    solve_options = _solve_options(args)
    results = _REPRODUCERS[args.example](options, solve_options)
    body = {
        "command": f"reproduce {args.example}",
        "model_digest": model_digest({"builtin": args.example}),
        "results": results,
    }
    _write_report(out, f"reproduce_{args.example}", body, started)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ctmceq",
        description="Evaluate, classify, and solve equilibrium controls for "
        "continuous-time Markov chains under non-exponential discounting.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", required=True, help="model file (JSON or TOML)")
        p.add_argument("--out", default=".", help="directory for report files")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--tie-tol", type=float, default=1e-7)
        p.add_argument("--val-tol", type=float, default=1e-9)
        p.add_argument("--starts", type=int, default=8)
        p.add_argument("--damping", type=float, default=0.5)
        p.add_argument("--max-iter", type=int, default=2000)
        p.add_argument("--solve-tol", type=float, default=1e-12)

    p = sub.add_parser("eval", help="payoff vectors for a generator")
    common(p)
    p.add_argument("--generator", required=True, help="JSON matrix or @file")
    p.add_argument("--shift", type=float, default=None)
    p.set_defaults(handler=_cmd_eval)

    p = sub.add_parser("weak", help="first-order equilibrium check")
    common(p)
    p.add_argument("--generator", required=True)
    p.set_defaults(handler=_cmd_weak)

    p = sub.add_parser("strong", help="full equilibrium classification")
    common(p)
    p.add_argument("--generator", required=True)
    p.set_defaults(handler=_cmd_strong)

    p = sub.add_parser("solve", help="fixed-point equilibrium search")
    common(p)
    p.set_defaults(handler=_cmd_solve)

    p = sub.add_parser("sweep", help="deviation-window expansion probe")
    common(p)
    p.add_argument("--state", type=int, required=True, help="initial state (1-based)")
    p.add_argument("--deviation", required=True)
    p.add_argument("--baseline", required=True)
    p.add_argument("--grid", default=None, help="comma-separated decreasing windows")
    p.set_defaults(handler=_cmd_sweep)

    p = sub.add_parser("mc", help="Monte Carlo payoff estimate")
    common(p)
    p.add_argument("--generator", required=True)
    p.add_argument("--state", type=int, required=True)
    p.add_argument("--paths", type=int, default=100000)
    p.add_argument("--switch-to", default=None)
    p.add_argument("--switch-at", type=float, default=0.0)
    p.set_defaults(handler=_cmd_mc)

    p = sub.add_parser("discrete", help="discretized solve or check")
    common(p)
    p.add_argument("--mesh", type=float, required=True)
    p.add_argument("--action", choices=["solve", "check"], default="solve")
    p.add_argument("--u", default=None, help="transition matrix for --action check")
    p.set_defaults(handler=_cmd_discrete)

    p = sub.add_parser("converge", help="mesh-convergence experiment")
    common(p)
    p.add_argument("--meshes", required=True, help="comma-separated decreasing meshes")
    p.set_defaults(handler=_cmd_converge)

    p = sub.add_parser("reproduce", help="run a built-in worked example")
    common(p, config=False)
    p.add_argument("example", choices=sorted(_REPRODUCERS))
    p.set_defaults(handler=_cmd_reproduce)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "discrete" and args.action == "check" and not args.u:
        parser.error("--action check requires --u")
    started = time.time()
    out = Path(args.out)
    try:
        return args.handler(args, out, started)
    except ConfigError as exc:
        _emit_error("config", str(exc))
        return EXIT_CONFIG
    except (InfeasibleRowError,) as exc:
        _emit_error("validation", str(exc))
        return EXIT_VALIDATION
    except SolverFailure as exc:
        _emit_error("solver", str(exc))
        return EXIT_SOLVER
    except ModelError as exc:
        _emit_error("validation", str(exc))
        return EXIT_VALIDATION
    except Exception as exc:  # pragma: no cover - defensive
        _emit_error("internal", f"{type(exc).__name__}: {exc}")
        return EXIT_INTERNAL


def _emit_error(code: str, message: str):
    sys.stderr.write(json.dumps({"error": {"code": code, "message": message}}) + "\n")


if __name__ == "__main__":
    sys.exit(main())
