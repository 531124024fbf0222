"""Configuration-driven pipeline: validate, solve, synthesise, verify, simulate.

Usage::

    optcons run CONFIG.json [--out DIR] [--skip-regularity-check]
                            [--horizon T] [--step h] [--no-figures]

Exit status: 0 success, 1 bad input, 2 graph not connected, 3 Riccati
failure, 4 regularity violation, 5 unstabilisable, 6 simulation divergence.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

import numpy as np

from .errors import ConfigError, ConsensusError, RegularityViolation, ValidationError
from .graph import CommGraph, kappa, laplacian, laplacian_spectrum
from .riccati import riccati_ode_oracle, solve_regular_are
from .simulator import (
    LtiAgentModel,
    SimConfig,
    SimReport,
    decay_rate,
    mean_trajectory_check,
    simulate,
)
from .synthesis import (
    closed_loop_pair,
    synthesize,
    unstable_are_residual,
    verify_mode_stability,
)

log = logging.getLogger("optcons")

DEFAULT_T = 20.0
DEFAULT_H = 1e-3
DEFAULT_ORACLE_HORIZON = 50.0
_ORACLE_STEP = 5e-3


@dataclass
class RunConfig:
    model: LtiAgentModel
    graph: CommGraph
    sim: SimConfig
    skip_regularity_check: bool = False
    oracle_horizon: float | None = DEFAULT_ORACLE_HORIZON
    reference: dict[str, np.ndarray] = field(default_factory=dict)


@dataclass
class RunArtifacts:
    report: dict[str, Any]
    sim: SimReport | None = None

    @property
    def exit_code(self) -> int:
        return self.report["exit_code"]


def _matrix(value, path: str) -> np.ndarray:
    if isinstance(value, bool):
        raise ConfigError(path, "expected a number or nested numeric array")
    if isinstance(value, (int, float)):
        return np.array([[float(value)]])
    if not isinstance(value, list) or not value:
        raise ConfigError(path, "expected a non-empty nested numeric array")
    if all(isinstance(v, list) for v in value):
        widths = {len(row) for row in value}
        if len(widths) != 1:
            raise ConfigError(path, f"ragged matrix (row lengths {sorted(widths)})")
        rows = value
    elif not any(isinstance(v, list) for v in value):
        rows = [value]
    else:
        raise ConfigError(path, "mixes scalars and rows")
    try:
        arr = np.array(rows, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(path, f"non-numeric entry ({exc})") from None
    if arr.ndim != 2:
        raise ConfigError(path, "expected a 2-D array")
    if not np.all(np.isfinite(arr)):
        raise ConfigError(path, "non-finite entry")
    return arr


def _number(doc: dict, key: str, path: str, default):
    if key not in doc:
        return default
    v = doc[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{path}.{key}", "expected a number")
    return v


def parse_config(text: str) -> RunConfig:
    """Parse and validate a JSON run configuration."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("$", f"invalid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError("$", "top level must be an object")

    mdoc = doc.get("model")
    if not isinstance(mdoc, dict):
        raise ConfigError("model", "missing model block")
    mats = {}
    for key in ("A", "B", "Q", "R"):
        if key not in mdoc:
            raise ConfigError(f"model.{key}", "missing")
        mats[key] = _matrix(mdoc[key], f"model.{key}")
    n, m = mats["B"].shape
    if mats["A"].shape != (n, n):
        raise ConfigError("model.A", f"expected {n}x{n} (rows of B), got {mats['A'].shape}")
    if mats["Q"].shape != (n, n):
        raise ConfigError("model.Q", f"expected {n}x{n}, got {mats['Q'].shape}")
    if mats["R"].shape != (m, m):
        raise ConfigError("model.R", f"expected {m}x{m} (columns of B), got {mats['R'].shape}")

    sdoc = doc.get("sim", {})
    if not isinstance(sdoc, dict):
        raise ConfigError("sim", "expected an object")
    x0 = _matrix(sdoc["x0"], "sim.x0") if "x0" in sdoc else None
    if x0 is not None and n == 1 and x0.shape[0] == 1 and x0.shape[1] != 1:
        x0 = x0.T

    gdoc = doc.get("graph")
    if not isinstance(gdoc, dict):
        raise ConfigError("graph", "missing graph block")
    if ("adjacency" in gdoc) == ("edges" in gdoc):
        raise ConfigError("graph", "exactly one of 'adjacency' or 'edges' is required")
    try:
        if "adjacency" in gdoc:
            graph = CommGraph(_matrix(gdoc["adjacency"], "graph.adjacency"))
        else:
            edges = gdoc["edges"]
            if not isinstance(edges, list) or not all(isinstance(e, list) for e in edges):
                raise ConfigError("graph.edges", "expected a list of [i, j] or [i, j, weight]")
            n_agents = gdoc.get("n_agents")
            if n_agents is None:
                if x0 is not None:
                    n_agents = x0.shape[0]
                else:
                    n_agents = max((int(max(e[0], e[1])) for e in edges if len(e) >= 2), default=1)
            graph = CommGraph.from_edges(int(n_agents), edges)
    except ConfigError:
        raise
    except (ValidationError, TypeError, ValueError) as exc:
        raise ConfigError("graph", str(exc)) from None
    N = graph.n_agents

    if x0 is None:
        # distinct default states so that disagreement is visible
        x0 = np.outer(np.arange(1, N + 1, dtype=float), np.ones(n))
    if x0.shape != (N, n):
        raise ConfigError("sim.x0", f"expected {N} initial states of length {n}, got {x0.shape}")
    try:
        model = LtiAgentModel(mats["A"], mats["B"], mats["Q"], mats["R"], N=N)
    except ValidationError as exc:
        msg = str(exc)
        key = msg.split(" ", 1)[0]
        raise ConfigError(f"model.{key}" if key in mats else "model", msg) from None

    T = _number(sdoc, "T", "sim", DEFAULT_T)
    h = _number(sdoc, "h", "sim", DEFAULT_H)
    every = _number(sdoc, "record_every", "sim", 1)
    if int(every) != every:
        raise ConfigError("sim.record_every", "expected an integer")
    try:
        sim = SimConfig(x0, float(T), float(h), int(every))
    except ValidationError as exc:
        raise ConfigError("sim", str(exc)) from None

    fdoc = doc.get("flags", {})
    if not isinstance(fdoc, dict):
        raise ConfigError("flags", "expected an object")
    skip = fdoc.get("skip_regularity_check", False)
    if not isinstance(skip, bool):
        raise ConfigError("flags.skip_regularity_check", "expected true or false")
    oracle = fdoc.get("oracle_horizon", DEFAULT_ORACLE_HORIZON)
    if oracle is not None:
        oracle = _number(fdoc, "oracle_horizon", "flags", DEFAULT_ORACLE_HORIZON)
        if oracle <= 0:
            oracle = None

    reference = {}
    rdoc = doc.get("reference", {})
    if not isinstance(rdoc, dict):
        raise ConfigError("reference", "expected an object")
    for key, value in rdoc.items():
        reference[key] = _matrix(value, f"reference.{key}")

    return RunConfig(model, graph, sim, skip, oracle, reference)


def emit_config(cfg: RunConfig) -> str:
    """Serialise a :class:`RunConfig` back to JSON text."""
    doc = {
        "model": {k: getattr(cfg.model, k).tolist() for k in ("A", "B", "Q", "R")},
        "graph": {"adjacency": cfg.graph.adjacency.tolist()},
        "sim": {
            "x0": cfg.sim.x0.tolist(),
            "T": cfg.sim.T,
            "h": cfg.sim.h,
            "record_every": cfg.sim.record_every,
        },
        "flags": {
            "skip_regularity_check": cfg.skip_regularity_check,
            "oracle_horizon": cfg.oracle_horizon,
        },
    }
    if cfg.reference:
        doc["reference"] = {k: v.tolist() for k, v in cfg.reference.items()}
    return json.dumps(doc, indent=2)


def _fail(report: dict, exc: ConsensusError) -> RunArtifacts:
    report["status"] = "failed"
    report["exit_code"] = exc.exit_code
    report["error"] = {"kind": exc.kind, "message": str(exc), "condition": exc.condition}
    for attr in ("residual", "eigenvalue", "time", "path"):
        value = getattr(exc, attr, None)
        if value is not None:
            report["error"][attr] = (
                [value.real, value.imag] if isinstance(value, complex) else value
            )
    return RunArtifacts(report)


def run(cfg: RunConfig) -> RunArtifacts:
    """Execute the whole pipeline; the report is filled up to the failing stage."""
    model, graph = cfg.model, cfg.graph
    report: dict[str, Any] = {
        "status": "running",
        "exit_code": None,
        "dimensions": {"n": model.n, "m": model.m, "N": graph.n_agents},
        "warnings": [],
    }

    spec = laplacian_spectrum(graph)
    report["graph"] = {
        "laplacian": laplacian(graph).tolist(),
        "eigenvalues": spec.eigenvalues.tolist(),
        "fiedler": spec.fiedler,
        "connected": spec.connected,
    }
    try:
        report["graph"]["kappa"] = kappa(spec)
    except ConsensusError as exc:
        return _fail(report, exc)

    try:
        are = solve_regular_are(model.A, model.B, model.Q, model.R)
    except ConsensusError as exc:
        return _fail(report, exc)
    report["riccati"] = {
        "P": are.P.tolist(),
        "residual_are": are.residual_are,
        "residual_reg": are.residual_reg,
        "regular": are.regular,
        "rank_R": are.reduction.m1,
    }
    if cfg.oracle_horizon:
        T_or = float(cfg.oracle_horizon)
        try:
            P_or = riccati_ode_oracle(
                model.A, model.B, model.Q, model.R, T_or, max(1, int(np.ceil(T_or / _ORACLE_STEP)))
            )
            report["riccati"]["oracle"] = {
                "horizon": T_or,
                "P_T": P_or.tolist(),
                "gap": float(np.linalg.norm(P_or - are.P)),
            }
        except ConsensusError as exc:
            report["riccati"]["oracle"] = {"horizon": T_or, "error": str(exc)}
    if not are.regular:
        if cfg.skip_regularity_check:
            report["warnings"].append(
                f"regularity B'P = R R^+ B'P violated (residual {are.residual_reg:.6g}); "
                "continuing because skip_regularity_check is set"
            )
        else:
            return _fail(
                report,
                RegularityViolation(
                    f"ARE solution violates B'P = R R^+ B'P (residual {are.residual_reg:.6g})",
                    residual=are.residual_reg,
                ),
            )

    try:
        ctrl = synthesize(model, graph, allow_irregular=cfg.skip_regularity_check, are=are)
    except ConsensusError as exc:
        pair = closed_loop_pair(model, are.P)
        report["synthesis"] = {"A_cal": pair.A_cal.tolist(), "B_cal": pair.B_cal.tolist()}
        return _fail(report, exc)
    pair = closed_loop_pair(model, ctrl.P)
    split = ctrl.split
    report["synthesis"] = {
        "A_cal": pair.A_cal.tolist(),
        "B_cal": pair.B_cal.tolist(),
        "F": ctrl.F.tolist(),
        "Pi": ctrl.Pi.tolist(),
        "kappa": ctrl.kappa,
        "n_s": split.n_s,
        "n_u": split.n_u,
        "T1": split.T1.tolist(),
        "P_u": ctrl.P_u.tolist(),
        "unstable_are_residual": unstable_are_residual(split.A_u, split.B_u, ctrl.P_u),
        "Kgain": ctrl.Kgain.tolist(),
        "relative_gain": ctrl.relative_gain.tolist(),
    }
    if "P_u" in cfg.reference:
        ref = cfg.reference["P_u"]
        entry = {"matrix": ref.tolist()}
        if ref.shape == split.A_u.shape:
            entry["unstable_are_residual"] = unstable_are_residual(split.A_u, split.B_u, ref)
            entry["min_eigenvalue"] = float(np.linalg.eigvalsh((ref + ref.T) / 2).min())
        else:
            entry["error"] = f"shape {ref.shape} does not match unstable block {split.A_u.shape}"
        report.setdefault("reference", {})["P_u"] = entry
    if "P" in cfg.reference:
        ref = cfg.reference["P"]
        report.setdefault("reference", {})["P"] = {
            "matrix": ref.tolist(),
            "distance": float(np.linalg.norm(ref - ctrl.P)) if ref.shape == ctrl.P.shape else None,
        }

    modes = verify_mode_stability(ctrl, pair, spec)
    report["modes"] = {
        "stable": modes.stable,
        "stable_block_max_real": None if split.n_s == 0 else modes.stable_block_max_real,
        "per_mode": [
            {
                "lambda": d.laplacian_eigenvalue,
                "max_real": d.max_real_full,
                "max_real_unstable_block": d.max_real_unstable_block,
            }
            for d in modes.modes
        ],
    }
    if not modes.stable:
        report["warnings"].append("some disagreement mode is not Hurwitz")

    try:
        sim = simulate(model, ctrl, graph, cfg.sim)
    except ConsensusError as exc:
        return _fail(report, exc)
    report["simulation"] = {
        "T": cfg.sim.T,
        "h": cfg.sim.h,
        "samples": int(sim.times.size),
        "final_disagreement": float(sim.disagreement[-1]) if sim.disagreement.size else 0.0,
        "decay_rate": decay_rate(sim.times, sim.disagreement) if sim.disagreement.size else None,
        "final_mean_error": float(sim.mean_error[-1]),
        "cost_per_agent": sim.cost_per_agent.tolist(),
        "cost_total": sim.cost_total,
        "predicted_cost": sim.predicted_cost,
        "alpha": sim.alpha,
        "alpha_converged": sim.alpha_converged,
        "mean_trajectory_deviation": mean_trajectory_check(sim, pair.A_cal),
    }
    if not sim.alpha_converged:
        report["warnings"].append("alpha = lim y'Py not converged at 10 T")
    report["status"] = "ok"
    report["exit_code"] = 0
    return RunArtifacts(report, sim)


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def write_trajectories(sim: SimReport, path: Path) -> None:
    K, N, n = sim.states.shape
    m = sim.controls.shape[2]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "agent_index"] + [f"x_{a + 1}" for a in range(n)] + [f"u_{b + 1}" for b in range(m)])
        for k in range(K):
            t = _fmt(sim.times[k])
            for i in range(N):
                w.writerow(
                    [t, i + 1]
                    + [_fmt(v) for v in sim.states[k, i]]
                    + [_fmt(v) for v in sim.controls[k, i]]
                )


def write_disagreement(sim: SimReport, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "disagreement", "mean_error"])
        d = sim.disagreement if sim.disagreement.size else np.zeros_like(sim.times)
        for t, dv, mv in zip(sim.times, d, sim.mean_error):
            w.writerow([_fmt(t), _fmt(dv), _fmt(mv)])


def _jsonable(obj):
    if isinstance(obj, float) and not np.isfinite(obj):
        return None if np.isnan(obj) else ("inf" if obj > 0 else "-inf")
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def write_artifacts(art: RunArtifacts, out: Path, figures: bool = True) -> list[Path]:
    out.mkdir(parents=True, exist_ok=True)
    report = dict(art.report)
    report["generated_at"] = datetime.now(timezone.utc).isoformat(timespec="seconds")
    paths = [out / "report.json"]
    paths[0].write_text(json.dumps(_jsonable(report), indent=2, sort_keys=True) + "\n")
    if art.sim is not None:
        write_trajectories(art.sim, out / "trajectories.csv")
        write_disagreement(art.sim, out / "disagreement.csv")
        paths += [out / "trajectories.csv", out / "disagreement.csv"]
        if figures:
            from .plotting import plot_disagreement, plot_states

            paths.append(plot_disagreement(art.sim, out / "disagreement.png"))
            paths.append(plot_states(art.sim, out / "states.png"))
    return paths


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="optcons", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run the synthesis and simulation pipeline")
    p.add_argument("config", type=Path)
    p.add_argument("--out", type=Path, default=Path("out"))
    p.add_argument("--skip-regularity-check", action="store_true", default=None)
    p.add_argument("--horizon", type=float, help="simulation horizon T")
    p.add_argument("--step", type=float, help="integration step h")
    p.add_argument("--no-figures", action="store_true")
    p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = parse_config(args.config.read_text())
        if args.skip_regularity_check:
            cfg.skip_regularity_check = True
        if args.horizon is not None or args.step is not None:
            T = args.horizon if args.horizon is not None else cfg.sim.T
            h = args.step if args.step is not None else cfg.sim.h
            cfg.sim = SimConfig(cfg.sim.x0, T, h, cfg.sim.record_every)
    except OSError as exc:
        print(f"error: cannot read {args.config}: {exc}", file=sys.stderr)
        return 1
    except ConsensusError as exc:
        art = _fail({"status": "running", "warnings": []}, exc)
        write_artifacts(art, args.out, figures=False)
        print(f"error: {exc}", file=sys.stderr)
        return art.exit_code

    art = run(cfg)
    paths = write_artifacts(art, args.out, figures=not args.no_figures)
    for w in art.report["warnings"]:
        log.warning("warning: %s", w)
    if art.exit_code:
        err = art.report["error"]
        print(f"error [{err['kind']}]: {err['message']}", file=sys.stderr)
        print(f"violated condition: {err['condition']}", file=sys.stderr)
    for p in paths:
        log.info("wrote %s", p)
    return art.exit_code


if __name__ == "__main__":
    sys.exit(main())
