"""Command-line front end: ``sais-awareness {allocate,threshold,simulate,gen-graph}``.

Exit codes: 0 success or die-out, 1 infeasible instance or no die-out,
2 input error. Command-line overrides are folded into the config before it
is resolved, so the manifest written next to every output reproduces the run
with ``--config manifest.json``.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import hashlib
import json
import os
import sys
import tempfile
import warnings
from importlib import metadata
from pathlib import Path

import numpy as np
from scipy.stats import spearmanr

from .allocation import (AllocationConvergenceError, CostModelError, assemble_sdp,
                         eval_cost, solve_allocation)
from .config import ConfigError, RunConfig
from .dynamics import (DisconnectedGraphWarning, StateVector, epidemic_threshold_theta,
                       integrate_mean_field, spectral_margin)
from .graph import EdgeListError, generate
from .stochastic import NodeState, ensemble_extinction, gillespie_run

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2


class InputError(Exception):
    pass


# -- output helpers -------------------------------------------------------------

def atomic_write(path: Path, text: str) -> None:
    """Write ``text`` to a sibling temp file, then rename it over ``path``."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def _json(obj) -> str:
    return json.dumps(obj, indent=2, allow_nan=True) + "\n"


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat()


def _versions() -> dict:
    out = {}
    for pkg in ("artifact", "numpy", "scipy", "networkx"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            out[pkg] = None
    return out


class Outputs:
    """Collects files for one run and writes the manifest last."""

    def __init__(self, out_dir: Path, command: str, cfg: RunConfig):
        self.dir = out_dir
        self.command = command
        self.cfg = cfg
        self.started = _now()
        self.files = {}
        self.extra = {}

    def write(self, name: str, text: str) -> None:
        atomic_write(self.dir / name, text)
        self.files[name] = hashlib.sha256(text.encode()).hexdigest()

    def finish(self) -> None:
        manifest = {"command": self.command, **self.cfg.to_dict(), **self.extra,
                    "outputs": self.files, "versions": _versions(),
                    "timestamps": {"started": self.started, "finished": _now()}}
        atomic_write(self.dir / "manifest.json", _json(manifest))


# -- config handling ------------------------------------------------------------

def _load_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig({})
    if getattr(args, "graph", None):
        cfg.sections.setdefault("graph", {}).clear()
        cfg.set("graph", "file", str(Path(args.graph).resolve()))
    if getattr(args, "seed", None) is not None:
        if cfg.get("graph", "kind") is not None:
            cfg.set("graph", "seed", args.seed)
        cfg.set("simulate", "seed", args.seed)
    eps = getattr(args, "epsilon_backoff", None)
    if eps is not None:
        cfg.set("solver", "epsilon", eps)
    if getattr(args, "runs", None) is not None:
        cfg.set("simulate", "runs", args.runs)
    if getattr(args, "mode", None) is not None:
        cfg.set("simulate", "mode", args.mode)
    if getattr(args, "allocation", None):
        cfg.set("simulate", "allocation", str(Path(args.allocation).resolve()))
    if getattr(args, "compare", False):
        cfg.set("simulate", "compare", "true")
    return cfg


def _out_dir(args, cfg: RunConfig) -> Path:
    return Path(args.out or cfg.get("output", "dir") or ".")


def _epsilon(cfg: RunConfig, delta: np.ndarray) -> float:
    raw = cfg.get("solver", "epsilon")
    if raw is None:
        return 0.0
    if raw.strip() == "auto":
        eps = 1e-3 * float(delta.min())
        cfg.set("solver", "epsilon", repr(eps))  # pin the resolved value
        return eps
    return cfg.number("solver", "epsilon")


def _resolve(cfg: RunConfig):
    g = cfg.graph()
    params, notes = cfg.params(g)
    return g, params, notes


# -- commands -----------------------------------------------------------------

def cmd_allocate(args) -> int:
    cfg = _load_config(args)
    g, params, notes = _resolve(cfg)
    cost = cfg.cost(params)
    params = params.with_kappa(cost.kappa_lower)
    eps = _epsilon(cfg, params.delta)
    inst = assemble_sdp(g, params, cost)
    kwargs = {"method": cfg.get("solver", "method", "barrier"),
              "form": cfg.get("solver", "form", "reduced"), "epsilon": eps}
    for key in ("tol", "gap_tol", "cert_tol"):
        if cfg.get("solver", key) is not None:
            kwargs[key] = cfg.number("solver", key)
    out = Outputs(_out_dir(args, cfg), "allocate", cfg)
    out.extra.update(notes)
    out.extra["cost_model"] = {
        "nodes_violating_half_cbar_rule": int(np.sum(~cost.meets_half_cbar_rule)),
    }
    try:
        result = solve_allocation(inst, **kwargs)
    except AllocationConvergenceError as exc:
        result = exc.best
        result.status = "not_converged"

    out.write("allocation.json", _json(result.to_dict()))
    if not result.solved:
        out.finish()
        print(f"status: {result.status}", file=sys.stderr)
        if result.attainable is not None:
            lam = result.attainable["lambda1_at_kappa_upper"]
            print(f"even kappa_upper leaves lambda1(A - diag(y)) = {lam:.6g} > 0; "
                  "attainable range recorded in allocation.json", file=sys.stderr)
        return EXIT_FAIL

    invest = eval_cost(cost, result.kappa_star)
    rows = ["node,degree,kappa_star,investment"]
    rows += [f"{i},{int(d)},{k!r},{f!r}" for i, (d, k, f) in
             enumerate(zip(g.degrees, result.kappa_star.tolist(), invest.tolist()))]
    out.write("scatter.csv", "\n".join(rows) + "\n")
    rho = float("nan")
    if g.n > 1 and np.ptp(invest) > 0 and np.ptp(g.degrees) > 0:
        rho = float(spearmanr(invest, g.degrees).statistic)
    out.extra["spearman_investment_degree"] = None if np.isnan(rho) else rho
    out.finish()
    print(f"status: {result.status}  total_cost: {result.total_cost:.6g}  "
          f"margin: {result.margin:.3e}  spearman(investment, degree): {rho:.3f}")
    return EXIT_OK


def cmd_threshold(args) -> int:
    cfg = _load_config(args)
    g, params, notes = _resolve(cfg)
    report = spectral_margin(g, params)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", DisconnectedGraphWarning)
        theta = epidemic_threshold_theta(g, params)
    notes_out = [str(w.message) for w in caught if issubclass(w.category, DisconnectedGraphWarning)]
    summary = {"margin": report.margin, "die_out": bool(report.die_out),
               "diag_threshold": report.diag_threshold.tolist(),
               "theta_c": None if np.isinf(theta.theta_c) else theta.theta_c,
               "lambda1_HA": theta.lambda1, "connected": theta.connected,
               "no_transmission": theta.no_transmission, "warnings": notes_out}
    print(f"margin: {report.margin:.6g}")
    print(f"die_out: {str(report.die_out).lower()}")
    print("diag_threshold: " + " ".join(f"{y:.6g}" for y in report.diag_threshold))
    print(f"theta_c: {theta.theta_c:.6g}")
    for note in notes_out:
        print(f"warning: {note}")
    if args.out:
        out = Outputs(Path(args.out), "threshold", cfg)
        out.extra.update(notes)
        out.write("threshold.json", _json(summary))
        out.finish()
    return EXIT_OK if report.die_out else EXIT_FAIL


def _initial_infected(cfg: RunConfig, n: int) -> np.ndarray:
    raw = cfg.get("simulate", "infected", "0")
    try:
        nodes = [int(tok) for tok in raw.replace(",", " ").split()]
    except ValueError:
        raise ConfigError(f"[simulate] infected must list node ids, got {raw!r}") from None
    if any(i < 0 or i >= n for i in nodes):
        raise ConfigError(f"[simulate] infected lists a node outside 0..{n - 1}")
    state = np.full(n, NodeState.SUSCEPTIBLE, dtype=np.int8)
    state[nodes] = NodeState.INFECTED
    return state


def _kappa_runs(cfg: RunConfig, g, params) -> list[tuple[str, object]]:
    """Labelled parameter sets to simulate."""
    alloc_path = cfg.get("simulate", "allocation")
    if alloc_path is None:
        return [("kappa", params)]
    path = Path(alloc_path)
    if not path.exists():
        raise InputError(f"allocation file not found: {path}")
    data = json.loads(path.read_text())
    kappa = np.asarray(data.get("kappa_star", []), dtype=float)
    if kappa.shape != (g.n,) or not np.all(np.isfinite(kappa)):
        raise InputError(f"{path} holds no usable kappa_star for a {g.n}-node graph")
    runs = [("kappa_star", params.with_kappa(kappa))]
    if cfg.get("simulate", "compare", "false") == "true":
        lower = cfg.cost(params).kappa_lower
        runs.insert(0, ("kappa_lower", params.with_kappa(lower)))
    return runs


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    g, params, notes = _resolve(cfg)
    mode = cfg.get("simulate", "mode", "meanfield")
    if mode not in ("meanfield", "gillespie"):
        raise InputError(f"unknown mode {mode!r}")
    runs = _kappa_runs(cfg, g, params)
    out = Outputs(_out_dir(args, cfg), "simulate", cfg)
    out.extra.update(notes)
    results = {}
    for label, prm in runs:
        margin = spectral_margin(g, prm).margin
        if mode == "meanfield":
            t_end = cfg.number("simulate", "t_end", 100.0 / float(prm.delta.min()))
            p0 = cfg.vector("simulate", "p0", g.n, default=0.1)
            init = StateVector(p0, np.zeros(g.n))
            dt = cfg.number("simulate", "dt")
            every = int(cfg.number("simulate", "record_every", 100))
            traj = integrate_mean_field(g, prm, init, t_end, dt=dt, record_every=every)
            out.write(f"trajectory_{label}.csv", traj.to_csv())
            results[label] = {"margin": margin, "max_p_final": float(traj.p[-1].max(initial=0))}
        else:
            init = _initial_infected(cfg, g.n)
            t_max = cfg.number("simulate", "t_max", 100.0 / float(prm.delta.min()))
            seed = int(cfg.number("simulate", "seed", 0))
            count = int(cfg.number("simulate", "runs", 200))
            workers = int(cfg.number("simulate", "workers", 1))
            first = gillespie_run(g, prm, init, t_max, seed)
            out.write(f"events_{label}_seed{seed}.csv", first.to_csv())
            summary = ensemble_extinction(g, prm, init, t_max, count, seed, workers)
            out.write(f"ensemble_{label}.json", summary.to_json())
            results[label] = {"margin": margin, "extinct_fraction": summary.extinct_fraction}
    out.extra["summary"] = results
    out.finish()
    for label, res in results.items():
        print(f"{label}: " + "  ".join(f"{k}={v:.6g}" for k, v in res.items()))
    return EXIT_OK


def cmd_gen_graph(args) -> int:
    try:
        g = generate(args.kind, args.n, args.seed if args.seed is not None else 0,
                     p=args.p, m0=args.m0)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    text = g.to_edge_list()
    if args.out:
        atomic_write(Path(args.out), text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# -- entry point --------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sais-awareness", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_help):
        p.add_argument("--config", help="INI config file or a manifest.json from a previous run")
        p.add_argument("--graph", help="edge-list file; overrides the [graph] section")
        p.add_argument("--seed", type=int, help="seed for generated graphs and simulations")
        p.add_argument("--out", help=out_help)

    p = sub.add_parser("allocate", help="minimum-cost awareness rates with guaranteed die-out")
    common(p, "output directory")
    p.add_argument("--epsilon-backoff", nargs="?", const="auto", metavar="EPS",
                   help="tighten the constraint to lambda1 <= -EPS (default 1e-3 * min delta)")
    p.set_defaults(func=cmd_allocate)

    p = sub.add_parser("threshold", help="spectral margin, die-out verdict and theta_c")
    common(p, "directory for threshold.json and manifest.json")
    p.set_defaults(func=cmd_threshold)

    p = sub.add_parser("simulate", help="mean-field or stochastic simulation")
    common(p, "output directory")
    p.add_argument("--mode", choices=("meanfield", "gillespie"))
    p.add_argument("--runs", type=int, help="number of stochastic runs")
    p.add_argument("--allocation", help="allocation.json whose kappa_star is simulated")
    p.add_argument("--compare", action="store_true",
                   help="with --allocation, also simulate kappa_lower side by side")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("gen-graph", help="write a synthetic graph as an edge list")
    p.add_argument("kind", choices=("complete", "star", "cycle", "path", "erdos_renyi",
                                    "preferential_attachment"))
    p.add_argument("n", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="edge-list path (stdout if omitted)")
    p.add_argument("--p", type=float, default=0.1, help="edge probability (erdos_renyi)")
    p.add_argument("--m0", type=int, default=2, help="edges per new node (preferential_attachment)")
    p.set_defaults(func=cmd_gen_graph)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    try:
        return args.func(args)
    except (InputError, ConfigError, EdgeListError, CostModelError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ValueError as exc:
        # parameter validation in the core modules
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
