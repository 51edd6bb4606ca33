"""Experiment runner: configuration, seeding, replicate orchestration, outputs.

Every experiment is a pure function of (TOML config, master seed): replicates
draw from streams keyed by the replicate index, chunked batches by the chunk
index, so serial and parallel runs emit byte-identical CSV bodies.  Each run
writes a manifest (config hash, seed, outputs) sufficient to reproduce it.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from .batch import run_envelope_batch
from .coupling import run_modified_coupling, run_standard_coupling
from .envelope import brw_run, envelope_stats
from .epidemic import EpidemicParams, EpidemicState, epidemic_run
from .extent import ExitSolverError, exit_probability, solve_exit_ode, DEFAULT_CURVATURE
from .fields import ParticleField
from .graphs import build_graph, graph_epidemic
from .likelihood import loglik
from .meanfield import (feller_em, reedfrost_run, sis_meanfield_run,
                        wiener_passage)
from .moments import mc_moment_table, moment
from .offspring import poisson_limit, village_binomial
from .profiles import init_profile, spread_block
from .rng import KeyedStreams, keyed_generator, stable_key

KINDS = ("envelope", "epidemic", "coupling", "likelihood", "meanfield",
         "moments", "extent", "graphs", "sweep")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    kind: str
    seed: int = 1
    replicates: int = 100
    out_dir: str = "out"
    threads: int = 1
    params: dict = field(default_factory=dict)

    def validate(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}")
        if self.seed < 0:
            raise ConfigError("seed must be a nonnegative integer")
        if self.replicates < 0:
            raise ConfigError("replicates must be >= 0")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        alpha = self.params.get("alpha")
        if alpha is not None and not 0.0 < float(alpha) <= 1.0:
            raise ConfigError("alpha must lie in (0, 1]")
        for key in ("N", "max_gens", "length"):
            if key in self.params and int(self.params[key]) < 1:
                raise ConfigError(f"{key} must be positive")
        variant = self.params.get("variant")
        if variant is not None and variant not in ("sis", "sir"):
            raise ConfigError("variant must be 'sis' or 'sir'")

    def canonical(self) -> str:
        return json.dumps(
            {"kind": self.kind, "seed": self.seed, "replicates": self.replicates,
             "threads": self.threads, "params": self.params},
            sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()


def load_config(path: str | Path) -> ExperimentConfig:
    with open(path, "rb") as fh:
        raw = tomllib.load(fh)
    known = {"kind", "seed", "replicates", "out_dir", "threads", "params"}
    extra = set(raw) - known
    if extra:
        raise ConfigError(f"unknown config keys: {sorted(extra)}")
    if "kind" not in raw:
        raise ConfigError("config must set 'kind'")
    return ExperimentConfig(
        kind=str(raw["kind"]),
        seed=int(raw.get("seed", 1)),
        replicates=int(raw.get("replicates", 100)),
        out_dir=str(raw.get("out_dir", "out")),
        threads=int(raw.get("threads", 1)),
        params=dict(raw.get("params", {})),
    )


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    return str(v)


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _law_from_params(params: dict):
    law = params.get("law", "poisson")
    if law == "poisson":
        return poisson_limit()
    if law == "binomial":
        return village_binomial(int(params["N"]))
    raise ConfigError(f"unknown offspring law {law!r}")


def _init_field(params: dict) -> ParticleField:
    return init_profile(params.get("init", "point(0, 1)"), k=params.get("k"))


def _map_replicates(cfg: ExperimentConfig, fn):
    """fn(replicate index) -> row list; deterministic order, optional threads."""
    reps = range(cfg.replicates)
    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as ex:
            return list(ex.map(fn, reps))
    return [fn(r) for r in reps]


def _summary_stats(values: np.ndarray) -> dict:
    if values.size == 0:
        return {"n": 0}
    mean = float(np.mean(values))
    se = float(np.std(values, ddof=1) / math.sqrt(values.size)) if values.size > 1 else 0.0
    return {"n": int(values.size), "mean": mean, "se": se}


# -- experiment bodies ----------------------------------------------------------

def _run_envelope(cfg: ExperimentConfig, out: Path) -> dict:
    p = cfg.params
    law = _law_from_params(p)
    init = _init_field(p)
    cap = int(p.get("max_gens", 50 * max(init.total, 1)))
    export_traj = bool(p.get("export_trajectories", cfg.replicates <= 200))
    stats_rows = []
    traj_rows = []

    def one(r: int):
        rng = keyed_generator(cfg.seed, "rep", r)
        traj = brw_run(init, law, rng, cap)
        st = envelope_stats(traj)
        rows = []
        if export_traj:
            for t, fld in enumerate(traj.fields):
                for x, c in fld.items():
                    rows.append((r, t, x, c))
        return (r, st.duration, st.total_progeny, st.extent, st.max_site_count,
                int(st.lower_bounds)), rows

    for srow, trows in _map_replicates(cfg, one):
        stats_rows.append(srow)
        traj_rows.extend(trows)
    _write_csv(out / "stats.csv",
               ["replicate", "duration", "total_progeny", "extent",
                "max_site_count", "truncated"], stats_rows)
    files = ["stats.csv"]
    if export_traj:
        _write_csv(out / "trajectories.csv", ["replicate", "t", "x", "count"], traj_rows)
        files.append("trajectories.csv")
    snap_k = p.get("snapshot_k")
    if snap_k and cfg.replicates:
        # rescaled density snapshots of replicate 0 on the grid Z/sqrt(k)
        from .rescale import density_snapshot
        k = int(snap_k)
        rng = keyed_generator(cfg.seed, "rep", 0)
        traj = brw_run(init, law, rng, cap)
        rows = []
        for t, fld in enumerate(traj.fields):
            snap = density_snapshot(fld, k, n=t)
            for x in sorted(snap.grid):
                rows.append((snap.t, x, snap.grid[x]))
        _write_csv(out / "density.csv", ["t", "x", "density"], rows)
        files.append("density.csv")
    tp = np.array([r[2] for r in stats_rows], dtype=float)
    du = np.array([r[1] for r in stats_rows], dtype=float)
    return {"files": files, "total_progeny": _summary_stats(tp),
            "duration": _summary_stats(du),
            "units": {"duration": "generations", "total_progeny": "particles",
                      "extent": "lattice sites"}}


def _run_epidemic(cfg: ExperimentConfig, out: Path) -> dict:
    p = cfg.params
    N = int(p.get("N", 100))
    variant = p.get("variant", "sis")
    params = EpidemicParams(N, variant)
    init_field_ = _init_field(p)
    if any(c > N for c in init_field_.counts.values()):
        raise ConfigError("initial infected exceed village capacity")
    cap = int(p.get("max_gens", 50 * max(init_field_.total, 1)))
    export_traj = bool(p.get("export_trajectories", cfg.replicates <= 200))
    stats_rows, traj_rows = [], []

    def one(r: int):
        rng = keyed_generator(cfg.seed, "rep", r)
        init = EpidemicState(N, dict(init_field_.counts))
        run = epidemic_run(init, params, rng, cap)
        rows = []
        if export_traj:
            for t, st in enumerate(run.trajectory):
                for x in sorted(set(st.I) | set(st.R)):
                    rows.append((r, t, x, st.I.get(x, 0), st.R.get(x, 0)))
        return (r, run.duration, run.size, run.extent, int(run.truncated)), rows

    for srow, trows in _map_replicates(cfg, one):
        stats_rows.append(srow)
        traj_rows.extend(trows)
    _write_csv(out / "stats.csv",
               ["replicate", "duration", "size", "extent", "truncated"], stats_rows)
    files = ["stats.csv"]
    if export_traj:
        _write_csv(out / "trajectories.csv", ["replicate", "t", "x", "I", "R"], traj_rows)
        files.append("trajectories.csv")
    sizes = np.array([r[2] for r in stats_rows], dtype=float)
    return {"files": files, "size": _summary_stats(sizes),
            "units": {"size": "infections", "duration": "generations"}}


def _run_coupling(cfg: ExperimentConfig, out: Path) -> dict:
    p = cfg.params
    N = int(p.get("N", 100))
    variant = p.get("variant", "sis")
    mode = p.get("coupling", "modified")
    law = _law_from_params(p) if "law" in p else poisson_limit()
    init = _init_field(p)
    cap = int(p.get("max_gens", 50 * max(init.total, 1)))
    export_traj = bool(p.get("export_trajectories", cfg.replicates <= 200))
    runner = run_standard_coupling if mode == "standard" else run_modified_coupling
    field_rows, attr_rows, stats_rows = [], [], []

    def one(r: int):
        rng = keyed_generator(cfg.seed, "rep", r)
        run = runner(init, N, variant, rng, cap, law)
        frows, arows = [], []
        if export_traj:
            for t, fld in enumerate(run.trajectory):
                for x in sorted(set(fld.red) | set(fld.blue)):
                    frows.append((r, t, x, fld.red.get(x, 0), fld.blue.get(x, 0)))
        for t, b in enumerate(run.attrition.per_generation, start=1):
            arows.append((r, t, b))
        return (r, run.red_duration, run.red_total_size, run.envelope_total_size,
                run.attrition.total, run.clamp_events, int(run.truncated)), frows, arows

    for srow, frows, arows in _map_replicates(cfg, one):
        stats_rows.append(srow)
        field_rows.extend(frows)
        attr_rows.extend(arows)
    _write_csv(out / "stats.csv",
               ["replicate", "red_duration", "red_total", "envelope_total",
                "attrition_total", "clamp_events", "truncated"], stats_rows)
    _write_csv(out / "attrition.csv", ["replicate", "t", "blue_from_red"], attr_rows)
    files = ["stats.csv", "attrition.csv"]
    if export_traj:
        _write_csv(out / "fields.csv", ["replicate", "t", "x", "red", "blue"], field_rows)
        files.append("fields.csv")
    at = np.array([r[4] for r in stats_rows], dtype=float)
    return {"files": files, "attrition_total": _summary_stats(at)}


def _run_likelihood(cfg: ExperimentConfig, out: Path) -> dict:
    p = cfg.params
    N = int(p.get("N", 50))
    variant = p.get("variant", "sis")
    alpha = float(p.get("alpha", 1.0))
    init = _init_field(p)
    cap = int(p.get("max_gens", 256))
    law = poisson_limit()

    def one(r: int):
        rng = keyed_generator(cfg.seed, "rep", r)
        traj = brw_run(init, law, rng, cap)
        res = loglik(traj, N, variant, alpha)
        d = res.diagnostics
        if variant == "sis":
            return (r, res.loglik, d["a_sum"], d["b_sum"], d["c_sum"],
                    int(res.flagged), res.clamp_events)
        return (r, res.loglik, d["delta_rho_sum"], d["quad_sum"],
                int(res.flagged), res.clamp_events)

    rows = _map_replicates(cfg, one)
    if variant == "sis":
        header = ["replicate", "logL", "a_sum", "b_sum", "c_sum", "flagged", "clamps"]
    else:
        header = ["replicate", "logL", "delta_rho_sum", "quad_sum", "flagged", "clamps"]
    _write_csv(out / "loglik.csv", header, rows)
    lik = np.exp(np.array([r[1] for r in rows], dtype=float))
    return {"files": ["loglik.csv"], "mean_likelihood": _summary_stats(lik)}


def _run_meanfield(cfg: ExperimentConfig, out: Path) -> dict:
    p = cfg.params
    model = p.get("model", "reedfrost")
    rows = []
    if model == "reedfrost":
        N, J0 = int(p.get("N", 10_000)), int(p.get("J0", 1))

        def one(r: int):
            rng = keyed_generator(cfg.seed, "rep", r)
            run = reedfrost_run(N, J0, rng)
            return (r, run.total_infected, run.duration)

        rows = _map_replicates(cfg, one)
        header = ["replicate", "total_infected", "duration"]
    elif model == "sis":
        N, J0 = int(p.get("N", 10_000)), int(p.get("J0", 1))
        cap = int(p.get("max_gens", 10 * N))

        def one(r: int):
            rng = keyed_generator(cfg.seed, "rep", r)
            run = sis_meanfield_run(N, J0, rng, cap)
            return (r, run.total_infected, run.duration)

        rows = _map_replicates(cfg, one)
        header = ["replicate", "cumulative_infected", "duration"]
    elif model == "feller":
        b = float(p.get("b", 1.0))
        drift = p.get("drift", "none")
        dt = float(p.get("dt", 1e-3))
        horizon = float(p.get("horizon", 1.0))

        def one(r: int):
            rng = keyed_generator(cfg.seed, "rep", r)
            path = feller_em(b, drift, dt, horizon, rng)
            return (r, float(path.values[-1]), int(path.absorbed))

        rows = _map_replicates(cfg, one)
        header = ["replicate", "value_at_horizon", "absorbed"]
    elif model == "wiener":
        b = float(p.get("b", 1.0))
        drift = p.get("drift", "none")
        dt = float(p.get("dt", 1e-4))
        horizon = float(p.get("horizon", 100.0))

        def one(r: int):
            rng = keyed_generator(cfg.seed, "rep", r)
            s = wiener_passage(b, drift, dt, rng, horizon)
            return (r, s.tau, int(s.censored))

        rows = _map_replicates(cfg, one)
        header = ["replicate", "tau", "censored"]
    else:
        raise ConfigError(f"unknown mean-field model {model!r}")
    _write_csv(out / "samples.csv", header, rows)
    vals = np.array([r[1] for r in rows], dtype=float)
    return {"files": ["samples.csv"], "value": _summary_stats(vals)}


def _run_moments(cfg: ExperimentConfig, out: Path) -> dict:
    p = cfg.params
    n_max = int(p.get("n_max", 4))
    x_max = int(p.get("x_max", 2))
    m_max = int(p.get("m_max", 2))
    law = _law_from_params(p)
    reps = int(p.get("mc_reps", cfg.replicates or 10_000))
    table = mc_moment_table(n_max, x_max, m_max, law, reps, cfg.seed)
    rows = []
    for n in range(1, n_max + 1):
        for x in range(-x_max, x_max + 1):
            for m in range(1, m_max + 1):
                est, se = table[(n, x, m)]
                rows.append((n, x, m, float(moment(n, x, m, law)), est, se))
    _write_csv(out / "moments.csv", ["n", "x", "m", "exact", "mc", "se"], rows)
    worst = max(abs(r[3] - r[4]) / max(r[5], 1e-300) for r in rows)
    return {"files": ["moments.csv"], "worst_z": worst}


def _parse_masses(s: str) -> list[tuple[float, float]]:
    out = []
    for part in s.split(","):
        x, m = part.split(":")
        out.append((float(x), float(m)))
    return out


def _run_extent(cfg: ExperimentConfig, out: Path) -> dict:
    p = cfg.params
    a = float(p.get("a", 1.0))
    c = float(p.get("c", DEFAULT_CURVATURE))
    masses = p.get("masses", "")
    pairs = _parse_masses(masses) if isinstance(masses, str) and masses else [
        (float(x), float(m)) for x, m in masses] if masses else []
    prof = solve_exit_ode(a, c)
    res = exit_probability(pairs, a, c, profile=prof)
    payload = {"a": a, "c": c,
               "u_values": res.u_values,
               "probability": res.probability,
               "outside_support": res.outside_support,
               "u_min": prof.u_min}
    (out / "extent.json").write_text(json.dumps(payload, sort_keys=True, indent=2))
    print(json.dumps(payload, sort_keys=True))
    return {"files": ["extent.json"], **payload}


def _run_graphs(cfg: ExperimentConfig, out: Path) -> dict:
    p = cfg.params
    N = int(p.get("N", 10))
    length = int(p.get("length", 20))
    variant = p.get("variant", "sir")
    init_vertices = {(int(p.get("init_site", length // 2)), j)
                     for j in range(int(p.get("init_count", 1)))}
    edge_rows, gen_rows = [], []

    def one(r: int):
        streams = KeyedStreams(stable_key(cfg.seed, "rep", r))
        g = build_graph(N, length, variant, streams=streams)
        gens = graph_epidemic(g, init_vertices, max_gens=int(p.get("max_gens", 10_000)))
        erows = []
        if variant == "sir":
            for e in sorted(g.edges, key=lambda e: sorted(e)):
                (x1, i1), (x2, i2) = sorted(e)
                erows.append((r, x1, i1, x2, i2))
        grows = []
        for t, s in enumerate(gens):
            for (x, i) in sorted(s):
                grows.append((r, t, x, i))
        return erows, grows

    for erows, grows in _map_replicates(cfg, one):
        edge_rows.extend(erows)
        gen_rows.extend(grows)
    files = []
    if variant == "sir":
        _write_csv(out / "edges.csv", ["replicate", "x1", "i1", "x2", "i2"], edge_rows)
        files.append("edges.csv")
    _write_csv(out / "generations.csv", ["replicate", "t", "x", "individual"], gen_rows)
    files.append("generations.csv")
    return {"files": files}


def _run_sweep(cfg: ExperimentConfig, out: Path) -> dict:
    """Attrition table over (variant, alpha, N): the threshold-effect summary."""
    p = cfg.params
    variant = p.get("variant", "sis")
    alphas = [float(a) for a in p.get("alphas", [2.0 / 3.0, 1.0 / 3.0])]
    Ns = [int(n) for n in p.get("Ns", [1000, 10_000])]
    reps = cfg.replicates or 1000
    cap_mult = int(p.get("cap_multiplier", 12))
    rows = []
    for alpha in alphas:
        for N in Ns:
            K = math.ceil(N**alpha)
            sites = max(1, round(N ** (alpha / 2)))
            init = spread_block(K, sites)
            cap = cap_mult * K
            res = run_envelope_batch(
                init, poisson_limit(), reps, cfg.seed,
                purpose=f"sweep-{variant}-{alpha}-{N}", cap=cap,
                village_N=N, q_process=variant, threads=cfg.threads)
            dur = np.maximum(res.duration, 1)
            per_gen = res.attrition_total / dur
            rows.append((variant, alpha, N, K, sites, reps,
                         float(np.mean(per_gen)),
                         float(np.std(per_gen, ddof=1) / math.sqrt(reps)),
                         float(np.mean(res.attrition_total)),
                         float(np.std(res.attrition_total, ddof=1) / math.sqrt(reps)),
                         float(np.mean(res.attrition_total) / N**alpha),
                         int(res.truncated.sum())))
    _write_csv(out / "attrition_table.csv",
               ["variant", "alpha", "N", "initial", "sites", "replicates",
                "mean_per_gen_attrition", "se_per_gen",
                "mean_total_attrition", "se_total",
                "total_attrition_over_N_alpha", "truncated"], rows)
    return {"files": ["attrition_table.csv"], "rows": len(rows)}


_RUNNERS = {
    "envelope": _run_envelope,
    "epidemic": _run_epidemic,
    "coupling": _run_coupling,
    "likelihood": _run_likelihood,
    "meanfield": _run_meanfield,
    "moments": _run_moments,
    "extent": _run_extent,
    "graphs": _run_graphs,
    "sweep": _run_sweep,
}


def run_experiment(cfg: ExperimentConfig) -> dict:
    """Execute one experiment; writes outputs plus manifest, returns the summary."""
    cfg.validate()
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary = _RUNNERS[cfg.kind](cfg, out)
    manifest = {
        "kind": cfg.kind,
        "seed": cfg.seed,
        "replicates": cfg.replicates,
        "threads": cfg.threads,
        "params": cfg.params,
        "config_hash": cfg.config_hash(),
        "version": __version__,
        "outputs": summary.get("files", []),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=2))
    (out / "summary.json").write_text(json.dumps(summary, sort_keys=True, indent=2,
                                                 default=float))
    return summary


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="latticeepi",
                                 description="critical lattice epidemic experiments")
    sub = ap.add_subparsers(dest="kind", required=True)
    for kind in KINDS:
        sp = sub.add_parser(kind)
        sp.add_argument("--config", type=str, default=None)
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--reps", type=int, default=None)
        sp.add_argument("--out", type=str, default=None)
        sp.add_argument("--threads", type=int, default=None)
        if kind == "extent":
            sp.add_argument("--a", type=float, default=None)
            sp.add_argument("--masses", type=str, default=None)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.config:
            cfg = load_config(args.config)
            if cfg.kind != args.kind:
                raise ConfigError(
                    f"config kind {cfg.kind!r} does not match subcommand {args.kind!r}")
        else:
            cfg = ExperimentConfig(kind=args.kind)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.reps is not None:
            cfg.replicates = args.reps
        if args.out is not None:
            cfg.out_dir = args.out
        if args.threads is not None:
            cfg.threads = args.threads
        if args.kind == "extent":
            if getattr(args, "a", None) is not None:
                cfg.params["a"] = args.a
            if getattr(args, "masses", None) is not None:
                cfg.params["masses"] = args.masses
        cfg.validate()
    except (ConfigError, OSError, tomllib.TOMLDecodeError, KeyError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    try:
        run_experiment(cfg)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except (ExitSolverError, FloatingPointError, np.linalg.LinAlgError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
