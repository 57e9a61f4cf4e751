"""Experiment runner: generate problem bundles, run solvers, compare, verify.

Subcommands: `generate` writes a synthetic problem bundle plus a manifest of
derived constants; `run` executes the configured solver against a bundle and
writes a `samples,agent,gap` trace; `compare` aligns several runs on a shared
sample grid and emits a combined CSV plus an SVG chart; `verify` drives the
invariant and inequality suite against a bundle. Exit codes: 0 success,
1 check failure, 2 usage/config error. All writes stay inside the configured
output directory.
"""

from __future__ import annotations

import argparse
import hashlib
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import analysis, chain as chain_mod, features as features_mod
from . import network, objective, solver
from ._io import read_kv, write_kv, write_matrix_csv, load_matrix_csv
from .chain import MixingEstimate
from .config import ConfigError, ExperimentConfig, format_config, load_config
from .plotsvg import loglog_chart

BUNDLE_FILES = ("chain_P.csv", "chain_rewards.csv", "features.csv",
                "graph_edges.txt", "W.csv")
T1_FLOOR = 512


class CliError(Exception):
    """User-facing failure: bad paths, mismatched bundles, missing files."""


def _suite_seed(cfg: ExperimentConfig, override) -> int:
    return override if override is not None else cfg.problem.seed


def _sub_seeds(seed: int, n: int) -> list[int]:
    return [int(c.generate_state(1)[0]) for c in np.random.SeedSequence(seed).spawn(n)]


def _fingerprint(out_dir: str) -> str:
    h = hashlib.sha256()
    for name in BUNDLE_FILES:
        with open(os.path.join(out_dir, name), "rb") as fh:
            h.update(fh.read())
    return h.hexdigest()


def _build_graph(cfg: ExperimentConfig, seed: int):
    kind = cfg.topology.kind
    if kind == "ring":
        return network.ring(cfg.problem.n_agents)
    if kind == "complete":
        return network.complete(cfg.problem.n_agents)
    return network.erdos_renyi(cfg.problem.n_agents, cfg.topology.p, seed)


def _resolve_t1(cfg: ExperimentConfig, mix: MixingEstimate) -> int:
    """Fixed point of T1 = max(tau(T), floor) with T = (2^K - 1) T1."""
    s = cfg.solver
    if s.algorithm != "dhpd":
        return 0
    if s.T1 != "auto":
        return int(s.T1)
    t1 = T1_FLOOR
    for _ in range(20):
        total = (2 ** s.K - 1) * t1
        tau = analysis.mixing_time_bound(mix.Gamma, mix.rho, 1.0 / total)
        new_t1 = max(tau, T1_FLOOR)
        if new_t1 == t1:
            break
        t1 = new_t1
    return t1


def _solver_horizon(cfg: ExperimentConfig, t1_resolved: int) -> int:
    s = cfg.solver
    if s.algorithm == "dhpd":
        return (2 ** s.K - 1) * t1_resolved
    return int(s.T)


def cmd_generate(cfg: ExperimentConfig, out_dir: str, seed_override=None) -> int:
    os.makedirs(out_dir, exist_ok=True)
    seed = _suite_seed(cfg, seed_override)
    s_chain, s_feat, s_graph = _sub_seeds(seed, 3)
    p = cfg.problem
    chain = chain_mod.random_ergodic_chain(p.n_states, p.n_agents, p.branching,
                                           s_chain, gamma=p.gamma)
    if p.features == "tabular":
        feats = features_mod.tabular_features(p.n_states)
    else:
        feats = features_mod.random_features(p.n_states, p.d, s_feat)
    graph = _build_graph(cfg, s_graph)
    mixing = network.laplacian_mixing(graph)
    model = objective.population_model(chain, feats)
    bounds = features_mod.compute_bounds(feats, chain)
    consts = objective.constants(model, bounds)
    mix = chain_mod.estimate_mixing(chain)
    pi = chain_mod.stationary_distribution(chain)
    t1_resolved = _resolve_t1(cfg, mix)
    horizon = _solver_horizon(cfg, t1_resolved)
    tau = analysis.mixing_time_bound(mix.Gamma, mix.rho, 1.0 / max(horizon, 2))

    with open(os.path.join(out_dir, "config.txt"), "w", newline="\n") as fh:
        fh.write(format_config(cfg))
    write_matrix_csv(os.path.join(out_dir, "chain_P.csv"), chain.P)
    write_matrix_csv(os.path.join(out_dir, "chain_rewards.csv"), chain.rewards)
    write_kv(os.path.join(out_dir, "chain_meta.txt"),
             {"gamma": chain.gamma, "n_states": chain.n_states, "n_agents": chain.n_agents})
    features_mod.save_features(feats, os.path.join(out_dir, "features.csv"))
    network.save_graph(graph, os.path.join(out_dir, "graph_edges.txt"))
    network.save_mixing(mixing, os.path.join(out_dir, "W.csv"))
    objective.save_model(model, os.path.join(out_dir, "model"))
    write_matrix_csv(os.path.join(out_dir, "pi.csv"), pi[None, :])
    manifest = {
        "n_states": p.n_states, "n_agents": p.n_agents, "d": feats.d,
        "gamma": p.gamma, "features": p.features,
        "topology": cfg.topology.kind,
        "sigma2": mixing.sigma2, "spectral_gap": network.spectral_gap(mixing),
        "rho_x": consts.rho_x, "rho_y": consts.rho_y, "rho_cert": consts.rho_cert,
        "G": consts.G, "L": consts.L,
        "beta0": bounds.beta0, "beta1": bounds.beta1, "beta2": bounds.beta2,
        "Gamma": mix.Gamma, "rho": mix.rho, "tau": tau,
        "T1_resolved": t1_resolved,
        "r_x": model.r_x, "r_y": model.r_y,
    }
    write_kv(os.path.join(out_dir, "manifest.txt"), manifest)
    manifest["fingerprint"] = _fingerprint(out_dir)
    write_kv(os.path.join(out_dir, "manifest.txt"), manifest)
    print(f"bundle written to {out_dir}")
    return 0


def _load_bundle(out_dir: str):
    manifest_path = os.path.join(out_dir, "manifest.txt")
    if not os.path.exists(manifest_path):
        raise CliError(f"no bundle in {out_dir}; run `generate` first")
    manifest = read_kv(manifest_path)
    meta = read_kv(os.path.join(out_dir, "chain_meta.txt"))
    chain = chain_mod.PolicyChain(
        P=load_matrix_csv(os.path.join(out_dir, "chain_P.csv")),
        rewards=load_matrix_csv(os.path.join(out_dir, "chain_rewards.csv")),
        gamma=float(meta["gamma"]),
    )
    feats = features_mod.load_features(os.path.join(out_dir, "features.csv"))
    mixing = network.load_mixing(os.path.join(out_dir, "W.csv"))
    model = objective.load_model(os.path.join(out_dir, "model"))
    return manifest, chain, feats, mixing, model


def _trace_paths(cfg: ExperimentConfig, out_dir: str):
    stem = f"trace_{cfg.solver.algorithm}"
    return os.path.join(out_dir, stem + ".csv"), os.path.join(out_dir, stem + ".meta")


def _execute_run(cfg: ExperimentConfig, out_dir: str, seed_override=None) -> str:
    manifest, chain, feats, mixing, model = _load_bundle(out_dir)
    oracle = analysis.make_gap_oracle(model)
    s = cfg.solver
    seed = seed_override if seed_override is not None else s.seed
    growth = cfg.output.checkpoint_density
    consts = objective.ProblemConstants(
        rho_x=float(manifest["rho_x"]), rho_y=float(manifest["rho_y"]),
        G=float(manifest["G"]), L=float(manifest["L"]),
        lambda_reg=0.0, rho_cert=float(manifest["rho_cert"]),
    )
    if s.algorithm == "dhpd":
        t1 = int(manifest["T1_resolved"]) if s.T1 == "auto" else int(s.T1)
        run_cfg = solver.DhpdConfig(eta1=float(s.eta1), T1=t1, K=int(s.K), seed=seed)
        trace = solver.dhpd_run(model, chain, feats, mixing, run_cfg,
                                gap_oracle=oracle, checkpoint_growth=growth,
                                problem_constants=consts,
                                mixing_tau=int(manifest["tau"]))
    elif s.algorithm == "spd_dist":
        trace = solver.spd_run_distributed(model, chain, feats, mixing,
                                           eta=float(s.eta), T=int(s.T), seed=seed,
                                           gap_oracle=oracle, checkpoint_growth=growth)
    else:
        trace = solver.spd_run_centralized(model, chain, feats,
                                           eta=float(s.eta), T=int(s.T), seed=seed,
                                           gap_oracle=oracle, checkpoint_growth=growth)
    csv_path, meta_path = _trace_paths(cfg, out_dir)
    solver.save_trace_csv(trace, csv_path)
    solver.save_trace_meta(trace, meta_path, extra={
        "topology": cfg.topology.kind,
        "sigma2": float(manifest["sigma2"]),
        "fingerprint": manifest["fingerprint"],
    })
    return csv_path


def cmd_run(cfg: ExperimentConfig, out_dir: str, seed_override=None) -> int:
    csv_path = _execute_run(cfg, out_dir, seed_override)
    print(f"trace written to {csv_path}")
    return 0


def _align_runs(runs):
    """Interpolate every run's mean gap onto the shared (union) sample grid."""
    lo = max(xs.min() for _, xs, _ in runs)
    hi = min(xs.max() for _, xs, _ in runs)
    grid = sorted({int(v) for _, xs, _ in runs for v in xs if lo <= v <= hi})
    if not grid:
        raise CliError("runs share no overlapping sample range")
    grid = np.array(grid, dtype=np.int64)
    aligned = []
    for label, xs, ys in runs:
        logy = np.log(np.maximum(ys, 1e-300))
        interp = np.interp(np.log(grid.astype(float)), np.log(xs.astype(float)), logy)
        aligned.append((label, grid, np.exp(interp)))
    return aligned


def cmd_compare(cfgs, cfg_paths, out_dir: str | None, workers: int = 1,
                seed_override=None) -> int:
    if len(cfgs) < 2:
        raise CliError("compare needs at least 2 configs")
    out_dirs = [c.output.directory for c in cfgs]
    target = out_dir if out_dir is not None else out_dirs[0]
    os.makedirs(target, exist_ok=True)

    def ensure(idx: int) -> None:
        csv_path, _ = _trace_paths(cfgs[idx], out_dirs[idx])
        if not os.path.exists(csv_path):
            _execute_run(cfgs[idx], out_dirs[idx], seed_override)

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        list(pool.map(ensure, range(len(cfgs))))

    fingerprints = []
    runs = []
    for cfg, path, odir in zip(cfgs, cfg_paths, out_dirs):
        csv_path, meta_path = _trace_paths(cfg, odir)
        meta = read_kv(meta_path)
        fingerprints.append(meta.get("fingerprint", ""))
        xs, ys = solver.load_trace_csv(csv_path)
        label = os.path.splitext(os.path.basename(path))[0]
        runs.append((f"{label}:{cfg.solver.algorithm}", xs, ys))
    if len(set(fingerprints)) != 1:
        raise CliError("refusing to compare runs over different problem bundles")

    aligned = _align_runs(runs)
    combined = os.path.join(target, "compare.csv")
    with open(combined, "w", newline="\n") as fh:
        fh.write("run,samples,mean_gap\n")
        for label, xs, ys in aligned:
            for x, y in zip(xs, ys):
                fh.write(f"{label},{x},{'%.17g' % y}\n")
    chart = os.path.join(target, "compare.svg")
    loglog_chart(chart, aligned, title="Optimality gap vs samples",
                 xlabel="cumulative samples", ylabel="mean optimality gap")
    print(f"combined CSV written to {combined}")
    print(f"chart written to {chart}")
    return 0


def _verify_records(cfg: ExperimentConfig, out_dir: str, seed: int):
    manifest, chain, feats, mixing, model = _load_bundle(out_dir)
    bounds = features_mod.compute_bounds(feats, chain)
    consts = objective.constants(model, bounds)
    mix = MixingEstimate(Gamma=float(manifest["Gamma"]), rho=float(manifest["rho"]))
    records = []
    rng = np.random.default_rng(seed)
    point = objective.saddle_solution(model)

    # mixing matrix stochasticity (revalidated on load; recorded here)
    row_err = float(np.abs(mixing.W.sum(axis=1) - 1.0).max())
    col_err = float(np.abs(mixing.W.sum(axis=0) - 1.0).max())
    records.append(analysis.CheckRecord("mixing_row_sums", -1, -1, row_err, 1e-12,
                                        row_err <= 1e-12))
    records.append(analysis.CheckRecord("mixing_col_sums", -1, -1, col_err, 1e-12,
                                        col_err <= 1e-12))

    # Fenchel equality at random primal points
    worst = 0.0
    for _ in range(200):
        x = solver.project_ball(rng.standard_normal(model.d) * model.r_x, model.r_x)
        y_best = analysis.best_response_duals(model, x)
        for j in range(model.n_agents):
            gap = abs(objective.psi(model, j, x, y_best[j]) - objective.local_mspbe(model, j, x))
            worst = max(worst, gap)
    records.append(analysis.CheckRecord("fenchel_equality", -1, -1, worst, 1e-8,
                                        worst <= 1e-8))

    # analytic vs central finite-difference gradients
    h = 1e-6
    worst_rel = 0.0
    for _ in range(100):
        x = solver.project_ball(rng.standard_normal(model.d) * model.r_x, model.r_x)
        y = solver.project_ball(rng.standard_normal(model.d) * model.r_y, model.r_y)
        j = int(rng.integers(model.n_agents))
        g_x, g_y = objective.psi_gradients(model, j, x, y)
        num_x = np.empty_like(g_x)
        num_y = np.empty_like(g_y)
        for i in range(model.d):
            e = np.zeros(model.d)
            e[i] = h
            num_x[i] = (objective.psi(model, j, x + e, y) - objective.psi(model, j, x - e, y)) / (2 * h)
            num_y[i] = (objective.psi(model, j, x, y + e) - objective.psi(model, j, x, y - e)) / (2 * h)
        denom = max(1.0, float(np.linalg.norm(g_x)), float(np.linalg.norm(g_y)))
        rel = max(float(np.linalg.norm(num_x - g_x)), float(np.linalg.norm(num_y - g_y))) / denom
        worst_rel = max(worst_rel, rel)
    records.append(analysis.CheckRecord("gradient_finite_difference", -1, -1,
                                        worst_rel, 1e-5, worst_rel <= 1e-5))

    # stochastic-gradient unbiasedness on iid stationary draws
    n_mc = 200_000
    data = chain_mod.stationary_dataset(chain, n_mc, seed + 17)
    x = solver.project_ball(rng.standard_normal(model.d), model.r_x)
    y = solver.project_ball(rng.standard_normal(model.d), model.r_y)
    j = int(rng.integers(model.n_agents))
    Ps = feats.Phi[data.s]
    Pn = feats.Phi[data.s_next]
    u = Ps @ y
    gx_samples = u[:, None] * (Ps - model.gamma * Pn)
    gy_samples = ((Ps - model.gamma * Pn) @ x - data.rewards[:, j] - u)[:, None] * Ps
    g_x, g_y = objective.psi_gradients(model, j, x, y)
    worst_z = 0.0
    for samples, target in ((gx_samples, g_x), (gy_samples, g_y)):
        mean = samples.mean(axis=0)
        se = samples.std(axis=0, ddof=1) / math.sqrt(n_mc)
        worst_z = max(worst_z, float(np.max(np.abs(mean - target) / np.maximum(se, 1e-15))))
    records.append(analysis.CheckRecord("gradient_unbiasedness", -1, -1,
                                        worst_z, 3.5, worst_z <= 3.5))

    # inequality suites
    records.extend(analysis.verify_lemma2(100, seed + 1))
    for T in (10, 100, 1000):
        records.extend(analysis.verify_lemma3(M=1.0, T=T, trials=1000, seed=seed + T))

    # small logged run drives the run-dependent verifiers
    run_cfg = solver.DhpdConfig(eta1=0.1, T1=128, K=3, seed=seed + 2)
    trace = solver.dhpd_run(model, chain, feats, mixing, run_cfg,
                            gap_oracle=analysis.make_gap_oracle(model),
                            log_iterates=True)
    records.extend(analysis.verify_schedule(trace))
    records.extend(analysis.verify_lemma1(trace, model, mixing.sigma2, consts.G))
    records.extend(analysis.verify_gap_ordering(model, trace))
    records.extend(analysis.verify_quadratic_growth(model, trace, consts))
    records.extend(analysis.verify_gap_decomposition(model, trace, consts.G))
    records.extend(analysis.verify_mixing_consistency(chain, mix))

    # saddle point stays interior
    records.append(analysis.CheckRecord(
        "saddle_interior", -1, -1,
        float(np.linalg.norm(point.x)), model.r_x,
        bool(np.linalg.norm(point.x) <= model.r_x)))
    return records


def cmd_verify(cfg: ExperimentConfig, out_dir: str, seed_override=None) -> int:
    seed = _suite_seed(cfg, seed_override)
    report_csv = os.path.join(out_dir, "verify_report.csv")
    report_txt = os.path.join(out_dir, "verify_report.txt")
    try:
        records = _verify_records(cfg, out_dir, seed)
    except objective.ModelAssumptionError as exc:
        os.makedirs(out_dir, exist_ok=True)
        records = [analysis.CheckRecord("model_assumptions", -1, -1, 0.0, 0.0, False)]
        analysis.save_report_csv(records, report_csv)
        with open(report_txt, "w", newline="\n") as fh:
            fh.write(f"FAIL model_assumptions: {exc}\n")
        print(f"FAIL model_assumptions: {exc}", file=sys.stderr)
        return 1
    analysis.save_report_csv(records, report_csv)
    text = analysis.format_report(records)
    with open(report_txt, "w", newline="\n") as fh:
        fh.write(text + "\n")
    print(text)
    return 0 if analysis.all_passed(records) else 1


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="saddletd",
        description="Multi-agent TD policy evaluation: synthetic problems, "
                    "distributed primal-dual solvers, verification suite.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("generate", "run", "verify"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="experiment config path")
        sp.add_argument("--out", help="override output.directory")
        sp.add_argument("--seed", type=int, help="override the relevant seed")
    sp = sub.add_parser("compare")
    sp.add_argument("configs", nargs="+", help="config paths of the runs to compare")
    sp.add_argument("--out", help="directory for compare.csv / compare.svg")
    sp.add_argument("--seed", type=int, help="override solver seeds for missing runs")
    sp.add_argument("--workers", type=int, default=1,
                    help="thread pool size for executing missing runs")
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "compare":
            cfgs = [load_config(p) for p in args.configs]
            return cmd_compare(cfgs, args.configs, args.out, workers=args.workers,
                               seed_override=args.seed)
        cfg = load_config(args.config)
        out_dir = args.out if args.out is not None else cfg.output.directory
        if args.command == "generate":
            return cmd_generate(cfg, out_dir, args.seed)
        if args.command == "run":
            return cmd_run(cfg, out_dir, args.seed)
        return cmd_verify(cfg, out_dir, args.seed)
    except (ConfigError, CliError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
