"""Command-line pipeline: generate, reconstruct, sample, compare, bench-scaling.

Every subcommand takes ``--config FILE.json`` and ``--out DIR``. Outputs are
plain TSV/JSON plus a ``manifest.json`` recording the config, seed,
versions, input hashes, per-phase timings and the output inventory.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
failure.
"""

import argparse
import hashlib
import json
import logging
import os
import platform
import sys
import time
from contextlib import contextmanager

import numpy as np

from . import __version__
from .config import load_config
from .estimators import (
    mi_bound_violations,
    mp_estimate,
    pairwise_baselines,
    pearson_bound_violations,
    read_marginals,
    threshold_reconstruction_compare,
    top_pairs,
    write_diagnostics,
    write_marginals,
)
from .estimator import sample_posterior
from .exceptions import ConfigError, DataError, DomainError, NumericalError
from .graph import read_edge_list, write_edge_list, write_node_params
from .models import read_dataset, write_dataset
from .posterior import ReconstructionPosterior
from .sampler import ProposalConfig, greedy_map

__all__ = ["main", "build_parser"]


EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERICAL = 0, 2, 3, 4


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


class Manifest:
    """Collects what a run read, wrote and how long each phase took."""

    def __init__(self, command, cfg, out_dir):
        self.out_dir = out_dir
        self.doc = {
            "command": command,
            "config": cfg,
            "seed": cfg.get("seed"),
            "versions": {
                "netpost": __version__,
                "python": platform.python_version(),
                "numpy": np.__version__,
            },
            "inputs": {},
            "timings": {},
            "outputs": {},
        }

    def input(self, path):
        self.doc["inputs"][path] = _sha256(path)

    def output(self, name):
        path = os.path.join(self.out_dir, name)
        self.doc["outputs"][name] = _sha256(path)
        return path

    @contextmanager
    def phase(self, name):
        t0 = time.perf_counter()
        yield
        self.doc["timings"][name] = round(time.perf_counter() - t0, 6)

    def write(self, **extra):
        self.doc.update(extra)
        with open(os.path.join(self.out_dir, "manifest.json"), "w", encoding="utf-8") as f:
            json.dump(self.doc, f, indent=1, sort_keys=True)


def _path(out, name):
    return os.path.join(out, name)


def _read_data(cfg, man):
    path = cfg["dataset"]
    if not os.path.exists(path):
        raise DataError(f"dataset not found: {path}")
    man.input(path)
    return read_dataset(path)


def _posterior_kwargs(cfg):
    return dict(cfg.get("prior", {}))


# -- subcommands --------------------------------------------------------------


def cmd_generate(cfg, out):
    from .synthetic import make_instance

    man = Manifest("generate", cfg, out)
    keys = ("avg_degree", "w_mean", "w_sd", "groups", "mu", "theta", "mode", "graph")
    kw = {k: cfg[k] for k in keys if k in cfg}
    model = cfg["model"]
    if model == "gaussian":
        kw.setdefault("theta", 1.0)
    with man.phase("generate"):
        inst = make_instance(cfg["N"], cfg["M"], model=model, seed=cfg.get("seed", 0), **kw)
    write_edge_list(_path(out, "truth.tsv"), inst.truth)
    man.output("truth.tsv")
    write_node_params(_path(out, "truth_theta.tsv"), inst.truth.node_params)
    man.output("truth_theta.tsv")
    write_dataset(_path(out, "dataset.csv"), inst.data, model)
    man.output("dataset.csv")
    man.write(meta=inst.meta)


def cmd_reconstruct(cfg, out):
    man = Manifest("reconstruct", cfg, out)
    data = _read_data(cfg, man)
    pcfg = ProposalConfig(**cfg.get("proposal", {}))
    with man.phase("greedy"):
        target = ReconstructionPosterior(data, cfg["model"], **_posterior_kwargs(cfg))
        typical, info = greedy_map(target, pcfg, cfg.get("seed", 0))
    write_edge_list(_path(out, "map.tsv"), target.graph)
    man.output("map.tsv")
    write_node_params(_path(out, "map_theta.tsv"), target.graph.node_params)
    man.output("map_theta.tsv")
    with open(_path(out, "typical.tsv"), "w", encoding="utf-8") as f:
        for i, j in typical.sorted_pairs():
            f.write(f"{i}\t{j}\n")
    man.output("typical.tsv")
    with open(_path(out, "trace.json"), "w", encoding="utf-8") as f:
        json.dump({"log_prob": info["log_prob_trace"]}, f)
    man.output("trace.json")
    man.write(iterations=info["iterations"], converged=info["converged"], n_edges=target.graph.n_edges)


def _map_vs_mp(cfg, out, man):
    from .experiments import map_vs_mp

    proto = cfg["protocol"]
    man.input(proto["truth"])
    truth = read_edge_list(proto["truth"])
    pcfg = ProposalConfig(**cfg.get("proposal", {}))
    with man.phase("map-vs-mp"):
        rows = map_vs_mp(
            truth, proto.get("M", [25, 50, 100, 200, 400]), proto.get("seeds", list(range(10))),
            model=cfg["model"], mode=proto.get("mode", "chain"), n_sweeps=cfg.get("sweeps", 200),
            burn_in=cfg.get("burn_in", 50), cfg=pcfg, posterior_kwargs=_posterior_kwargs(cfg),
        )
    with open(_path(out, "map_vs_mp.tsv"), "w", encoding="utf-8") as f:
        f.write("M\tseed\ts_map\ts_mp\tE_map\tE_mp\n")
        for r in rows:
            f.write(f"{r['M']}\t{r['seed']}\t{r['s_map']:.17g}\t{r['s_mp']:.17g}\t{r['E_map']}\t{r['E_mp']}\n")
    man.output("map_vs_mp.tsv")
    man.write()


def cmd_sample(cfg, out):
    man = Manifest("sample", cfg, out)
    if "protocol" in cfg:
        return _map_vs_mp(cfg, out, man)
    data = _read_data(cfg, man)
    ref = None
    if "reference" in cfg:
        man.input(cfg["reference"])
        ref = read_edge_list(cfg["reference"], n_nodes=data.n_nodes)
    pcfg = ProposalConfig(**cfg.get("proposal", {}))
    cond = cfg.get("conditional_mean", False)
    with man.phase("sample"):
        res = sample_posterior(
            data, cfg["model"], pcfg, n_sweeps=cfg.get("sweeps", 200), burn_in=cfg.get("burn_in", 50),
            thin=cfg.get("thin", 1), n_chains=cfg.get("chains", 1), seed=cfg.get("seed", 0),
            n_jobs=cfg.get("threads", 1), reference=ref, posterior_kwargs=_posterior_kwargs(cfg),
            snapshots=cfg.get("snapshots", False),
        )
    acc = res["accumulator"]
    with man.phase("write"):
        write_edge_list(_path(out, "map.tsv"), res["map"])
        man.output("map.tsv")
        write_marginals(_path(out, "marginals.tsv"), acc, cond)
        man.output("marginals.tsv")
        write_edge_list(_path(out, "mp.tsv"), mp_estimate(acc, cond))
        man.output("mp.tsv")
        for c, trace in enumerate(res["similarity"]):
            name = f"diagnostics_chain{c}.json"
            write_diagnostics(_path(out, name), trace)
            man.output(name)
        for c, snaps in enumerate(res["snapshots"]):
            if snaps:
                _write_snapshots(out, c, snaps, man)
    man.write(move_stats=[{k: list(v) for k, v in s.items()} for s in res["stats"]])


def _write_snapshots(out, chain, snaps, man):
    sub = os.path.join("samples", f"chain{chain}")
    os.makedirs(_path(out, sub), exist_ok=True)
    index = []
    for s in snaps:
        name = os.path.join(sub, f"sample_{s['sweep']:06d}.tsv")
        with open(_path(out, name), "w", encoding="utf-8") as f:
            for i, j, w in s["edges"]:
                f.write(f"{i}\t{j}\t{w:.17g}\n")
        man.output(name)
        meta = {k: v for k, v in s.items() if k != "edges"}
        meta["file"] = name
        index.append(meta)
    name = os.path.join(sub, "samples.json")
    with open(_path(out, name), "w", encoding="utf-8") as f:
        json.dump(index, f, default=int)
    man.output(name)


def _read_pairs_matrix(marg, N):
    P = np.zeros((N, N))
    W = np.zeros((N, N))
    for (i, j), (pi, w, _) in marg.items():
        if not (0 <= i < N and 0 <= j < N):
            raise DataError(f"marginals pair ({i}, {j}) out of range for N={N}")
        P[i, j] = P[j, i] = pi
        W[i, j] = W[j, i] = w
    return P, W


def cmd_compare(cfg, out):
    man = Manifest("compare", cfg, out)
    data = _read_data(cfg, man)
    if not os.path.exists(cfg["marginals"]):
        raise DataError(f"marginals not found: {cfg['marginals']}")
    man.input(cfg["marginals"])
    N = data.n_nodes
    P, W = _read_pairs_matrix(read_marginals(cfg["marginals"]), N)
    with man.phase("baselines"):
        sc = pairwise_baselines(data, bins=cfg.get("bins", 16))
    rec = sc.records()
    iu, ju = np.triu_indices(N, 1)
    with open(_path(out, "baselines.tsv"), "w", encoding="utf-8") as f:
        f.write("i\tj\tcov\tpearson\tmi\tpi\tw_mean\n")
        for k, (i, j) in enumerate(zip(iu.tolist(), ju.tolist())):
            c, r, m = rec[k, 2:]
            f.write(f"{i}\t{j}\t{c:.17g}\t{r:.17g}\t{m:.17g}\t{P[i, j]:.17g}\t{W[i, j]:.17g}\n")
    man.output("baselines.tsv")
    fr = cfg.get("fractions")
    curves = {}
    tops = {}
    for name, M in (("cov", np.abs(sc.cov)), ("pearson", np.abs(sc.pearson)), ("mi", sc.mi)):
        curves[name] = threshold_reconstruction_compare(M, P, fr)
        tops[name] = top_pairs(M, cfg.get("top_k", 100))
    tops["pi"] = top_pairs(P, cfg.get("top_k", 100))
    with open(_path(out, "curves.tsv"), "w", encoding="utf-8") as f:
        f.write("score\tfraction\tjaccard\ttpr\n")
        for name, c in curves.items():
            for a, b, d in zip(c["fraction"].tolist(), c["jaccard"].tolist(), c["tpr"].tolist()):
                f.write(f"{name}\t{a:.17g}\t{b:.17g}\t{d:.17g}\n")
    man.output("curves.tsv")
    with open(_path(out, "top_pairs.json"), "w", encoding="utf-8") as f:
        json.dump({k: [list(p) for p in v] for k, v in tops.items()}, f)
    man.output("top_pairs.json")
    R = np.nan_to_num(sc.pearson, nan=0.0)
    report = {
        "pearson_violations": [list(t) for t in pearson_bound_violations(R)],
        "mi_violations": [list(t) for t in mi_bound_violations(sc.mi, sc.entropy)],
    }
    with open(_path(out, "inequalities.json"), "w", encoding="utf-8") as f:
        json.dump(report, f)
    man.output("inequalities.json")
    man.write(peak_jaccard={k: float(np.max(c["jaccard"])) for k, c in curves.items()})


def cmd_bench_scaling(cfg, out):
    from .experiments import loglog_slope, tau_scaling

    man = Manifest("bench-scaling", cfg, out)
    kw = {k: cfg[k] for k in ("p", "eps", "rounds", "seed", "sweeps_per_node", "min_sweeps") if k in cfg}
    if "mixes" in cfg:
        kw["mixes"] = cfg["mixes"]
    with man.phase("bench"):
        rows = tau_scaling(cfg["N"], **kw)
    with open(_path(out, "tau.tsv"), "w", encoding="utf-8") as f:
        f.write("N\tmix\ttau\tsweeps\n")
        for r in rows:
            f.write(f"{r['N']}\t{r['mix']}\t{r['tau']:.17g}\t{r['sweeps']}\n")
    man.output("tau.tsv")
    slopes = {}
    for mix in dict.fromkeys(r["mix"] for r in rows):
        sel = [r for r in rows if r["mix"] == mix]
        slopes[mix] = loglog_slope([r["N"] for r in sel], [r["tau"] for r in sel])
    man.write(slopes=slopes, seconds={f"{r['N']}/{r['mix']}": r["seconds"] for r in rows})


COMMANDS = {
    "generate": cmd_generate,
    "reconstruct": cmd_reconstruct,
    "sample": cmd_sample,
    "compare": cmd_compare,
    "bench-scaling": cmd_bench_scaling,
}


def build_parser():
    p = argparse.ArgumentParser(prog="netpost", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=f"netpost {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, help="JSON config file")
        s.add_argument("--out", required=True, help="output directory")
        s.add_argument(
            "--threads", type=int, default=None,
            help="worker processes for independent chains (overrides the config)",
        )
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s"
    )
    try:
        cfg = load_config(args.config, args.command)
        if args.threads is not None:
            if args.threads < 1:
                raise ConfigError("--threads must be positive")
            if args.command == "sample":
                cfg["threads"] = args.threads
        os.makedirs(args.out, exist_ok=True)
        COMMANDS[args.command](cfg, args.out)
    except ConfigError as exc:
        print(f"netpost: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, FileNotFoundError) as exc:
        print(f"netpost: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, DomainError) as exc:
        print(f"netpost: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
