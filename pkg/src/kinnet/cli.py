"""Command-line pipeline: simulate | infer | predict | evaluate.

Every subcommand takes a --config file plus flag overrides, derives all
randomness from one master seed, and writes delimited artifacts plus
rendered figures into --out (figures can be suppressed with --no-figures).
Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import __version__
from .averaging import draw_ensemble, edge_posterior
from .config import RunConfig, build_run_config, read_config_file
from .data import dataset_to_json, load_dataset, normalize, write_dataset
from .dynamics import (PredictionBand, predict, prediction_mse,
                       read_trajectory, stationary_benchmark, write_band,
                       write_trajectory)
from .errors import DataError, KinnetError, NumericalError
from .graphs import (local_graph_from_dict, local_graph_to_dict,
                     read_edge_list, write_edge_list)
from .inference import Chain, PosteriorResult, score_network
from .metrics import pr_roc, write_curves
from .synthetic import make_dataset, noiseless_course, system_from_json

log = logging.getLogger("kinnet")


class _Parser(argparse.ArgumentParser):
    """argparse that exits 1 on usage errors (2 and 3 are reserved)."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_common(sp):
    sp.add_argument("--out", required=True, help="output directory")
    sp.add_argument("--config", help="key = value configuration file")
    sp.add_argument("--seed", type=int, help="master seed (default 0)")
    sp.add_argument("--workers", type=int, help="worker processes")
    sp.add_argument("--no-figures", action="store_true",
                    help="skip PNG rendering")
    sp.add_argument("--verbose", action="store_true")


def _run_config(args, extra: dict | None = None) -> RunConfig:
    file_values = read_config_file(args.config) if args.config else {}
    overrides = {"seed": args.seed, "workers": args.workers}
    if extra:
        overrides.update(extra)
    return build_run_config(file_values, overrides)


def _outdir(args) -> str:
    os.makedirs(args.out, exist_ok=True)
    return args.out


def _config_echo(cfg: RunConfig) -> dict:
    # workers affect scheduling only, never results; keeping them out of the
    # echo lets artifacts from different machines compare byte-for-byte
    doc = cfg.as_dict()
    doc.pop("workers")
    return doc


def _write_json(path, doc) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# simulate

def cmd_simulate(args) -> int:
    out = _outdir(args)
    with open(args.system, encoding="utf-8") as fh:
        system = system_from_json(fh.read())
    cfg = _run_config(args)
    intervention = frozenset()
    if args.inhibit:
        idx = {n: i for i, n in enumerate(system.names)}
        try:
            intervention = frozenset(idx[n.strip()] for n in args.inhibit.split(","))
        except KeyError as exc:
            raise DataError(f"--inhibit names unknown protein {exc}") from None
    files = []
    first_ds = None
    for k in range(args.seeds):
        ds = make_dataset(system, args.courses, args.n_points, args.t_end,
                          args.noise, seed=cfg.seed + k,
                          intervention=intervention, jitter=args.jitter)
        first_ds = first_ds or ds
        fname = os.path.join(out, f"data_seed{cfg.seed + k}.csv")
        write_dataset(ds, fname)
        files.append(os.path.basename(fname))
    truth = system.truth()
    write_edge_list(os.path.join(out, "truth.csv"),
                    truth.adjacency.astype(float), system.names, threshold=0.5)
    _write_json(os.path.join(out, "meta.json"), {
        "command": "simulate",
        "version": __version__,
        "config": _config_echo(cfg),
        "system": json.loads(open(args.system, encoding="utf-8").read()),
        "n_points": args.n_points, "t_end": args.t_end, "noise": args.noise,
        "courses": args.courses, "jitter": args.jitter,
        "inhibit": sorted(system.names[i] for i in intervention),
        "files": files,
    })
    if not args.no_figures:
        from .plots import dataset_figure
        dataset_figure(first_ds, os.path.join(out, "courses.png"))
    print(f"wrote {len(files)} dataset file(s) + truth.csv to {out}")
    return 0


# ---------------------------------------------------------------------------
# infer

def _results_to_json(scores, names) -> dict:
    doc = {}
    for s in sorted(scores):
        doc[names[s]] = [
            {
                "graph": local_graph_to_dict(r.graph, names),
                "log_marginal": r.log_marginal,
                "log_prior": r.log_prior,
                "diagnostics": r.diagnostics,
                "seed_path": list(r.seed_path),
            }
            for r in scores[s]
        ]
    return doc


def cmd_infer(args) -> int:
    out = _outdir(args)
    extra = {
        "c1": args.c1, "c2": args.c2,
        "self_edges": False if args.no_self_edges else None,
        "gradient_point": args.gradient_point,
        "normalization": args.normalization,
        "sampler.iters": args.iters,
        "sampler.burn_in": args.burn_in,
        "sampler.thin": args.thin,
        "sampler.reduced_draws": args.reduced_draws,
        "sampler.proposal_scale": args.proposal_scale,
        "sampler.b_variant": args.b_variant,
        "prior.nu": args.nu,
        "prior.mu_v": args.mu_v,
        "prior.mu_k": args.mu_k,
        "retain": args.retain,
    }
    cfg = _run_config(args, extra)
    dataset = normalize(load_dataset(args.data), cfg.normalization)
    if args.dump_normalized:
        with open(os.path.join(out, "normalized.json"), "w", encoding="utf-8") as fh:
            fh.write(dataset_to_json(dataset))
    names = dataset.panel.names
    scores = score_network(dataset, cfg, model=args.model)
    ep = edge_posterior(scores, dataset.panel.p)

    write_edge_list(os.path.join(out, "edges.csv"), ep.probs, names)
    _write_json(os.path.join(out, "scores.json"), {
        "command": "infer",
        "version": __version__,
        "model": args.model,
        "config": _config_echo(cfg),
        "panel": list(names),
        "channels_normalized": "separately",
        "scale": list(dataset.scale) if dataset.scale is not None else None,
        "substrates": _results_to_json(scores, names),
        "edge_provenance": {names[s]: v for s, v in ep.provenance.items()},
    })
    arrays = {}
    for s, results in scores.items():
        for i, r in enumerate(results):
            arrays[f"s{s}_r{i}_v"] = r.chain.v
            arrays[f"s{s}_r{i}_k"] = r.chain.k
            arrays[f"s{s}_r{i}_sigma"] = r.chain.sigma
            arrays[f"s{s}_r{i}_loglik"] = r.chain.log_lik
    np.savez(os.path.join(out, "chains.npz"), **arrays)
    if not args.no_figures:
        from .plots import edge_matrix_figure
        edge_matrix_figure(ep.probs, names, os.path.join(out, "edge_matrix.png"))
    print(f"scored {sum(len(v) for v in scores.values())} graphs over "
          f"{dataset.panel.p} substrates; artifacts in {out}")
    return 0


# ---------------------------------------------------------------------------
# predict

def _load_artifacts(artifacts_dir):
    scores_path = os.path.join(artifacts_dir, "scores.json")
    chains_path = os.path.join(artifacts_dir, "chains.npz")
    if not (os.path.exists(scores_path) and os.path.exists(chains_path)):
        raise DataError(f"missing inference artifacts in {artifacts_dir}")
    with open(scores_path, encoding="utf-8") as fh:
        doc = json.load(fh)
    names = doc["panel"]
    npz = np.load(chains_path)
    scores = {}
    for s, name in enumerate(names):
        results = []
        for i, rec in enumerate(doc["substrates"][name]):
            chain = Chain(
                v=npz[f"s{s}_r{i}_v"], k=npz[f"s{s}_r{i}_k"],
                sigma=npz[f"s{s}_r{i}_sigma"], log_lik=npz[f"s{s}_r{i}_loglik"],
                acceptance_rate=rec["diagnostics"].get("acceptance_rate", 1.0),
                proposal_scale=0.0, seed_path=tuple(rec["seed_path"]),
                burn_in=0, thin=1,
            )
            results.append(PosteriorResult(
                graph=local_graph_from_dict(rec["graph"], names),
                log_marginal=rec["log_marginal"], log_prior=rec["log_prior"],
                chain=chain, diagnostics=rec["diagnostics"],
                seed_path=tuple(rec["seed_path"]),
            ))
        scores[s] = results
    return names, doc, scores


def _parse_times(spec: str) -> np.ndarray:
    try:
        start, stop, count = spec.split(":")
        return np.linspace(float(start), float(stop), int(count))
    except ValueError:
        raise DataError(f"--times must be start:stop:count, got {spec!r}") from None


def cmd_predict(args) -> int:
    out = _outdir(args)
    cfg = _run_config(args, {"ensemble": args.ensemble, "horizon": args.horizon})
    names, doc, scores = _load_artifacts(args.artifacts)
    p = len(names)

    test = None
    if args.test:
        test_names, test = read_trajectory(args.test)
        if list(test_names) != list(names):
            raise DataError("test panel does not match the inference panel")
    if args.x0_from:
        x0_names, x0_traj = read_trajectory(args.x0_from)
        if list(x0_names) != list(names):
            raise DataError("x0 panel does not match the inference panel")
        x0 = x0_traj.states[0]
    elif test is not None:
        x0 = test.states[0]
    else:
        raise DataError("provide --x0-from or --test to set the initial state")
    if args.times:
        times = _parse_times(args.times)
    elif test is not None:
        times = test.times
    else:
        raise DataError("provide --times or --test to set the time grid")

    intervention = frozenset()
    if args.intervention:
        idx = {n: i for i, n in enumerate(names)}
        try:
            intervention = frozenset(idx[n.strip()]
                                     for n in args.intervention.split(","))
        except KeyError as exc:
            raise DataError(f"--intervention names unknown protein {exc}") from None

    # inputs arrive in raw data units; the fitted parameters live in the
    # training normalization's units, so map in, integrate, and map back
    scale = doc.get("scale")
    if scale is not None:
        scale = np.asarray(scale, dtype=float)
        ratio = scale[p:] / scale[:p]
    else:
        log.warning("no pooled scale in the artifacts; assuming the inputs "
                    "share the training units")
        scale = np.ones(2 * p)
        ratio = None

    ensemble = draw_ensemble(scores, p, cfg.ensemble, cfg.seed)
    band = predict(ensemble, x0 / scale, times, intervention=intervention,
                   model=doc.get("model", "mm"), mass_ratio=ratio)
    band = PredictionBand(band.times, band.mean * scale, band.sd * scale,
                          band.metadata)
    write_band(band, names, os.path.join(out, "band.csv"))

    summary = {
        "command": "predict",
        "version": __version__,
        "config": _config_echo(cfg),
        "intervention": sorted(names[i] for i in intervention),
        "ensemble_used": band.metadata["n_used"],
        "ensemble_divergent": band.metadata["n_divergent"],
    }
    if test is not None:
        bench = stationary_benchmark(x0, times)
        summary["mse"] = {
            "ensemble": prediction_mse(band, test, cfg.horizon),
            "stationary_benchmark": prediction_mse(bench, test, cfg.horizon),
            "horizon": cfg.horizon,
        }
    _write_json(os.path.join(out, "mse.json"), summary)
    if not args.no_figures:
        from .plots import band_figure
        band_figure(band, names, os.path.join(out, "band.png"), test=test)
    print(f"prediction band over {len(times)} times written to {out}"
          + (f"; ensemble MSE {summary['mse']['ensemble']:.4g}" if test is not None else ""))
    return 0


# ---------------------------------------------------------------------------
# evaluate

def _edge_matrix(names, pairs) -> np.ndarray:
    idx = {n: i for i, n in enumerate(names)}
    probs = np.zeros((len(names), len(names)))
    for (src, dst), val in pairs.items():
        probs[idx[src], idx[dst]] = val
    return probs


def cmd_evaluate(args) -> int:
    out = _outdir(args)
    names, score_pairs = read_edge_list(args.edges)
    truth_names, truth_pairs = read_edge_list(args.truth)
    unknown = set(truth_names) - set(names)
    if unknown:
        raise DataError(f"truth mentions proteins absent from scores: {sorted(unknown)}")
    probs = _edge_matrix(names, score_pairs)
    truth = _edge_matrix(names, truth_pairs) > 0.5
    report = pr_roc(probs, truth, include_self=not args.no_self)
    _write_json(os.path.join(out, "metrics.json"), {
        "command": "evaluate",
        "version": __version__,
        "aupr": report.aupr,
        "auroc": report.auroc,
        "n_true_edges": report.n_true_edges,
        "n_possible_edges": report.n_possible_edges,
        "include_self": not args.no_self,
    })
    write_curves(report, os.path.join(out, "pr_curve.csv"),
                 os.path.join(out, "roc_curve.csv"))
    if not args.no_figures:
        from .plots import curves_figure
        curves_figure(report, os.path.join(out, "curves.png"))
    print(f"AUPR = {report.aupr:.4f}, AUROC = {report.auroc:.4f} "
          f"({report.n_true_edges}/{report.n_possible_edges} edges)")
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> _Parser:
    parser = _Parser(prog="kinnet",
                     description="Causal signaling-network inference from "
                                 "time-course phosphoproteomics")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("simulate", help="generate synthetic datasets from a system spec")
    _add_common(sp)
    sp.add_argument("--system", required=True, help="system spec JSON")
    sp.add_argument("--n-points", type=int, default=26)
    sp.add_argument("--t-end", type=float, default=2.5)
    sp.add_argument("--noise", type=float, default=0.1,
                    help="intrinsic SDE noise scale")
    sp.add_argument("--courses", type=int, default=4)
    sp.add_argument("--seeds", type=int, default=1,
                    help="how many replicate dataset files to write")
    sp.add_argument("--jitter", type=float, default=0.35,
                    help="log-uniform spread of per-course initial states")
    sp.add_argument("--inhibit", help="comma-separated proteins to block")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("infer", help="score graphs and compute edge posteriors")
    _add_common(sp)
    sp.add_argument("--data", required=True, help="long-format dataset CSV")
    sp.add_argument("--model", choices=("mm", "linear"), default="mm")
    sp.add_argument("--c1", type=int)
    sp.add_argument("--c2", type=int)
    sp.add_argument("--no-self-edges", action="store_true",
                    help="exclude autocatalysis from the candidate pool")
    sp.add_argument("--gradient-point", choices=("left", "right", "midpoint"))
    sp.add_argument("--normalization", choices=("per-course", "pooled"))
    sp.add_argument("--b-variant", choices=("complete", "simplified"))
    sp.add_argument("--iters", type=int)
    sp.add_argument("--burn-in", type=int)
    sp.add_argument("--thin", type=int)
    sp.add_argument("--reduced-draws", type=int,
                    help="draws in the marginal-likelihood reduced run")
    sp.add_argument("--proposal-scale", type=float)
    sp.add_argument("--nu", type=float)
    sp.add_argument("--mu-v", type=float)
    sp.add_argument("--mu-k", type=float)
    sp.add_argument("--retain", type=int)
    sp.add_argument("--dump-normalized", action="store_true")
    sp.set_defaults(func=cmd_infer)

    sp = sub.add_parser("predict", help="ensemble prediction from inference artifacts")
    _add_common(sp)
    sp.add_argument("--artifacts", required=True,
                    help="directory produced by `kinnet infer`")
    sp.add_argument("--x0-from", help="wide CSV; first row is the initial state")
    sp.add_argument("--times", help="start:stop:count")
    sp.add_argument("--test", help="wide CSV held-out trajectory to score against")
    sp.add_argument("--intervention", help="comma-separated proteins to block")
    sp.add_argument("--ensemble", type=int)
    sp.add_argument("--horizon", type=float)
    sp.set_defaults(func=cmd_predict)

    sp = sub.add_parser("evaluate", help="PR/ROC of scored edges against a truth network")
    _add_common(sp)
    sp.add_argument("--edges", required=True, help="edge-list CSV with scores")
    sp.add_argument("--truth", required=True, help="edge-list CSV of true edges")
    sp.add_argument("--no-self", action="store_true",
                    help="exclude the diagonal from the candidate set")
    sp.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (DataError, OSError) as exc:
        print(f"kinnet: data error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"kinnet: numerical failure: {exc}", file=sys.stderr)
        return 3
    except KinnetError as exc:
        print(f"kinnet: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
