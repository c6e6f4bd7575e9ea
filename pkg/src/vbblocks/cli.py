"""Command-line interface: generate data, train models, predict.

Exit codes: 0 success, 2 parse/dimension problems (message names the
offending field), 3 graph-validation violations (report printed).
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import io as vio
from . import learning, models, structure
from .graph import GraphError, ModelGraph

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_INVALID = 3


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_INPUT):
        super().__init__(message)
        self.code = code


def _load_json(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise CliError(f"{path}: no such file")
    except json.JSONDecodeError as exc:
        raise CliError(f"{path}: not valid JSON ({exc})")


def _load_data(path: str, fmt: str | None) -> np.ndarray:
    try:
        return vio.load_data(path, fmt)
    except FileNotFoundError:
        raise CliError(f"{path}: no such file")
    except (vio.DataFormatError, ValueError) as exc:
        raise CliError(f"{path}: {exc}")


def _parse_mask(doc, xdim: int, sdim: int):
    if doc is None:
        return None
    if isinstance(doc, dict):
        if doc.get("type") != "circular":
            raise CliError("model spec field 'mask.type': only 'circular' is supported")
        patch = tuple(doc.get("patch", ()))
        if len(patch) != 2:
            raise CliError("model spec field 'mask.patch' must be [height, width]")
        if patch[0] * patch[1] != xdim:
            raise CliError(
                f"model spec field 'mask.patch': {patch[0]}x{patch[1]} != xdim {xdim}"
            )
        return models.make_circular_mask(patch, sdim, doc.get("radius"))
    mask = np.asarray(doc, dtype=bool)
    if mask.shape != (xdim, sdim):
        raise CliError(f"model spec field 'mask': shape {mask.shape} != ({xdim}, {sdim})")
    return mask


def _build_from_spec(doc: dict, data: np.ndarray):
    for fieldname in ("model", "xdim", "sdim", "tdim"):
        if fieldname not in doc:
            raise CliError(f"model spec field '{fieldname}' is missing")
    kind = doc["model"]
    if kind not in ("dynvar", "dynsrc"):
        raise CliError(f"model spec field 'model': unknown value {kind!r}")
    xdim, sdim, tdim = int(doc["xdim"]), int(doc["sdim"]), int(doc["tdim"])
    if data.shape[1] != xdim:
        raise CliError(f"model spec field 'xdim' is {xdim} but the data has {data.shape[1]} columns")
    if data.shape[0] != tdim:
        raise CliError(f"model spec field 'tdim' is {tdim} but the data has {data.shape[0]} rows")
    mask = _parse_mask(doc.get("mask"), xdim, sdim)
    graph = ModelGraph(tdim)
    spec_cls = models.DynVarSpec if kind == "dynvar" else models.DynSrcSpec
    builder = models.build_dynvar if kind == "dynvar" else models.build_dynsrc
    try:
        handles = builder(graph, spec_cls(xdim, sdim, tdim, mask))
    except models.EmptyRow as exc:
        raise CliError(f"model spec field 'mask': {exc}")
    models.observe_data(handles, data)
    models.init_from_data(handles, data)
    return graph, handles


def _build_from_graph_doc(doc: dict, data: np.ndarray):
    try:
        graph = ModelGraph.from_dict(doc)
    except (GraphError, KeyError, ValueError) as exc:
        raise CliError(f"graph document: {exc}")
    if graph.sample_count != data.shape[0]:
        raise CliError(
            f"graph field 'sample_count' is {graph.sample_count} but the data has "
            f"{data.shape[0]} rows"
        )
    meta = graph.model_meta
    if not meta or "data_map" not in meta:
        raise CliError("graph field 'model.data_map' is missing: cannot attach data columns")
    data_map = meta["data_map"]
    if len(data_map) != data.shape[1]:
        raise CliError(
            f"graph field 'model.data_map' lists {len(data_map)} observed nodes but the "
            f"data has {data.shape[1]} columns"
        )
    for col, node_id in enumerate(data_map):
        graph.observe(graph.node(node_id), data[:, col])
    handles = models.handles_from_meta(graph, meta) if "nodes" in meta else None
    if handles is not None:
        models.init_from_data(handles, data)
    return graph, handles


def _validate_or_raise(graph: ModelGraph) -> None:
    report = graph.validate()
    if not report.ok:
        raise CliError(
            "graph validation failed:\n" + report.summary(), code=EXIT_INVALID
        )


def cmd_train(args) -> int:
    started = time.time()
    spec_doc = _load_json(args.model_spec)
    data = _load_data(args.data, args.format)
    if "nodes" in spec_doc:
        graph, _handles = _build_from_graph_doc(spec_doc, data)
    elif "model" in spec_doc:
        graph, _handles = _build_from_spec(spec_doc, data)
    else:
        raise CliError("model spec must contain either 'model' (builder spec) or 'nodes' (graph document)")
    _validate_or_raise(graph)

    config = learning.TrainConfig(
        max_sweeps=args.sweeps,
        rel_tol=args.tol,
        pattern_search_every=args.pattern_every,
        seed=args.seed,
    )
    node_counts = [len(graph.nodes)]
    prune_reports: list[structure.PruneReport] = []

    def on_sweep(g, k) -> bool:
        changed = False
        if args.prune_every and k % args.prune_every == 0:
            reports = structure.prune(g, 0.0)
            prune_reports.extend(reports)
            changed = bool(reports)
        node_counts.append(len(g.nodes))
        return changed

    trace = learning.train(graph, config, on_sweep=on_sweep)

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    vio.write_cost_trace(out / "cost_trace.csv", trace, node_counts[: len(trace)])
    vio.write_posteriors_csv(out / "posteriors.csv", graph)
    vio.atomic_write_text(out / "graph.json", graph.to_json())
    if prune_reports:
        vio.atomic_write_text(
            out / "prune_reports.jsonl",
            "\n".join(r.to_json() for r in prune_reports) + "\n",
        )
    final = trace[-1]
    manifest = {
        "command": "train",
        "config": {
            "sweeps": args.sweeps,
            "tol": args.tol,
            "pattern_every": args.pattern_every,
            "prune_every": args.prune_every,
            "format": args.format or "auto",
        },
        "seed": args.seed,
        "inputs": {
            Path(args.model_spec).name: vio.sha256_file(args.model_spec),
            Path(args.data).name: vio.sha256_file(args.data),
        },
        "outputs": {
            name: vio.sha256_file(out / name)
            for name in ("cost_trace.csv", "posteriors.csv", "graph.json")
        },
        "final_cost": {"nats": final.total, "bits_per_sample": final.bits_per_sample},
        "sweeps_run": len(trace) - 1,
        "wall_time_s": round(time.time() - started, 3),
    }
    vio.write_manifest(out / "manifest.json", manifest)
    return EXIT_OK


def cmd_predict(args) -> int:
    started = time.time()
    graph_path = Path(args.trained_graph)
    doc = _load_json(str(graph_path))
    data = _load_data(args.data, args.format)
    try:
        graph = ModelGraph.from_dict(doc)
    except (GraphError, KeyError, ValueError) as exc:
        raise CliError(f"graph document: {exc}")
    meta = graph.model_meta
    if not meta or "nodes" not in meta:
        raise CliError("graph field 'model' is missing: not a trained sequence model")
    posteriors = graph_path.parent / "posteriors.csv"
    if args.posteriors:
        posteriors = Path(args.posteriors)
    if not posteriors.exists():
        raise CliError(f"{posteriors}: no such file (posterior state is required)")
    vio.read_posteriors_csv(posteriors, graph)
    handles = models.handles_from_meta(graph, meta)
    if data.shape != (handles.spec.tdim, handles.spec.xdim):
        raise CliError(
            f"graph field 'model' expects data of shape "
            f"({handles.spec.tdim}, {handles.spec.xdim}), got {data.shape}"
        )

    means, variances = models.predict_series(graph, handles)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lines = ["t,dim,mean,variance"]
    for t in range(means.shape[0]):
        for d in range(means.shape[1]):
            lines.append(
                f"{t + 2},{d},{vio.fmt_float(means[t, d])},{vio.fmt_float(variances[t, d])}"
            )
    vio.atomic_write_text(out / "predictions.csv", "\n".join(lines) + "\n")
    lines = ["t,perplexity"]
    for t in range(means.shape[0]):
        pred = models.PredictiveGaussian(means[t], variances[t])
        perp = models.predictive_perplexity(pred, data[t + 1])
        lines.append(f"{t + 2},{vio.fmt_float(perp)}")
    vio.atomic_write_text(out / "perplexity.csv", "\n".join(lines) + "\n")
    manifest = {
        "command": "predict",
        "config": {"format": args.format or "auto"},
        "seed": None,
        "inputs": {
            graph_path.name: vio.sha256_file(graph_path),
            posteriors.name: vio.sha256_file(posteriors),
            Path(args.data).name: vio.sha256_file(args.data),
        },
        "outputs": {
            name: vio.sha256_file(out / name) for name in ("predictions.csv", "perplexity.csv")
        },
        "final_cost": None,
        "wall_time_s": round(time.time() - started, 3),
    }
    vio.write_manifest(out / "manifest.json", manifest)
    return EXIT_OK


def cmd_gen(args) -> int:
    started = time.time()
    if args.tdim < 1 or args.xdim < 1 or args.sdim < 1:
        raise CliError("flags --tdim/--xdim/--sdim must be positive")
    synth = models.synth_sequence(
        args.xdim, args.sdim, args.tdim, args.seed, motion=args.motion
    )
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if args.format == "bin":
        data_name = "data.bin"
        vio.save_data_bin(out / data_name, synth.data)
    else:
        data_name = "data.csv"
        vio.save_data_csv(out / data_name, synth.data)
    vio.save_data_csv(out / "u_true.csv", synth.u_true)
    vio.save_data_csv(out / "s_true.csv", synth.s_true)
    manifest = {
        "command": "gen",
        "config": {
            "xdim": args.xdim,
            "sdim": args.sdim,
            "tdim": args.tdim,
            "motion": args.motion,
            "format": args.format,
        },
        "seed": args.seed,
        "inputs": {},
        "outputs": {
            name: vio.sha256_file(out / name)
            for name in (data_name, "u_true.csv", "s_true.csv")
        },
        "final_cost": None,
        "wall_time_s": round(time.time() - started, 3),
    }
    vio.write_manifest(out / "manifest.json", manifest)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vbblocks",
        description="Build, train and prune variational Bayesian block models.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a model on a data matrix")
    p_train.add_argument("model_spec", help="model spec JSON or graph document JSON")
    p_train.add_argument("data", help="data matrix (csv or bin)")
    p_train.add_argument("out_dir", help="output directory")
    p_train.add_argument("--sweeps", type=int, default=200)
    p_train.add_argument("--tol", type=float, default=1e-7)
    p_train.add_argument("--pattern-every", type=int, default=10)
    p_train.add_argument("--seed", type=int, default=0)
    p_train.add_argument("--prune-every", type=int, default=0)
    p_train.add_argument("--format", choices=("csv", "bin"), default=None)
    p_train.set_defaults(func=cmd_train)

    p_pred = sub.add_parser("predict", help="one-step predictions from a trained model")
    p_pred.add_argument("trained_graph", help="graph.json written by train")
    p_pred.add_argument("data", help="data matrix the model was trained on")
    p_pred.add_argument("out_dir", help="output directory")
    p_pred.add_argument("--posteriors", default=None, help="posteriors.csv (default: next to the graph)")
    p_pred.add_argument("--format", choices=("csv", "bin"), default=None)
    p_pred.set_defaults(func=cmd_predict)

    p_gen = sub.add_parser("gen", help="generate synthetic sequence data")
    p_gen.add_argument("out_dir", help="output directory")
    p_gen.add_argument("--xdim", type=int, default=64)
    p_gen.add_argument("--sdim", type=int, default=4)
    p_gen.add_argument("--tdim", type=int, default=300)
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--motion", choices=("constant", "step", "window"), default="window")
    p_gen.add_argument("--format", choices=("csv", "bin"), default="csv")
    p_gen.set_defaults(func=cmd_gen)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except GraphError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
