"""
Command line for the MIRG toolkit.

    python -m app.cli generate --model hrv --alpha 1.1 --alpha0 1.3 --n 10000 --out run/
    python -m app.cli degrees --edges run/edges.tsv --out run/
    python -m app.cli hill --degrees run/degrees.csv --k 100,200,500
    python -m app.cli hillish --degrees run/degrees.csv --k 10,20,50
    python -m app.cli experiment table1 --config table1.json --workers 8
    python -m app.cli verify coupling

Errors print "error [<category>]: <message>" and exit with the category's code.
"""

import argparse
import logging
import os
import sys
from typing import Dict, List, Optional

from app.models.config import EXPERIMENT_ALIASES, load_config
from app.models.errors import MirgError, ParameterError
from app.services.cones import xi_eta
from app.services.evt import estimates_frame, hill_trace, hillish_frame, hillish_pair, norms, select_kn
from app.services.experiments import run_experiment
from app.services.mirg_graph import (
    DEFAULT_CHUNK_SIZE,
    LayerSpec,
    degrees,
    generate,
    read_degrees_csv,
    read_edge_list,
    write_degrees_csv,
    write_edge_list,
)
from app.services.oracles import SUITES, run_suite
from app.services.outputs import emit_outputs, emit_report
from app.services.samplers import RngStream
from app.services.weights import FullDependence, HrvMixture, SingleFactor, sample_weights, write_weights_csv

logger = logging.getLogger("app.cli")

DEFAULT_LAYERS = "multi_edge:identity,single_edge:exp_complement"


def _int_list(text: str) -> List[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError as e:
        raise ParameterError(f"expected a comma-separated list of integers, got {text!r}") from e


def _norm_order(text: str) -> float:
    return float("inf") if text.lower() in ("inf", "max") else float(text)


def _ensure_out(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path


# ============================================
# SUBCOMMANDS
# ============================================

def cmd_generate(args) -> int:
    if args.model == "hrv":
        if args.alpha0 is None:
            raise ParameterError("--alpha0 is required for the hrv model")
        spec = HrvMixture(args.alpha, args.alpha0)
    elif args.model == "full":
        spec = FullDependence(args.alpha)
    else:
        spec = SingleFactor(args.alpha)
    layers = [LayerSpec.parse(part) for part in args.layers.split(",")]
    rng = RngStream(args.seed)

    w = sample_weights(spec, args.n, rng.child("weights"))
    graph = generate(w, layers, rng.child("graph"), method=args.method,
                     workers=args.workers, chunk_size=args.chunk_size)
    out = _ensure_out(args.out)
    write_weights_csv(w, os.path.join(out, "weights.csv"))
    write_edge_list(graph, os.path.join(out, "edges.tsv"))
    write_degrees_csv(degrees(graph), os.path.join(out, "degrees.csv"))
    print(f"generated n={graph.n}, edges per layer: {[graph.edge_count(l) for l in range(graph.L)]}")
    return 0


def cmd_degrees(args) -> int:
    graph = read_edge_list(args.edges, n=args.n, L=args.L)
    out = _ensure_out(args.out)
    path = write_degrees_csv(degrees(graph), os.path.join(out, "degrees.csv"))
    print(path)
    return 0


def cmd_hill(args) -> int:
    d = read_degrees_csv(args.degrees)
    if args.k:
        ks = _int_list(args.k)
    elif args.kappa is not None and args.alpha is not None:
        ks = [select_kn(d.n, args.alpha, args.kappa)]
    else:
        raise ParameterError("give --k, or --alpha together with --kappa")
    estimates, skipped = hill_trace(norms(d, args.p), ks)
    if skipped:
        logger.warning(f"Skipped k values with X_(k+1) = 0: {skipped}")
    frame = estimates_frame(estimates)
    if args.out:
        frame.to_csv(os.path.join(_ensure_out(args.out), "hill.csv"), index=False,
                     float_format="%.6g", lineterminator="\n")
    print(frame.to_string(index=False))
    return 0


def cmd_hillish(args) -> int:
    pairs = xi_eta(read_degrees_csv(args.degrees), args.slope)
    if pairs.n_excluded:
        logger.info(f"Excluded {pairs.n_excluded} nodes with zero degree in both layers")
    xi, eta = pairs.retained()
    pos, neg = hillish_pair(xi, eta, _int_list(args.k))
    frame = hillish_frame(pos, neg)
    if args.out:
        frame.to_csv(os.path.join(_ensure_out(args.out), "hillish.csv"), index=False,
                     float_format="%.6g", lineterminator="\n")
    print(frame.to_string(index=False))
    return 0


def _overrides(args) -> Dict[str, object]:
    return {
        "experiment": EXPERIMENT_ALIASES[args.name],
        "seed": args.seed,
        "n": args.n,
        "replicates": args.replicates,
        "parallelism": args.workers,
        "chunk_size": args.chunk_size,
        "output_dir": args.out,
        "paper_scale": True if args.paper_scale else None,
    }


def cmd_experiment(args) -> int:
    cfg = load_config(args.config, _overrides(args))
    out = str(cfg.output_dir)
    logger.info(f"Running {cfg.experiment}: n={cfg.n}, replicates={cfg.replicates}, workers={cfg.parallelism}")
    result = run_experiment(cfg)
    if cfg.experiment in ("table1", "hrv_figure"):
        paths = emit_outputs(result, out)
    else:
        paths = emit_report(result, out, cfg.experiment)
        print(result.to_text())
    for path in paths:
        print(path)
    if not result.passed:
        logger.warning(f"{cfg.experiment}: some checks did not hold")
        return 1
    return 0


def cmd_verify(args) -> int:
    report = run_suite(args.suite, RngStream(args.seed), draws=args.draws)
    print(report.to_text())
    if args.out:
        emit_report(report, args.out, f"verify_{args.suite}")
    return 0 if report.passed else 1


# ============================================
# PARSER
# ============================================

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mirg", description="Multilayer inhomogeneous random graph toolkit")
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="sample weights, a graph and its degrees")
    gen.add_argument("--model", choices=["hrv", "full", "single"], default="single")
    gen.add_argument("--alpha", type=float, default=1.4)
    gen.add_argument("--alpha0", type=float, default=None)
    gen.add_argument("--n", type=int, default=10_000)
    gen.add_argument("--layers", default=DEFAULT_LAYERS, help="comma-separated kind:g specs")
    gen.add_argument("--method", choices=["fast", "naive"], default="fast")
    gen.add_argument("--workers", type=int, default=1)
    gen.add_argument("--chunk-size", type=int, default=DEFAULT_CHUNK_SIZE, help="nodes per generation chunk")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", default=".")
    gen.set_defaults(func=cmd_generate)

    deg = sub.add_parser("degrees", help="degree matrix of an edge list")
    deg.add_argument("--edges", required=True)
    deg.add_argument("--n", type=int, default=None)
    deg.add_argument("--L", type=int, default=None)
    deg.add_argument("--out", default=".")
    deg.set_defaults(func=cmd_degrees)

    hl = sub.add_parser("hill", help="Hill estimates on degree radii")
    hl.add_argument("--degrees", required=True)
    hl.add_argument("--k", default=None, help="comma-separated k values")
    hl.add_argument("--alpha", type=float, default=None)
    hl.add_argument("--kappa", type=float, default=None)
    hl.add_argument("--p", type=_norm_order, default=1.0)
    hl.add_argument("--out", default=None)
    hl.set_defaults(func=cmd_hill)

    hs = sub.add_parser("hillish", help="Hillish traces on (xi, eta)")
    hs.add_argument("--degrees", required=True)
    hs.add_argument("--k", required=True, help="comma-separated k values")
    hs.add_argument("--slope", type=float, default=1.5)
    hs.add_argument("--out", default=None)
    hs.set_defaults(func=cmd_hillish)

    exp = sub.add_parser("experiment", help="run a Monte-Carlo experiment")
    exp.add_argument("name", choices=["table1", "hrv", "lemma", "example31"])
    exp.add_argument("--config", default=None)
    exp.add_argument("--seed", type=int, default=None)
    exp.add_argument("--n", type=int, default=None)
    exp.add_argument("--replicates", type=int, default=None)
    exp.add_argument("--workers", type=int, default=None)
    exp.add_argument("--chunk-size", type=int, default=None, help="nodes per generation chunk")
    exp.add_argument("--out", default=None)
    exp.add_argument("--paper-scale", "--full-scale", dest="paper_scale", action="store_true",
                     help="full-size profile (n up to 2e6, 1000 replicates)")
    exp.set_defaults(func=cmd_experiment)

    ver = sub.add_parser("verify", help="numerical checks of the coupling and moment bounds")
    ver.add_argument("suite", choices=list(SUITES))
    ver.add_argument("--seed", type=int, default=0)
    ver.add_argument("--draws", type=int, default=1_000_000)
    ver.add_argument("--out", default=None)
    ver.set_defaults(func=cmd_verify)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )
    if args.verbose:
        logging.getLogger().setLevel(logging.DEBUG)
    try:
        return args.func(args)
    except MirgError as e:
        print(f"error [{e.category}]: {e}", file=sys.stderr)
        return e.exit_code
    except OSError as e:
        print(f"error [io]: {e}", file=sys.stderr)
        return 5


if __name__ == "__main__":
    sys.exit(main())
