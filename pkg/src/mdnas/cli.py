"""Command-line driver: run searches, simulate evaluation cohorts, analyze
rank consistency, and derive genotypes from checkpoints.

Exit codes: 0 success, 2 usage/config error, 3 runtime (evaluator) failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .engine import SearchConfig, Searcher, build_evaluator, write_trace_csv
from .evaluator import SurrogateCurveEvaluator
from .ranking import mean_tau, read_scores_csv, tau_trace, write_tau_csv
from .search_space import derive_genotype

log = logging.getLogger("mdnas")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


class ConfigError(Exception):
    pass


def _atomic_write(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _atomic_write_via(path: Path, writer_fn) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    os.close(fd)
    try:
        writer_fn(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _load_config(path: str, seed_override: int | None = None) -> SearchConfig:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config parse error at line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    if seed_override is not None:
        doc["seed"] = seed_override
    try:
        return SearchConfig.from_dict(doc)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def _run_one_search(config: SearchConfig, out_dir: Path) -> dict:
    out_dir.mkdir(parents=True, exist_ok=True)
    started = datetime.now(timezone.utc).isoformat()
    searcher = Searcher(config)
    result = searcher.run()
    snapshot = searcher.checkpoint()

    trace_path = out_dir / "trace.csv"
    _atomic_write_via(
        trace_path,
        lambda tmp: write_trace_csv(
            tmp, result.trace, searcher.edges_per_cell, config.num_ops
        ),
    )
    norm_json = result.genotype_norm.to_json()
    red_json = result.genotype_reduction.to_json()
    _atomic_write(out_dir / "genotype_norm.json", norm_json)
    _atomic_write(out_dir / "genotype_reduction.json", red_json)
    _atomic_write(out_dir / "checkpoint.json", json.dumps(snapshot))

    manifest = {
        "config": config.to_dict(),
        "config_hash": config.digest(),
        "seed": config.seed,
        "started": started,
        "finished": datetime.now(timezone.utc).isoformat(),
        "outputs": {
            "trace": str(trace_path),
            "genotype_norm": str(out_dir / "genotype_norm.json"),
            "genotype_reduction": str(out_dir / "genotype_reduction.json"),
            "checkpoint": str(out_dir / "checkpoint.json"),
        },
        "genotype_digest": hashlib.sha256((norm_json + red_json).encode()).hexdigest(),
    }
    _atomic_write(out_dir / "manifest.json", json.dumps(manifest, indent=2))
    return manifest


def _seed_job(args):
    config_doc, seed, out_dir = args
    config_doc = dict(config_doc, seed=seed)
    config_doc.pop("seeds", None)
    config = SearchConfig.from_dict(config_doc)
    return _run_one_search(config, Path(out_dir))


def cmd_search(args) -> int:
    try:
        with open(args.config) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    seeds = raw.pop("seeds", None) if isinstance(raw, dict) else None
    if seeds is not None:
        # multi-seed batch: one subdirectory per seed
        base = Path(args.out)
        base.mkdir(parents=True, exist_ok=True)
        jobs = [(raw, s, str(base / f"seed_{s}")) for s in seeds]
        for _, s, d in jobs:
            SearchConfig.from_dict(dict(raw, seed=s))  # validate before forking
        if args.jobs > 1:
            with ProcessPoolExecutor(max_workers=args.jobs) as pool:
                list(pool.map(_seed_job, jobs))
        else:
            for job in jobs:
                _seed_job(job)
        return EXIT_OK
    config = _load_config(args.config, args.seed)
    _run_one_search(config, Path(args.out))
    return EXIT_OK


def cmd_simulate(args) -> int:
    config = _load_config(args.config, args.seed)
    evaluator = build_evaluator(config)
    if not isinstance(evaluator, SurrogateCurveEvaluator):
        raise ConfigError("simulate requires a surrogate evaluator")
    rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(0xC0,)))
    cohort = [evaluator.sample_arch(rng) for _ in range(args.cohort)]
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)

    def write(tmp):
        with open(tmp, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "arch_id", "accuracy"])
            for epoch in range(1, config.epochs + 1):
                for arch_id, arch in enumerate(cohort):
                    acc = evaluator.evaluate(arch, epoch)
                    writer.writerow([epoch, f"a{arch_id:04d}", f"{acc:.10f}"])

    _atomic_write_via(out, write)
    return EXIT_OK


def cmd_analyze_tau(args) -> int:
    try:
        matrix = read_scores_csv(args.scores)
    except (OSError, KeyError, ValueError) as exc:
        raise ConfigError(f"bad scores file: {exc}") from exc
    try:
        trace = tau_trace(matrix)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    _atomic_write_via(out, lambda tmp: write_tau_csv(tmp, trace))
    log.info("mean tau (excluding final epoch): %.4f", mean_tau(trace))
    return EXIT_OK


def cmd_derive(args) -> int:
    try:
        with open(args.checkpoint) as fh:
            snapshot = json.load(fh)
        searcher = Searcher.from_checkpoint(snapshot)
    except (OSError, json.JSONDecodeError, KeyError, ValueError) as exc:
        raise ConfigError(f"bad checkpoint: {exc}") from exc
    genotypes = {}
    for cell_idx, template in enumerate(searcher.templates):
        block = searcher.dists[
            cell_idx * searcher.edges_per_cell : (cell_idx + 1) * searcher.edges_per_cell
        ]
        try:
            genotype = derive_genotype(
                template,
                [d.probs for d in block],
                args.k,
                exclude_none=searcher.config.exclude_none,
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        genotypes[template.kind] = json.loads(genotype.to_json())
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    _atomic_write(out, json.dumps(genotypes, indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mdnas",
        description="Multinomial distribution learning for cell-based architecture search",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("search", help="run the distribution-learning search")
    p.add_argument("--config", required=True, help="JSON config path")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None, help="override config seed")
    p.add_argument("--jobs", type=int, default=1, help="parallel workers for multi-seed batches")
    p.set_defaults(fn=cmd_search)

    p = sub.add_parser("simulate", help="score a random cohort at every epoch")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="output scores CSV")
    p.add_argument("--cohort", type=int, default=16)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("analyze-tau", help="per-epoch Kendall tau vs the final ranking")
    p.add_argument("--scores", required=True, help="input (epoch, arch_id, accuracy) CSV")
    p.add_argument("--out", required=True, help="output (epoch, tau, p_tau) CSV")
    p.set_defaults(fn=cmd_analyze_tau)

    p = sub.add_parser("derive", help="derive genotypes from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True, help="output genotypes JSON")
    p.add_argument("--k", type=int, default=2)
    p.set_defaults(fn=cmd_derive)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=getattr(logging, os.environ.get("MDENAS_LOG", "warn").upper(), logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        log.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except json.JSONDecodeError as exc:
        print(f"error: config parse error at line {exc.lineno}: {exc.msg}", file=sys.stderr)
        return EXIT_CONFIG
    except (TypeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except RuntimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
