"""Command line pipeline: encode-rules, extract-paths, train, eval, explain.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric divergence.
"""

from __future__ import annotations

import argparse
import difflib
import os
import sys

import numpy as np

from . import evaluation, kg as kg_mod, paths as paths_mod, rules as rules_mod
from .config import RunConfig, RunConfigError, apply_config_file, write_resolved_config
from .model import (
    CheckpointError,
    ConfigError,
    init_embeddings,
    load_checkpoint,
    save_checkpoint,
)
from .training import DivergenceError, train, write_loss_history

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_DIVERGENCE = 3

DATA_ERRORS = (
    kg_mod.DatasetError,
    rules_mod.RuleParseError,
    paths_mod.PathCacheError,
    CheckpointError,
    RunConfigError,
    ConfigError,
    LookupError,
    OSError,
)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _add_common_options(p: _Parser) -> None:
    p.add_argument("--config", help="key=value config file; flags override it")
    p.add_argument("--train", dest="train_path")
    p.add_argument("--valid", dest="valid_path")
    p.add_argument("--test", dest="test_path")
    p.add_argument("--rules", dest="rules_path")
    p.add_argument("--rules-format", dest="rules_format", choices=["normalized", "amie"])
    p.add_argument("--out", dest="output_dir")
    p.add_argument("--dim", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batches", dest="n_batches", type=int)
    p.add_argument("--margin1", dest="margin_triple", type=float)
    p.add_argument("--margin2", dest="margin_path", type=float)
    p.add_argument("--margin3", dest="margin_relpair", type=float)
    p.add_argument("--alpha1", dest="alpha_paths", type=float)
    p.add_argument("--alpha2", dest="alpha_relpairs", type=float)
    p.add_argument("--norm", choices=["L1", "L2"])
    p.add_argument("--confidence-threshold", dest="confidence_threshold", type=float)
    p.add_argument("--max-path-steps", dest="max_path_steps", type=int)
    p.add_argument("--path-cutoff", dest="path_cutoff", type=float)
    p.add_argument("--per-pair-cap", dest="per_pair_cap", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument(
        "--ablation",
        nargs="*",
        choices=["disable_paths_and_r2", "disable_r1"],
        default=None,
    )
    p.add_argument("--deterministic", dest="deterministic", action="store_true", default=None)
    p.add_argument(
        "--no-deterministic", dest="deterministic", action="store_false", default=None
    )


def _resolve(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig()
    if args.config:
        apply_config_file(cfg, args.config)
    for key in vars(cfg):
        value = getattr(args, key, None)
        if value is not None:
            setattr(cfg, key, value)
    if args.ablation is not None:
        cfg.disable_paths_and_r2 = "disable_paths_and_r2" in args.ablation
        cfg.disable_r1 = "disable_r1" in args.ablation
    return cfg


def _load_graph(cfg: RunConfig) -> kg_mod.KnowledgeGraph:
    for name in ("train_path", "valid_path", "test_path"):
        if not getattr(cfg, name):
            raise RunConfigError(f"{name} is required (set it in the config or via flags)")
    return kg_mod.load_dataset(cfg.train_path, cfg.valid_path, cfg.test_path)


def _load_rule_index(cfg: RunConfig, graph) -> tuple[rules_mod.RuleIndex, rules_mod.ParseStats, list]:
    stats = rules_mod.ParseStats()
    if not cfg.rules_path:
        return rules_mod.build_index([], cfg.confidence_threshold, stats), stats, []
    parser = (
        rules_mod.parse_amie_rules if cfg.rules_format == "amie" else rules_mod.parse_rules
    )
    raw = parser(cfg.rules_path, graph, stats)
    encoded = rules_mod.encode_rules(raw, graph, stats)
    index = rules_mod.build_index(encoded, cfg.confidence_threshold, stats)
    return index, stats, encoded


def _path_cache_file(cfg: RunConfig) -> str:
    return cfg.path_for("paths.bin")


def _load_or_extract_paths(cfg: RunConfig, graph) -> paths_mod.PathSet:
    cache = _path_cache_file(cfg)
    ds_hash = graph.dataset_hash()
    if os.path.exists(cache):
        try:
            ps = paths_mod.load_path_set(cache, expected_dataset_hash=ds_hash)
            if ps.max_steps == cfg.max_path_steps and ps.cutoff == cfg.path_cutoff:
                return ps
        except paths_mod.PathCacheError:
            pass  # stale or foreign cache: rebuild
    ps = paths_mod.extract_paths(
        graph, cfg.max_path_steps, cfg.path_cutoff, cfg.per_pair_cap
    )
    os.makedirs(cfg.output_dir, exist_ok=True)
    paths_mod.save_path_set(ps, ds_hash, cache)
    return ps


def cmd_encode_rules(cfg: RunConfig) -> int:
    graph = _load_graph(cfg)
    index, stats, encoded = _load_rule_index(cfg, graph)
    os.makedirs(cfg.output_dir, exist_ok=True)
    out_path = cfg.path_for("encoded_rules.tsv")
    with open(out_path, "w", encoding="utf-8") as fh:
        for rule in encoded:
            if rule.confidence >= cfg.confidence_threshold:
                fh.write(rules_mod.format_chain_rule(rule, graph) + "\n")
    write_resolved_config(cfg, cfg.path_for("resolved_encode-rules.cfg"))
    print(f"encoded rules written to {out_path}")
    print(
        f"kept: R1={index.n_r1} R2={index.n_r2} | "
        f"rejected (not chainable): {stats.rejected_not_chainable} | "
        f"dropped by threshold {cfg.confidence_threshold}: {stats.dropped_by_threshold} | "
        f"dropped (unknown relation): {stats.dropped_unknown_relation}"
    )
    return EXIT_OK


def cmd_extract_paths(cfg: RunConfig) -> int:
    graph = _load_graph(cfg)
    os.makedirs(cfg.output_dir, exist_ok=True)
    ps = paths_mod.extract_paths(
        graph, cfg.max_path_steps, cfg.path_cutoff, cfg.per_pair_cap
    )
    cache = _path_cache_file(cfg)
    paths_mod.save_path_set(ps, graph.dataset_hash(), cache)
    write_resolved_config(cfg, cfg.path_for("resolved_extract-paths.cfg"))
    reliabilities = [p.reliability for paths in ps.pairs.values() for p in paths]
    print(f"path cache written to {cache}")
    print(f"pairs with paths: {len(ps.pairs)}; paths: {ps.n_paths}")
    if reliabilities:
        hist, edges = np.histogram(reliabilities, bins=10, range=(0.0, 1.0))
        print("reliability histogram:")
        for count, lo, hi in zip(hist, edges[:-1], edges[1:]):
            print(f"  [{lo:.1f},{hi:.1f}): {count}")
    return EXIT_OK


def cmd_train(cfg: RunConfig) -> int:
    graph = _load_graph(cfg)
    index, _, _ = _load_rule_index(cfg, graph)
    ps = _load_or_extract_paths(cfg, graph)
    tc = cfg.training_config()
    result = train(graph, ps, index, tc, log_every=max(1, tc.epochs // 10))
    os.makedirs(cfg.output_dir, exist_ok=True)
    ckpt = cfg.path_for("checkpoint.bin")
    save_checkpoint(result.table, graph.dataset_hash(), tc.digest(), ckpt)
    graph.save_dictionaries(cfg.output_dir)
    write_loss_history(result.history, cfg.path_for("loss_history.csv"))
    write_resolved_config(cfg, cfg.path_for("resolved_train.cfg"))
    print(f"checkpoint written to {ckpt}")
    return EXIT_OK


def _scoring_context(cfg: RunConfig):
    graph = _load_graph(cfg)
    emb, _, _ = load_checkpoint(
        cfg.path_for("checkpoint.bin"), expected_dataset_hash=graph.dataset_hash()
    )
    index, _, _ = _load_rule_index(cfg, graph)
    return graph, emb, index


def cmd_eval(cfg: RunConfig) -> int:
    graph, emb, index = _scoring_context(cfg)
    # Ranking uses the precomputed train-pair path set: candidate pairs without
    # stored paths are scored by the translation term alone.
    ps = _load_or_extract_paths(cfg, graph)
    alpha = 0.0 if cfg.disable_paths_and_r2 else cfg.alpha_paths
    reports = evaluation.evaluate(
        emb, ps, index, graph, alpha_paths=alpha, norm=cfg.norm
    )
    for line in evaluation.report_lines(reports):
        print(line)
    os.makedirs(cfg.output_dir, exist_ok=True)
    with open(cfg.path_for("eval_report.csv"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(evaluation.report_csv_rows(reports)) + "\n")
    write_resolved_config(cfg, cfg.path_for("resolved_eval.cfg"))
    return EXIT_OK


def cmd_explain(cfg: RunConfig, head: str, tail: str, machine: bool) -> int:
    graph, emb, index = _scoring_context(cfg)
    # Explanations search the graph on demand so arbitrary pairs get evidence,
    # including pairs outside the precomputed train-pair path set.
    finder = paths_mod.PathFinder(
        graph, cfg.max_path_steps, cfg.path_cutoff, cfg.per_pair_cap
    )

    def lookup(name):
        try:
            return graph.entity_id(name)
        except LookupError:
            close = difflib.get_close_matches(name, graph.entity_names, n=3)
            hint = f"; did you mean: {', '.join(close)}" if close else ""
            raise LookupError(f"unknown entity {name!r}{hint}") from None

    h, t = lookup(head), lookup(tail)
    alpha = 0.0 if cfg.disable_paths_and_r2 else cfg.alpha_paths
    explanations = evaluation.explain(
        emb, finder, index, graph, h, t, top_k=cfg.top_k, alpha_paths=alpha, norm=cfg.norm
    )
    for line in evaluation.explanation_lines(explanations, graph, machine=machine):
        print(line)
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="rpje", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("encode-rules", "extract-paths", "train", "eval"):
        p = sub.add_parser(name)
        _add_common_options(p)
    p = sub.add_parser("explain")
    _add_common_options(p)
    p.add_argument("head")
    p.add_argument("tail")
    p.add_argument("--top-k", dest="top_k", type=int)
    p.add_argument("--machine", action="store_true", help="line-oriented output")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or EXIT_OK)
    try:
        cfg = _resolve(args)
        if args.command == "encode-rules":
            return cmd_encode_rules(cfg)
        if args.command == "extract-paths":
            return cmd_extract_paths(cfg)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "eval":
            return cmd_eval(cfg)
        if args.command == "explain":
            return cmd_explain(cfg, args.head, args.tail, args.machine)
        raise RunConfigError(f"unknown command {args.command!r}")
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except DATA_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
