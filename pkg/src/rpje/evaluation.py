"""Link prediction evaluation: scoring, ranking, metrics and explanations.

The score of a candidate triple is
    Q(h,r,t) = ||h + r - t|| + alpha_1 * sum_{p in P(h,t)} R(p|h,t) * prod(mu) * ||C(p) - r||
and candidates are ranked ascending by Q (lower energy = better). The filtered
setting removes corrupted candidates already present anywhere in the KG. Ties
are broken pessimistically: the true answer ranks after equal-scored rivals.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .compose import Composer, compose_embedding, confidence_product
from .kg import KnowledgeGraph, Triple
from .model import EmbeddingTable, dissimilarity
from .paths import Path, PathFinder, PathSet
from .rules import RuleIndex, format_chain_rule

HITS_AT = (1, 3, 10)


def _row_norms(m: np.ndarray, norm: str) -> np.ndarray:
    if norm == "L1":
        return np.abs(m).sum(axis=1)
    return np.sqrt((m * m).sum(axis=1))


def relation_categories(kg: KnowledgeGraph, threshold: float = 1.5) -> dict[int, str]:
    """1-1 / 1-N / N-1 / N-N assignment from train tails-per-head and heads-per-tail."""
    heads: dict[int, set[int]] = {}
    tails: dict[int, set[int]] = {}
    counts: dict[int, int] = {}
    for h, r, t in kg.train:
        heads.setdefault(r, set()).add(h)
        tails.setdefault(r, set()).add(t)
        counts[r] = counts.get(r, 0) + 1
    categories = {}
    for r, n in counts.items():
        tph = n / len(heads[r])
        hpt = n / len(tails[r])
        if tph < threshold and hpt < threshold:
            categories[r] = "1-1"
        elif tph >= threshold and hpt < threshold:
            categories[r] = "1-N"
        elif tph < threshold and hpt >= threshold:
            categories[r] = "N-1"
        else:
            categories[r] = "N-N"
    return categories


class Scorer:
    """Q-scoring of candidate triples against trained embeddings and paths."""

    def __init__(
        self,
        emb: EmbeddingTable,
        provider: PathFinder | PathSet,
        composer: Composer,
        alpha_paths: float = 1.0,
        norm: str = "L1",
    ):
        self.emb = emb
        self.provider = provider
        self.composer = composer
        self.alpha = alpha_paths
        self.norm = norm

    def path_penalty(self, paths: tuple[Path, ...], r: int) -> float:
        total = 0.0
        rvec = self.emb.relation_vec(r)
        for p in paths:
            cr = self.composer.compose(p.relations)
            weight = p.reliability * confidence_product(cr)
            total += weight * dissimilarity(
                compose_embedding(cr, self.emb) - rvec, self.norm
            )
        return total

    def score(self, h: int, r: int, t: int) -> float:
        base = dissimilarity(
            self.emb.entities[h] + self.emb.relation_vec(r) - self.emb.entities[t],
            self.norm,
        )
        if self.alpha == 0.0:
            return base
        return base + self.alpha * self.path_penalty(
            self.provider.paths_between(h, t), r
        )

    # --- vectorized candidate scoring ---

    def tail_scores(self, h: int, r: int) -> np.ndarray:
        scores = _row_norms(
            (self.emb.entities[h] + self.emb.relation_vec(r)) - self.emb.entities,
            self.norm,
        )
        if self.alpha > 0.0 and isinstance(self.provider, PathFinder):
            for t, paths in self.provider.arrivals(h).items():
                scores[t] += self.alpha * self.path_penalty(paths, r)
        elif self.alpha > 0.0:
            for (hh, t), paths in self.provider.pairs.items():
                if hh == h:
                    scores[t] += self.alpha * self.path_penalty(paths, r)
        return scores

    def head_scores(self, r: int, t: int) -> np.ndarray:
        scores = _row_norms(
            self.emb.entities + (self.emb.relation_vec(r) - self.emb.entities[t]),
            self.norm,
        )
        if self.alpha > 0.0 and isinstance(self.provider, PathFinder):
            for c in self.provider.heads_reaching(t):
                paths = self.provider.paths_between(c, t)
                if paths:
                    scores[c] += self.alpha * self.path_penalty(paths, r)
        elif self.alpha > 0.0:
            for (c, tt), paths in self.provider.pairs.items():
                if tt == t:
                    scores[c] += self.alpha * self.path_penalty(paths, r)
        return scores

    def relation_scores(self, h: int, t: int) -> np.ndarray:
        diff = (self.emb.entities[h] - self.emb.entities[t]) + self.emb.relations
        scores = _row_norms(diff, self.norm)
        if self.alpha > 0.0:
            for p in self.provider.paths_between(h, t):
                cr = self.composer.compose(p.relations)
                weight = p.reliability * confidence_product(cr)
                c = compose_embedding(cr, self.emb)
                scores += (self.alpha * weight) * _row_norms(
                    c - self.emb.relations, self.norm
                )
        return scores


def _rank(scores: np.ndarray, true_idx: int, excluded: set[int]) -> int:
    """1-based pessimistic rank of true_idx; excluded candidates do not compete."""
    s_true = scores[true_idx]
    rank = 1
    for i, s in enumerate(scores):
        if i == true_idx or i in excluded:
            continue
        if s <= s_true:
            rank += 1
    return rank


def rank_entities(
    scorer: Scorer, kg: KnowledgeGraph, triple: Triple, slot: str, setting: str
) -> int:
    h, r, t = triple
    if slot == "tail":
        scores = scorer.tail_scores(h, r)
        true_idx = t
        known = (
            {c for c in range(kg.n_entities) if c != t and kg.is_known((h, r, c))}
            if setting == "filtered"
            else set()
        )
    elif slot == "head":
        scores = scorer.head_scores(r, t)
        true_idx = h
        known = (
            {c for c in range(kg.n_entities) if c != h and kg.is_known((c, r, t))}
            if setting == "filtered"
            else set()
        )
    else:
        raise ValueError(f"slot must be head or tail, got {slot!r}")
    return _rank(scores, true_idx, known)


def rank_relations(
    scorer: Scorer, kg: KnowledgeGraph, triple: Triple, setting: str
) -> int:
    h, r, t = triple
    scores = scorer.relation_scores(h, t)
    known = (
        {c for c in range(kg.n_base_relations) if c != r and kg.is_known((h, c, t))}
        if setting == "filtered"
        else set()
    )
    return _rank(scores, r, known)


@dataclass
class EvalReport:
    task: str  # entity-head | entity-tail | entity-combined | relation
    setting: str  # raw | filtered
    mr: float
    mrr: float
    hits: dict[int, float]
    per_category: dict[str, float] = field(default_factory=dict)


def metrics_from_ranks(ranks: list[int]) -> tuple[float, float, dict[int, float]]:
    arr = np.asarray(ranks, dtype=float)
    mr = float(arr.mean())
    mrr = float((1.0 / arr).mean())
    hits = {n: float((arr <= n).mean()) for n in HITS_AT}
    return mr, mrr, hits


def evaluate(
    emb: EmbeddingTable,
    provider: PathFinder | PathSet,
    index: RuleIndex,
    kg: KnowledgeGraph,
    alpha_paths: float = 1.0,
    norm: str = "L1",
    test_triples: list[Triple] | None = None,
    rank_relations_too: bool = True,
) -> list[EvalReport]:
    """Aggregate MR/MRR/Hits over the test split, raw and filtered, per task."""
    triples = test_triples if test_triples is not None else kg.test
    if not triples:
        raise ValueError("test split is empty")
    scorer = Scorer(emb, provider, Composer(index), alpha_paths, norm)
    categories = relation_categories(kg)
    ranks: dict[tuple[str, str], list[int]] = {}
    cat_hits: dict[tuple[str, str], list[int]] = {}
    for triple in triples:
        _, r, _ = triple
        cat = categories.get(r, "N-N")
        for slot in ("head", "tail"):
            for setting in ("raw", "filtered"):
                rank = rank_entities(scorer, kg, triple, slot, setting)
                ranks.setdefault((f"entity-{slot}", setting), []).append(rank)
                if setting == "filtered":
                    cat_hits.setdefault((slot, cat), []).append(int(rank <= 10))
        if rank_relations_too:
            for setting in ("raw", "filtered"):
                rank = rank_relations(scorer, kg, triple, setting)
                ranks.setdefault(("relation", setting), []).append(rank)

    reports = []
    for setting in ("raw", "filtered"):
        head = ranks[("entity-head", setting)]
        tail = ranks[("entity-tail", setting)]
        for task, rlist in (
            ("entity-head", head),
            ("entity-tail", tail),
            ("entity-combined", head + tail),
        ):
            mr, mrr, hits = metrics_from_ranks(rlist)
            report = EvalReport(task=task, setting=setting, mr=mr, mrr=mrr, hits=hits)
            if setting == "filtered" and task in ("entity-head", "entity-tail"):
                slot = task.split("-")[1]
                report.per_category = {
                    cat: float(np.mean(vals))
                    for (s, cat), vals in sorted(cat_hits.items())
                    if s == slot
                }
            reports.append(report)
        if rank_relations_too:
            mr, mrr, hits = metrics_from_ranks(ranks[("relation", setting)])
            reports.append(
                EvalReport(task="relation", setting=setting, mr=mr, mrr=mrr, hits=hits)
            )
    return reports


def report_lines(reports: list[EvalReport]) -> list[str]:
    lines = [f"{'task':<16} {'setting':<9} {'MR':>9} {'MRR':>8} "
             + " ".join(f"H@{n:<3}" for n in HITS_AT)]
    for rep in reports:
        hits = " ".join(f"{rep.hits[n]:.3f}" for n in HITS_AT)
        lines.append(
            f"{rep.task:<16} {rep.setting:<9} {rep.mr:>9.2f} {rep.mrr:>8.4f} {hits}"
        )
        if rep.per_category:
            cats = "  ".join(f"{c}:{v:.3f}" for c, v in rep.per_category.items())
            lines.append(f"    hits@10 by category: {cats}")
    return lines


def report_csv_rows(reports: list[EvalReport]) -> list[str]:
    rows = ["task,setting,metric,value"]
    for rep in reports:
        rows.append(f"{rep.task},{rep.setting},MR,{rep.mr:.6g}")
        rows.append(f"{rep.task},{rep.setting},MRR,{rep.mrr:.6g}")
        for n, v in rep.hits.items():
            rows.append(f"{rep.task},{rep.setting},Hits@{n},{v:.6g}")
        for cat, v in rep.per_category.items():
            rows.append(f"{rep.task},{rep.setting},Hits@10[{cat}],{v:.6g}")
    return rows


@dataclass
class PathEvidence:
    relations: tuple[int, ...]
    reliability: float
    applied_rules: tuple
    confidence_product: float
    residual: tuple[int, ...]
    association: tuple[int, int, float] | None = None  # (from, to, beta) via R1


@dataclass
class RelationExplanation:
    relation: int
    score: float
    paths: list[PathEvidence]


def explain(
    emb: EmbeddingTable,
    provider: PathFinder | PathSet,
    index: RuleIndex,
    kg: KnowledgeGraph,
    h: int,
    t: int,
    top_k: int = 3,
    alpha_paths: float = 1.0,
    norm: str = "L1",
) -> list[RelationExplanation]:
    """Top-k predicted relations for (h,t) with their rule/path support."""
    composer = Composer(index)
    scorer = Scorer(emb, provider, composer, alpha_paths, norm)
    scores = scorer.relation_scores(h, t)
    order = np.argsort(scores, kind="stable")[:top_k]
    paths = provider.paths_between(h, t)
    out = []
    for r in order:
        r = int(r)
        evidence = []
        for p in paths:
            cr = composer.compose(p.relations)
            association = None
            if cr.fully_composed and cr.residual[0] != r:
                for deduced, beta in index.deduced_from(cr.residual[0]):
                    if deduced == r:
                        association = (cr.residual[0], r, beta)
                        break
            evidence.append(
                PathEvidence(
                    relations=p.relations,
                    reliability=p.reliability,
                    applied_rules=cr.applied_rules,
                    confidence_product=confidence_product(cr),
                    residual=cr.residual,
                    association=association,
                )
            )
        out.append(RelationExplanation(relation=r, score=float(scores[r]), paths=evidence))
    return out


def explanation_lines(
    explanations: list[RelationExplanation], kg: KnowledgeGraph, machine: bool = False
) -> list[str]:
    lines = []
    for exp in explanations:
        rname = kg.relation_name(exp.relation)
        if machine:
            lines.append(f"relation\t{rname}\t{exp.score:.6g}")
        else:
            lines.append(f"predicted relation {rname} (score {exp.score:.4f})")
        if not exp.paths:
            lines.append("path\tnone" if machine else "  triple term only")
            continue
        for ev in exp.paths:
            seq = ",".join(kg.relation_name(r) for r in ev.relations)
            res = ",".join(kg.relation_name(r) for r in ev.residual)
            if machine:
                lines.append(
                    f"path\t{seq}\t{ev.reliability:.6g}\t{ev.confidence_product:.6g}\t{res}"
                )
                for rule in ev.applied_rules:
                    lines.append("rule\t" + format_chain_rule(rule, kg))
                if ev.association:
                    frm, to, beta = ev.association
                    lines.append(
                        f"assoc\t{kg.relation_name(frm)}\t{kg.relation_name(to)}\t{beta:g}"
                    )
            else:
                lines.append(
                    f"  path ({seq}) reliability={ev.reliability:.3f} "
                    f"confidence={ev.confidence_product:.3f} residual=({res})"
                )
                for rule in ev.applied_rules:
                    lines.append("    applied rule " + format_chain_rule(rule, kg))
                if ev.association:
                    frm, to, beta = ev.association
                    lines.append(
                        f"    association {kg.relation_name(frm)} -> "
                        f"{kg.relation_name(to)} (confidence {beta:g})"
                    )
    return lines
