"""Embedding table, training hyperparameters, energy functions and checkpoints."""

from __future__ import annotations

import hashlib
import json
import os
import struct
from dataclasses import dataclass, asdict, field

import numpy as np

from .kg import KnowledgeGraph
from .compose import CompositionResult, compose_embedding, confidence_product
from .paths import Path


class ConfigError(ValueError):
    """Invalid hyperparameter combination."""


@dataclass
class TrainingConfig:
    """Hyperparameters; defaults follow the best reported experimental settings."""

    dim: int = 100
    lr: float = 0.001
    epochs: int = 500
    n_batches: int = 100
    margin_triple: float = 1.0   # gamma_1
    margin_path: float = 1.0     # gamma_2
    margin_relpair: float = 1.0  # gamma_3
    alpha_paths: float = 1.0     # alpha_1
    alpha_relpairs: float = 3.0  # alpha_2
    norm: str = "L1"
    confidence_threshold: float = 0.7
    max_path_steps: int = 2
    path_cutoff: float = 0.01
    per_pair_cap: int = 200
    seed: int = 0
    disable_paths_and_r2: bool = False  # -PaRu2 ablation: drop E2/L2
    disable_r1: bool = False            # -Ru1 ablation: drop E3/L3
    deterministic: bool = True

    def validate(self) -> None:
        if self.dim <= 0:
            raise ConfigError("dim must be positive")
        if min(self.margin_triple, self.margin_path, self.margin_relpair) <= 0:
            raise ConfigError("margins must be positive")
        if self.alpha_paths < 0 or self.alpha_relpairs < 0:
            raise ConfigError("loss weights must be non-negative")
        if self.norm not in ("L1", "L2"):
            raise ConfigError(f"norm must be L1 or L2, got {self.norm!r}")
        if self.max_path_steps not in (2, 3):
            raise ConfigError("max_path_steps must be 2 or 3")
        if not 0.0 <= self.confidence_threshold <= 1.0:
            raise ConfigError("confidence_threshold must lie in [0,1]")

    def digest(self) -> str:
        return hashlib.sha256(
            json.dumps(asdict(self), sort_keys=True).encode()
        ).hexdigest()


def dissimilarity(x: np.ndarray, norm: str) -> float:
    if norm == "L1":
        return float(np.abs(x).sum())
    return float(np.sqrt((x * x).sum()))


def dissimilarity_grad(x: np.ndarray, norm: str) -> np.ndarray:
    """Subgradient of the dissimilarity at x (sign convention: 0 at L1 kinks)."""
    if norm == "L1":
        return np.sign(x)
    n = np.sqrt((x * x).sum())
    if n == 0.0:
        return np.zeros_like(x)
    return x / n


class EmbeddingTable:
    """Dense entity/base-relation vectors; inverse relations are served negated."""

    def __init__(self, entities: np.ndarray, relations: np.ndarray):
        self.entities = entities
        self.relations = relations

    @property
    def dim(self) -> int:
        return self.entities.shape[1]

    @property
    def n_entities(self) -> int:
        return self.entities.shape[0]

    @property
    def n_base_relations(self) -> int:
        return self.relations.shape[0]

    def relation_vec(self, r: int) -> np.ndarray:
        n = self.n_base_relations
        if r >= n:
            return -self.relations[r - n]
        return self.relations[r]

    def copy(self) -> "EmbeddingTable":
        return EmbeddingTable(self.entities.copy(), self.relations.copy())


def init_embeddings(kg: KnowledgeGraph, cfg: TrainingConfig) -> EmbeddingTable:
    """Uniform in [-6/sqrt(d), 6/sqrt(d)] per coordinate, then row-normalized."""
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    bound = 6.0 / np.sqrt(cfg.dim)

    def sample(n):
        m = rng.uniform(-bound, bound, size=(n, cfg.dim))
        m /= np.linalg.norm(m, axis=1, keepdims=True)
        return m

    return EmbeddingTable(sample(kg.n_entities), sample(kg.n_base_relations))


def energy_triple(emb: EmbeddingTable, h: int, r: int, t: int, norm: str) -> float:
    """E1 = ||h + r - t||."""
    return dissimilarity(emb.entities[h] + emb.relation_vec(r) - emb.entities[t], norm)


def energy_path(
    emb: EmbeddingTable, p: Path, cr: CompositionResult, r: int, norm: str
) -> float:
    """E2 = R(p|h,t) * prod(mu) * ||C(p) - r||."""
    weight = p.reliability * confidence_product(cr)
    return weight * dissimilarity(compose_embedding(cr, emb) - emb.relation_vec(r), norm)


def energy_relpair(emb: EmbeddingTable, r: int, r_e: int, norm: str) -> float:
    """E3 = ||r - r_e||."""
    return dissimilarity(emb.relation_vec(r) - emb.relation_vec(r_e), norm)


_CKPT_MAGIC = b"RPJECKPT"
_CKPT_VERSION = 1


class CheckpointError(ValueError):
    """Corrupt or incompatible checkpoint."""


def save_checkpoint(
    emb: EmbeddingTable, dataset_hash: str, config_digest: str, path
) -> None:
    with open(path, "wb") as fh:
        fh.write(_CKPT_MAGIC)
        fh.write(struct.pack("<H", _CKPT_VERSION))
        fh.write(struct.pack("<III", emb.dim, emb.n_entities, emb.n_base_relations))
        fh.write(bytes.fromhex(dataset_hash))
        fh.write(bytes.fromhex(config_digest))
        fh.write(np.ascontiguousarray(emb.entities, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(emb.relations, dtype="<f8").tobytes())


def load_checkpoint(
    path, expected_dataset_hash: str | None = None
) -> tuple[EmbeddingTable, str, str]:
    """Returns (table, dataset_hash, config_digest)."""
    with open(path, "rb") as fh:
        if fh.read(len(_CKPT_MAGIC)) != _CKPT_MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint file")
        (version,) = struct.unpack("<H", fh.read(2))
        if version != _CKPT_VERSION:
            raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
        dim, n_ent, n_rel = struct.unpack("<III", fh.read(12))
        ds_hash = fh.read(32).hex()
        cfg_digest = fh.read(32).hex()
        if expected_dataset_hash is not None and ds_hash != expected_dataset_hash:
            raise CheckpointError(f"{path}: checkpoint built for a different dataset")
        ents = np.frombuffer(fh.read(8 * n_ent * dim), dtype="<f8").reshape(n_ent, dim)
        rels = np.frombuffer(fh.read(8 * n_rel * dim), dtype="<f8").reshape(n_rel, dim)
    return EmbeddingTable(ents.copy(), rels.copy()), ds_hash, cfg_digest
