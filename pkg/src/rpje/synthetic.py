"""Synthetic rule-governed knowledge graphs for experiments and end-to-end tests.

The generator lays out a geography hierarchy (city -> state -> country) and
places persons in cities. Each person's ``born_in_city`` and ``born_in_country``
facts are observed, while ``born_in_state`` and ``nationality`` follow from the
good rule base and are partially held out as valid/test data, so the generator
doubles as the ground-truth oracle for them. Friendships are sampled only
between persons from different countries, which keeps ``friend_of`` paths
uninformative for the held-out queries. Training-set ``nationality`` facts are
additionally subsampled (``nationality_keep``): a model that exploits the
``nationality <= born_in_country`` rule can recover them from the fully
observed ``born_in_country`` facts, while a rule-free model is starved.

Optionally plants low-confidence wrong rules to exercise confidence-threshold
filtering: their bodies fire on many observed triples (or hijack path
compositions), dragging relation embeddings toward the wrong targets when no
threshold removes them.
"""

from __future__ import annotations

import os
import random
from dataclasses import dataclass, field

Row = tuple[str, str, str]

GOOD_RULES = [
    "born_in_state(a,b) <= born_in_city(a,e) & city_in_state(e,b)\t0.95",
    "nationality(a,b) <= born_in_state(a,e) & state_in_country(e,b)\t0.92",
    "nationality(a,b) <= born_in_country(a,b)\t0.9",
]

# Deliberately wrong rules with low confidence; a sensible threshold removes
# them, while threshold 0.0 lets them corrupt training and path composition.
NOISY_RULES = [
    "born_in_state(a,b) <= born_in_country(a,b)\t0.5",
    "nationality(a,b) <= born_in_city(a,b)\t0.5",
    "state_in_country(a,b) <= city_in_state(a,b)\t0.45",
    "nationality(a,b) <= friend_of(a,b)\t0.4",
    "friend_of(a,b) <= nationality(a,e) & state_in_country(b,e)\t0.45",
    "nationality(a,b) <= born_in_state(a,e) & city_in_state(b,e)\t0.42",
]


@dataclass
class ToyConfig:
    n_countries: int = 16
    states_per_country: int = 2
    cities_per_state: int = 2
    n_persons: int = 100
    friends_per_person: int = 2
    holdout_fraction: float = 0.2
    valid_fraction: float = 0.05
    nationality_keep: float = 0.3
    noisy_rules: bool = False
    seed: int = 7


@dataclass
class ToyData:
    train: list[Row]
    valid: list[Row]
    test: list[Row]
    rules: list[str]
    # every rule-inferable fact, split or not; useful as a ground-truth oracle
    inferable: list[Row] = field(default_factory=list)


def generate(cfg: ToyConfig) -> ToyData:
    rng = random.Random(cfg.seed)
    train: list[Row] = []
    inferable: list[Row] = []

    cities: list[str] = []
    city_state: dict[str, str] = {}
    state_country: dict[str, str] = {}
    for c in range(cfg.n_countries):
        country = f"country_{c}"
        for s in range(cfg.states_per_country):
            state = f"state_{c}_{s}"
            state_country[state] = country
            train.append((state, "state_in_country", country))
            for k in range(cfg.cities_per_state):
                city = f"city_{c}_{s}_{k}"
                city_state[city] = state
                cities.append(city)
                train.append((city, "city_in_state", state))

    persons = [f"person_{i}" for i in range(cfg.n_persons)]
    home: dict[str, str] = {}
    for p in persons:
        city = rng.choice(cities)
        state = city_state[city]
        country = state_country[state]
        home[p] = country
        train.append((p, "born_in_city", city))
        train.append((p, "born_in_country", country))
        inferable.append((p, "born_in_state", state))
        inferable.append((p, "nationality", country))
    for p in persons:
        foreigners = [q for q in persons if home[q] != home[p]]
        k = min(cfg.friends_per_person, len(foreigners))
        for friend in rng.sample(foreigners, k):
            train.append((p, "friend_of", friend))

    rng.shuffle(inferable)
    n_test = int(round(cfg.holdout_fraction * len(inferable)))
    n_valid = max(1, int(round(cfg.valid_fraction * len(inferable))))
    test = inferable[:n_test]
    valid = inferable[n_test : n_test + n_valid]
    train = train + inferable[n_test + n_valid :]

    keep_rng = random.Random(cfg.seed + 999)
    train = [
        t
        for t in train
        if t[1] != "nationality" or keep_rng.random() < cfg.nationality_keep
    ]

    rules = list(GOOD_RULES)
    if cfg.noisy_rules:
        rules += NOISY_RULES
    return ToyData(train=train, valid=valid, test=test, rules=rules, inferable=inferable)


def write_dataset(data: ToyData, directory: str | os.PathLike) -> dict[str, str]:
    """Write train/valid/test/rules files; returns their paths."""
    os.makedirs(directory, exist_ok=True)
    out = {}
    for split in ("train", "valid", "test"):
        path = os.path.join(directory, f"{split}.tsv")
        with open(path, "w", encoding="utf-8") as fh:
            for h, r, t in getattr(data, split):
                fh.write(f"{h}\t{r}\t{t}\n")
        out[split] = path
    rules_path = os.path.join(directory, "rules.tsv")
    with open(rules_path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(data.rules) + "\n")
    out["rules"] = rules_path
    return out
