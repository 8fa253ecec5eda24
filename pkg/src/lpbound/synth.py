"""Random relations and graphs for fuzzing and examples."""

from __future__ import annotations

import random
from typing import Optional, Sequence

from .stats_engine import Relation


def random_relation(
    rng: random.Random,
    name: str,
    columns: Sequence[str] = ("a", "b"),
    max_tuples: int = 200,
    domain: int = 20,
    min_tuples: int = 1,
) -> Relation:
    k = rng.randint(min_tuples, max_tuples)
    rows = [tuple(rng.randrange(domain) for _ in columns) for _ in range(k)]
    return Relation(name, tuple(columns), rows)


def skewed_relation(
    rng: random.Random,
    name: str,
    max_tuples: int = 200,
    domain: int = 30,
    alpha: float = 1.2,
) -> Relation:
    """Binary relation whose first column follows a Zipf-like law."""
    weights = [1.0 / (i + 1) ** alpha for i in range(domain)]
    k = rng.randint(1, max_tuples)
    xs = rng.choices(range(domain), weights=weights, k=k)
    return Relation(name, ("a", "b"), [(x, rng.randrange(domain)) for x in xs])


def power_law_graph(
    rng: random.Random,
    n_nodes: int,
    n_edges: int,
    alpha: float = 1.0,
    name: str = "E",
) -> Relation:
    """Undirected power-law graph as a symmetric edge relation without loops.

    Endpoints are drawn independently from a Zipf distribution over shuffled
    node ids, so a few hubs carry most of the edges.
    """
    nodes = list(range(n_nodes))
    rng.shuffle(nodes)
    weights = [1.0 / (i + 1) ** alpha for i in range(n_nodes)]
    edges: set[tuple[int, int]] = set()
    attempts = 0
    while len(edges) < 2 * n_edges and attempts < 50 * n_edges:
        attempts += 1
        u, v = rng.choices(nodes, weights=weights, k=2)
        if u != v:
            edges.add((u, v))
            edges.add((v, u))
    return Relation(name, ("src", "dst"), sorted(edges))


def uniform_degree_relation(n_keys: int, degree: int, name: str = "R", offset: int = 0) -> Relation:
    """Every key in ``range(n_keys)`` has exactly ``degree`` partners."""
    return Relation(name, ("a", "b"), [(k, offset + k * degree + j) for k in range(n_keys) for j in range(degree)])


def seeded(seed: Optional[int]) -> random.Random:
    return random.Random(seed)
