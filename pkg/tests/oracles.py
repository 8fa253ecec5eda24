"""Independent reference implementations used only by the tests.

None of these import the package's solver, join engine, or norm code; they
recompute the same quantities by the most direct route available.
"""

from __future__ import annotations

import itertools
import math
from collections import Counter, defaultdict

import numpy as np


def nested_loop_join(atoms, relations):
    """Full join by trying every combination of tuples.

    ``atoms`` is a list of (relation name, variable-name tuple); the result is
    a set of dicts frozen as sorted item tuples.
    """
    out = set()
    rels = [list(relations[name]) for name, _ in atoms]
    for combo in itertools.product(*rels):
        binding = {}
        ok = True
        for (name, vars_), t in zip(atoms, combo):
            for var, val in zip(vars_, t):
                if binding.setdefault(var, val) != val:
                    ok = False
                    break
            if not ok:
                break
        if ok:
            out.add(tuple(sorted(binding.items())))
    return out


def brute_degrees(tuples, u_pos, v_pos):
    """Degree sequence straight from the definition, sorted descending."""
    groups = defaultdict(set)
    for t in set(tuples):
        groups[tuple(t[i] for i in u_pos)].add(tuple(t[i] for i in v_pos))
    return sorted((len(s) for s in groups.values()), reverse=True)


def brute_norm(degrees, p):
    if not degrees:
        return 0.0
    if math.isinf(p):
        return float(max(degrees))
    return sum(float(d) ** p for d in degrees) ** (1.0 / p)


def brute_log_norm(degrees, p):
    """log2 of the lp-norm; integer p uses exact integer powers."""
    if not degrees:
        return -math.inf
    if math.isinf(p):
        return math.log2(max(degrees))
    if p == int(p):
        return math.log2(sum(int(d) ** int(p) for d in degrees)) / p
    return math.log2(sum(float(d) ** p for d in degrees)) / p


def brute_entropy(tuples, positions):
    """Shannon entropy in bits of the uniform distribution's marginal."""
    rows = list(set(tuples))
    n = len(rows)
    counts = Counter(tuple(t[i] for i in positions) for t in rows)
    return -sum((c / n) * math.log2(c / n) for c in counts.values())


def vertex_lp_max(c, A_le, b_le, A_eq=None, b_eq=None, chunk=20000):
    """max c·x s.t. A_le x <= b_le, A_eq x = b_eq, x >= 0 by vertex enumeration.

    Only valid for bounded feasible programs. Returns (value, x).
    """
    c = np.asarray(c, float)
    n = c.size
    A_le = np.asarray(A_le, float).reshape(-1, n)
    b_le = np.asarray(b_le, float)
    A_eq = np.zeros((0, n)) if A_eq is None else np.asarray(A_eq, float).reshape(-1, n)
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, float)
    rows = np.vstack([A_le, -np.eye(n)])
    rhs = np.concatenate([b_le, np.zeros(n)])
    k_free = n - A_eq.shape[0]
    best, arg = -math.inf, None
    combos = itertools.combinations(range(rows.shape[0]), k_free)
    while True:
        batch = list(itertools.islice(combos, chunk))
        if not batch:
            break
        idx = np.array(batch, dtype=int).reshape(len(batch), k_free)
        M = np.concatenate([np.broadcast_to(A_eq, (len(batch),) + A_eq.shape), rows[idx]], axis=1)
        r = np.concatenate([np.broadcast_to(b_eq, (len(batch), b_eq.size)), rhs[idx]], axis=1)
        det = np.linalg.det(M)
        good = np.abs(det) > 1e-9
        if not good.any():
            continue
        xs = np.linalg.solve(M[good], r[good][..., None])[..., 0]
        feas = (xs @ A_le.T <= b_le + 1e-9).all(axis=1) & (xs >= -1e-9).all(axis=1)
        if A_eq.shape[0]:
            feas &= (np.abs(xs @ A_eq.T - b_eq) <= 1e-9).all(axis=1)
        if feas.any():
            vals = xs[feas] @ c
            j = int(np.argmax(vals))
            if vals[j] > best:
                best, arg = float(vals[j]), xs[feas][j]
    return best, arg


def all_shannon_inequalities(n):
    """Every monotonicity and submodularity inequality (not just elemental ones).

    Yields coefficient dicts ``d`` meaning ``Σ d[mask]·h(mask) <= 0``.
    """
    full = (1 << n) - 1
    for a in range(full + 1):
        for b in range(full + 1):
            if a & b == a and a != b:
                yield {a: 1.0, b: -1.0}  # h(A) <= h(B) for A ⊂ B
    for a in range(full + 1):
        for b in range(a + 1, full + 1):
            d = Counter()
            d[a | b] += 1.0
            d[a & b] += 1.0
            d[a] -= 1.0
            d[b] -= 1.0
            if any(d.values()):
                yield dict(d)
