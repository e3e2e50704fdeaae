"""Exact assignment of action subsets to actors under label coverage.

Given per-actor subset score tables over a clip's label set ``L``, pick one
non-empty subset per actor, maximizing the total score, such that every
label in ``L`` appears in at least one chosen subset. The objective is
separable per actor and the only coupling is coverage, so the binary
program is solved exactly by dynamic programming over coverage masks: no
external ILP solver is involved and no approximation is made.

``g[i][R]`` is the best total score actors ``i..n-1`` can reach while
jointly covering every label in mask ``R``. Transitions scan each candidate
subset ``w``::

    g[i][R] = max over non-empty w of  p_i[w] + g[i+1][R \\ w]

and the answer is ``g[0][full]``. Objectives accumulate from the last actor
to the first; the fixed order makes optima bit-for-bit comparable between
this solver and the exhaustive reference below. The reconstruction walks
actors in input order picking, at each step, the smallest-bit-value subset
that still reaches the optimum, so ties resolve to the lexicographically
smallest subset sequence.
"""

from __future__ import annotations

import itertools
import math
from typing import Iterable, Sequence

import numpy as np

from .core import (
    ActionSubset,
    AssignmentResult,
    PowerSetTooLargeError,
    ValidationError,
)
from .scoring import SubsetScoreTable, _global_masks, sorted_label_tuple

DEFAULT_SOLVER_CAP = 14
BRUTE_FORCE_LIMIT = 10**7

# Index matrices (states & ~w per candidate w) are cached only for small
# label sets; 2^(2k) entries get large quickly.
_INDEX_CACHE_MAX_K = 11
_INDEX_CACHE: dict[int, np.ndarray] = {}


def _strip_index(k: int) -> np.ndarray:
    """Row w holds ``state & ~w`` for every state; used to gather dp slices."""
    cached = _INDEX_CACHE.get(k)
    if cached is None:
        states = np.arange(1 << k, dtype=np.int64)
        cached = states[None, :] & ~states[:, None]
        cached.flags.writeable = False
        _INDEX_CACHE[k] = cached
    return cached


def _score_rows(
    tables: Sequence[SubsetScoreTable], classes: tuple[int, ...]
) -> np.ndarray:
    """Stack per-actor score vectors, with the empty subset pinned to -inf."""
    size = 1 << len(classes)
    rows = np.empty((len(tables), size), dtype=np.float64)
    for i, table in enumerate(tables):
        if table.label_set != classes:
            raise ValidationError(
                f"score table for actor {table.actor_id} covers labels "
                f"{table.label_set}, expected {classes}"
            )
        if len(table.scores) != size:
            raise ValidationError(
                f"score table for actor {table.actor_id} has {len(table.scores)} "
                f"entries, expected {size}"
            )
        rows[i] = table.scores
    rows[:, 0] = -math.inf
    return rows


def _empty_result(feasible: bool) -> AssignmentResult:
    return AssignmentResult(
        assignments=(),
        objective=0.0 if feasible else -math.inf,
        feasible=feasible,
    )


def _build_result(
    tables: Sequence[SubsetScoreTable],
    classes: tuple[int, ...],
    chosen_masks: Sequence[int],
    objective: float,
) -> AssignmentResult:
    global_masks = _global_masks(classes)
    assignments = tuple(
        (table.actor_id, ActionSubset(global_masks[m]))
        for table, m in zip(tables, chosen_masks)
    )
    return AssignmentResult(assignments=assignments, objective=float(objective), feasible=True)


def solve_assignment(
    tables: Sequence[SubsetScoreTable],
    label_set: Iterable[int],
    cap: int = DEFAULT_SOLVER_CAP,
) -> AssignmentResult:
    """Optimal coverage-constrained assignment of one non-empty subset per actor.

    Actors are processed in the order given (callers keep them sorted by
    actor id); among equal-objective optima the lexicographically smallest
    sequence of subset bit values wins. An empty label set yields the empty
    feasible assignment with objective 0; no actors with a non-empty label
    set is reported infeasible rather than raised.
    """
    classes = sorted_label_tuple(label_set)
    k = len(classes)
    if k > cap:
        raise PowerSetTooLargeError(f"label set too large for exact solver: |L|={k} exceeds cap {cap}")
    if k == 0:
        return _empty_result(feasible=True)
    n = len(tables)
    if n == 0:
        return _empty_result(feasible=False)

    size = 1 << k
    full = size - 1
    rows = _score_rows(tables, classes)
    states = np.arange(size, dtype=np.int64)
    strip = _strip_index(k) if k <= _INDEX_CACHE_MAX_K else None

    # Suffix tables: g[i][R] = best total for actors i..n-1 covering R.
    g = [np.empty(0)] * n
    g_next = np.full(size, -math.inf)
    g_next[0] = 0.0
    suffix = g_next
    for i in range(n - 1, -1, -1):
        p = rows[i]
        g_i = np.full(size, -math.inf)
        for w in range(1, size):
            idx = strip[w] if strip is not None else states & ~w
            np.maximum(g_i, p[w] + suffix[idx], out=g_i)
        g[i] = g_i
        suffix = g_i

    objective = g[0][full]
    # n >= 1 and every actor may take the full set, so the optimum is finite.
    chosen: list[int] = []
    remaining = full
    for i in range(n):
        target = g[i][remaining]
        nxt = g[i + 1] if i + 1 < n else g_next
        p = rows[i]
        for w in range(1, size):
            if p[w] + nxt[remaining & ~w] == target:
                chosen.append(w)
                remaining &= ~w
                break
        else:  # pragma: no cover - the maximizing subset always satisfies the check
            raise AssertionError("dp reconstruction failed")
    return _build_result(tables, classes, chosen, objective)


def brute_force_assignment(
    tables: Sequence[SubsetScoreTable],
    label_set: Iterable[int],
    limit: int = BRUTE_FORCE_LIMIT,
) -> AssignmentResult:
    """Exhaustive reference solver: enumerate every subset-per-actor combination.

    Enumeration runs in lexicographic order of subset bit values with a
    strictly-greater incumbent test, so the tie-breaking rule matches
    :func:`solve_assignment`: first (lexicographically smallest) optimum
    wins. Objectives accumulate last actor first, the same fold order as the
    dynamic program.
    """
    classes = sorted_label_tuple(label_set)
    k = len(classes)
    if k == 0:
        return _empty_result(feasible=True)
    n = len(tables)
    if n == 0:
        return _empty_result(feasible=False)

    size = 1 << k
    full = size - 1
    if (size - 1) ** n > limit:
        raise ValidationError(
            f"brute-force search space ({size - 1}^{n}) exceeds limit {limit}"
        )
    rows = _score_rows(tables, classes)
    best_obj = -math.inf
    best: tuple[int, ...] | None = None
    for combo in itertools.product(range(1, size), repeat=n):
        covered = 0
        for w in combo:
            covered |= w
        if covered != full:
            continue
        obj = 0.0
        for i in range(n - 1, -1, -1):
            obj = rows[i][combo[i]] + obj
        if obj > best_obj:
            best_obj = obj
            best = combo
    assert best is not None  # n >= 1 makes the all-full combo feasible
    return _build_result(tables, classes, best, best_obj)


def assign_without_lp(
    logits_rows: Sequence[Sequence[float]], label_set: Iterable[int]
) -> list[ActionSubset]:
    """Per-actor independent thresholding baseline: no coverage, no solver.

    Each actor keeps the labels whose class probability exceeds 0.5, i.e.
    whose logit is strictly positive (a logit of exactly 0 is excluded).
    Subsets may be empty and the union may miss annotated labels; that is
    the point of this baseline.
    """
    classes = sorted_label_tuple(label_set)
    out = []
    for row in logits_rows:
        bits = 0
        for c in classes:
            if c >= len(row):
                raise ValidationError(
                    f"label {c} out of range for {len(row)} logits"
                )
            v = float(row[c])
            if not math.isfinite(v):
                raise ValidationError(f"logit for class {c} is not finite: {v!r}")
            if v > 0.0:
                bits |= 1 << c
        out.append(ActionSubset(bits))
    return out


def check_assignment(
    result: AssignmentResult, label_set: Iterable[int], actor_count: int
) -> None:
    """Structural check of the coverage constraints; raises on violation.

    Verifies one non-empty subset per actor, every subset within the label
    set, and every label covered by the union. Used by tests and by callers
    that want defense in depth on solver output.
    """
    classes = sorted_label_tuple(label_set)
    if not result.feasible:
        raise ValidationError("assignment is not feasible")
    if len(classes) == 0:
        if result.assignments:
            raise ValidationError("empty label set must produce an empty assignment")
        return
    if len(result.assignments) != actor_count:
        raise ValidationError(
            f"expected {actor_count} assignments, got {len(result.assignments)}"
        )
    lbits = 0
    for c in classes:
        lbits |= 1 << c
    union = 0
    for actor_id, subset in result.assignments:
        if subset.is_empty:
            raise ValidationError(f"actor {actor_id} was assigned the empty subset")
        if subset.bits & ~lbits:
            raise ValidationError(
                f"actor {actor_id} assigned classes outside the label set"
            )
        union |= subset.bits
    if union != lbits:
        missing = [c for c in classes if not (union >> c) & 1]
        raise ValidationError(f"labels not covered by any actor: {missing}")
