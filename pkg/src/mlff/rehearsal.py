"""Historic-sample buffer and the five selection strategies.

All strategies operate on cached concatenated representations, select at most
``budget`` candidates, never duplicate, and are deterministic given their
seed.  Ties are broken by lowest sample id throughout so runs are exactly
reproducible.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DataError, ProtocolError


@dataclass
class BufferEntry:
    sample_id: int
    label: int
    task_id: int
    representation: np.ndarray  # cached at insertion, never recomputed


def entries_from_records(records) -> list[BufferEntry]:
    """Candidate entries from variant-0 records (selection ignores variants)."""
    out = []
    for r in records:
        if r.variant != 0:
            continue
        out.append(
            BufferEntry(
                sample_id=r.sample_id,
                label=r.label,
                task_id=r.task_id,
                representation=r.representation(),
            )
        )
    return out


def _sorted_by_id(entries) -> list[BufferEntry]:
    return sorted(entries, key=lambda e: e.sample_id)


def _group_by_class(entries) -> dict[int, list[BufferEntry]]:
    groups: dict[int, list[BufferEntry]] = {}
    for e in _sorted_by_id(entries):
        groups.setdefault(e.label, []).append(e)
    return groups


def per_class_budgets(class_counts: dict[int, int], budget: int) -> dict[int, int]:
    """Round-robin budget split over classes in ascending label order."""
    if budget < 0:
        raise ConfigurationError(f"budget must be >= 0, got {budget}")
    alloc = {k: 0 for k in sorted(class_counts)}
    remaining = budget
    while remaining > 0:
        progressed = False
        for k in sorted(class_counts):
            if remaining == 0:
                break
            if alloc[k] < class_counts[k]:
                alloc[k] += 1
                remaining -= 1
                progressed = True
        if not progressed:
            break  # every class exhausted
    return alloc


def _matrix(entries) -> np.ndarray:
    if not entries:
        return np.zeros((0, 0), dtype=np.float64)
    mat = np.stack([np.asarray(e.representation, dtype=np.float64) for e in entries])
    if not np.all(np.isfinite(mat)):
        raise DataError("representations contain NaN or Inf")
    return mat


# ---------------------------------------------------------------------------
# strategies; each returns (selected ids, score per selected id)
# ---------------------------------------------------------------------------

def _balanced_random(groups, budgets, seed):
    rng = np.random.default_rng(seed)
    ids, scores = [], []
    for k in sorted(groups):
        pool = list(groups[k])
        for _ in range(budgets.get(k, 0)):
            j = int(rng.integers(len(pool)))
            ids.append(pool.pop(j).sample_id)
            scores.append(1.0)
    return ids, scores


def _mean(groups, budgets):
    ids, scores = [], []
    for k in sorted(groups):
        entries = groups[k]
        mat = _matrix(entries)
        mean = mat.mean(axis=0)
        dists = np.linalg.norm(mat - mean, axis=1)
        order = np.lexsort((np.array([e.sample_id for e in entries]), dists))
        for j in order[: budgets.get(k, 0)]:
            ids.append(entries[j].sample_id)
            scores.append(-float(dists[j]))
    return ids, scores


def _fps(groups, budgets):
    ids, scores = [], []
    for k in sorted(groups):
        entries = groups[k]  # already ascending sample_id: argmin/argmax break ties low
        take = budgets.get(k, 0)
        if take == 0:
            continue
        mat = _matrix(entries)
        mean = mat.mean(axis=0)
        seed_idx = int(np.argmin(np.linalg.norm(mat - mean, axis=1)))
        chosen = [seed_idx]
        ids.append(entries[seed_idx].sample_id)
        scores.append(0.0)
        min_dist = np.linalg.norm(mat - mat[seed_idx], axis=1)
        min_dist[seed_idx] = -1.0  # never reselect
        while len(chosen) < take:
            cand = int(np.argmax(min_dist))
            chosen.append(cand)
            ids.append(entries[cand].sample_id)
            scores.append(float(min_dist[cand]))
            min_dist = np.minimum(min_dist, np.linalg.norm(mat - mat[cand], axis=1))
            min_dist[chosen] = -1.0  # never reselect
    return ids, scores


def _cosine_distance_to_mean(mat: np.ndarray) -> np.ndarray:
    mean = mat.mean(axis=0)
    mean_norm = np.linalg.norm(mean)
    norms = np.linalg.norm(mat, axis=1)
    d = np.ones(mat.shape[0])  # zero vectors keep cosine distance 1
    ok = (norms > 0) & (mean_norm > 0)
    if mean_norm > 0:
        d[ok] = 1.0 - (mat[ok] @ mean) / (norms[ok] * mean_norm)
    return d


def _grasp(groups, budgets, seed, epsilon):
    rng = np.random.default_rng(seed)
    ids, scores = [], []
    for k in sorted(groups):
        entries = groups[k]
        take = budgets.get(k, 0)
        if take == 0:
            continue
        weights = 1.0 / (epsilon + _cosine_distance_to_mean(_matrix(entries)))
        remaining = list(range(len(entries)))
        for _ in range(take):
            w = weights[remaining]
            j = int(rng.choice(len(remaining), p=w / w.sum()))
            idx = remaining.pop(j)
            ids.append(entries[idx].sample_id)
            scores.append(float(weights[idx]))
    return ids, scores


def knn_shapley(reps: np.ndarray, labels: np.ndarray, eval_rep: np.ndarray, eval_label: int,
                k: int, sample_ids=None) -> np.ndarray:
    """Exact Shapley values of each candidate for a K-NN vote on one point.

    Candidates are ranked by Euclidean distance to the evaluation point (ties
    broken by lowest sample id); values follow the closed-form recursion from
    the farthest candidate inward.
    """
    if k < 1:
        raise ConfigurationError(f"K must be >= 1, got {k}")
    reps = np.asarray(reps, dtype=np.float64)
    labels = np.asarray(labels)
    m = reps.shape[0]
    if m < 1:
        raise ConfigurationError("need at least one candidate")
    if sample_ids is None:
        sample_ids = np.arange(m)
    dists = np.linalg.norm(reps - np.asarray(eval_rep, dtype=np.float64), axis=1)
    order = np.lexsort((np.asarray(sample_ids), dists))
    match = (labels[order] == eval_label).astype(np.float64)
    sv = np.zeros(m)
    # min(k, m)/(k*m) reduces to 1/m for the usual m >= k case and keeps the
    # recursion exact against subset enumeration when fewer than k candidates
    # exist
    sv[m - 1] = match[m - 1] * min(k, m) / (k * m)
    for i in range(m - 2, -1, -1):
        pos = i + 1  # 1-based rank of candidate i
        sv[i] = sv[i + 1] + (match[i] - match[i + 1]) / k * min(k, pos) / pos
    values = np.zeros(m)
    values[order] = sv
    return values


def _aser(groups, budgets, k, eval_subsample, seed):
    entries = _sorted_by_id([e for g in groups.values() for e in g])
    mat = _matrix(entries)
    labels = np.array([e.label for e in entries])
    ids = np.array([e.sample_id for e in entries])
    n = len(entries)
    rng = np.random.default_rng(seed)
    eval_indices = []  # indices into `entries`
    for kls in sorted(groups):
        members = np.flatnonzero(labels == kls)
        size = min(eval_subsample, members.size)
        eval_indices.extend(members[rng.choice(members.size, size=size, replace=False)])
    coop_sum = np.zeros(n)
    coop_cnt = np.zeros(n)
    adv_sum = np.zeros(n)
    adv_cnt = np.zeros(n)
    for e_idx in eval_indices:
        mask = np.arange(n) != e_idx  # an eval point never evaluates itself
        sv = np.zeros(n)
        sv[mask] = knn_shapley(
            mat[mask], labels[mask], mat[e_idx], labels[e_idx], k, ids[mask]
        )
        same = mask & (labels == labels[e_idx])
        other = mask & (labels != labels[e_idx])
        coop_sum[same] += sv[same]
        coop_cnt[same] += 1
        adv_sum[other] += sv[other]
        adv_cnt[other] += 1
    coop = np.divide(coop_sum, coop_cnt, out=np.zeros(n), where=coop_cnt > 0)
    adv = np.divide(adv_sum, adv_cnt, out=np.zeros(n), where=adv_cnt > 0)
    score = coop - adv
    out_ids, out_scores = [], []
    for kls in sorted(groups):
        members = np.flatnonzero(labels == kls)
        order = members[np.lexsort((ids[members], -score[members]))]
        for j in order[: budgets.get(kls, 0)]:
            out_ids.append(int(ids[j]))
            out_scores.append(float(score[j]))
    return out_ids, out_scores


# ---------------------------------------------------------------------------
# public strategy surface
# ---------------------------------------------------------------------------

STRATEGIES = ("balanced_random", "fps", "mean", "grasp", "aser")


def select_with_scores(strategy: str, candidates, budget: int, seed: int = 0, *,
                       k: int = 5, eval_subsample: int = 64,
                       epsilon: float = 1e-8) -> tuple[list[int], list[float]]:
    if budget < 0:
        raise ConfigurationError(f"budget must be >= 0, got {budget}")
    candidates = list(candidates)
    groups = _group_by_class(candidates)
    if not groups or budget == 0:
        return [], []
    budgets = per_class_budgets({k_: len(v) for k_, v in groups.items()}, budget)
    if strategy == "balanced_random":
        return _balanced_random(groups, budgets, seed)
    if strategy == "fps":
        return _fps(groups, budgets)
    if strategy == "mean":
        return _mean(groups, budgets)
    if strategy == "grasp":
        return _grasp(groups, budgets, seed, epsilon)
    if strategy == "aser":
        return _aser(groups, budgets, k, eval_subsample, seed)
    raise ConfigurationError(f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")


def select_balanced_random(candidates, budget: int, seed: int = 0) -> list[int]:
    return select_with_scores("balanced_random", candidates, budget, seed)[0]


def select_fps(candidates, budget: int, seed: int = 0) -> list[int]:
    return select_with_scores("fps", candidates, budget, seed)[0]


def select_mean(candidates, budget: int) -> list[int]:
    return select_with_scores("mean", candidates, budget)[0]


def select_grasp(candidates, budget: int, seed: int = 0, epsilon: float = 1e-8) -> list[int]:
    return select_with_scores("grasp", candidates, budget, seed, epsilon=epsilon)[0]


def select_aser(candidates, budget: int, k: int = 5, eval_subsample: int = 64,
                seed: int = 0) -> list[int]:
    return select_with_scores("aser", candidates, budget, seed, k=k,
                              eval_subsample=eval_subsample)[0]


def write_selection_csv(path, candidates, ids: list[int], scores: list[float],
                        strategy: str) -> None:
    by_id = {e.sample_id: e for e in candidates}
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["sample_id", "label", "task_id", "score", "strategy"])
        for sid, score in zip(ids, scores):
            e = by_id[sid]
            writer.writerow([sid, e.label, e.task_id, repr(float(score)), strategy])


# ---------------------------------------------------------------------------
# capacity-bounded buffer
# ---------------------------------------------------------------------------

class RehearsalBuffer:
    """Equal per-task capacity split; shrinks old holdings by re-selection.

    Old tasks are re-selected from the entries still held (the full old
    training data is gone by design); the freshly finished task is selected
    from everything it offers.
    """

    def __init__(self, capacity: int):
        if capacity < 0:
            raise ConfigurationError(f"capacity must be >= 0, got {capacity}")
        self.capacity = capacity
        self._held: dict[int, list[BufferEntry]] = {}
        self._order: list[int] = []

    def __len__(self) -> int:
        return sum(len(v) for v in self._held.values())

    @property
    def allocations(self) -> dict[int, int]:
        return {t: len(self._held[t]) for t in self._order}

    def entries(self) -> list[BufferEntry]:
        return [e for t in self._order for e in self._held[t]]

    def update(self, task_id: int, candidates, strategy: str, seed: int, **opts) -> None:
        if task_id in self._held:
            raise ProtocolError(f"task {task_id} was already added to the buffer")
        self._order.append(task_id)
        tasks = len(self._order)
        if self.capacity < tasks:
            raise ProtocolError(
                f"buffer capacity {self.capacity} cannot hold {tasks} tasks"
            )
        base, rem = divmod(self.capacity, tasks)
        by_id = {e.sample_id: e for e in candidates}
        self._held[task_id] = []
        for slot, tid in enumerate(self._order):
            quota = base + (1 if slot < rem else 0)
            pool = self._held[tid] if tid != task_id else list(by_id.values())
            if len(pool) <= quota and tid != task_id:
                continue  # nothing to shrink
            child_seed = int(np.random.SeedSequence([seed, slot]).generate_state(1)[0])
            chosen, _ = select_with_scores(strategy, pool, quota, child_seed, **opts)
            lookup = {e.sample_id: e for e in pool}
            self._held[tid] = [lookup[s] for s in sorted(chosen)]
