"""Personalized PageRank over the frozen graph.

The iterative solver finds the fixed point of

    p = (1 - d) * r + d * (M @ p + dangling_mass * r)

where M is the column-stochastic transition built from the undirected weighted
edges, d the damping factor, and r the reset distribution. Mass leaving
zero-degree nodes is redirected into the reset distribution, so the total
probability is conserved at every step. A dense linear-solve oracle on the
same formulation backs the tests and the `verify` command.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateResetError, ValidationError
from .kg import OpenKG

logger = logging.getLogger(__name__)

DEFAULT_DAMPING = 0.5
DEFAULT_TOLERANCE = 1e-8
DEFAULT_MAX_ITERATIONS = 1000
DEFAULT_MAX_PHRASE_SEEDS = 5
DEFAULT_PASSAGE_WEIGHT = 0.05

_ORACLE_NODE_LIMIT = 1000


@dataclass(frozen=True)
class PprParams:
    damping: float = DEFAULT_DAMPING
    tolerance: float = DEFAULT_TOLERANCE
    max_iterations: int = DEFAULT_MAX_ITERATIONS

    def validate(self) -> None:
        if not 0.0 < self.damping < 1.0:
            raise ValidationError(f"damping must be in (0, 1), got {self.damping}")
        if self.tolerance <= 0.0:
            raise ValidationError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValidationError("max_iterations must be >= 1")


@dataclass(frozen=True)
class ResetVector:
    """Sparse node -> probability map; values are non-negative and sum to 1."""

    entries: dict[int, float]
    weight_factor: float
    phrase_seed_ids: tuple[int, ...]

    @property
    def phrase_seed_count(self) -> int:
        return len(self.phrase_seed_ids)

    def to_array(self, n: int) -> np.ndarray:
        vec = np.zeros(n, dtype=np.float64)
        for node_id, prob in self.entries.items():
            vec[node_id] = prob
        return vec


@dataclass(frozen=True)
class PprScores:
    scores: np.ndarray
    iterations: int
    converged: bool

    def of(self, node_id: int) -> float:
        return float(self.scores[node_id])

    def as_dict(self) -> dict[int, float]:
        return {i: float(v) for i, v in enumerate(self.scores) if v > 0.0}


def build_reset_vector(kg: OpenKG, kept_triples, passage_scores: dict[int, float],
                       weight_factor: float = DEFAULT_PASSAGE_WEIGHT,
                       max_phrase_seeds: int = DEFAULT_MAX_PHRASE_SEEDS) -> ResetVector:
    """Seed distribution from filtered triples and passage similarities.

    A phrase's raw score is the mean score of the kept triples it appears in
    (as subject or object); only the top ``max_phrase_seeds`` phrases are kept.
    Every passage with positive similarity is seeded at ``clip(sim, 0) *
    weight_factor``. The concatenation is normalized to sum to 1.
    """
    if weight_factor <= 0.0:
        raise ValidationError(f"weight_factor must be positive, got {weight_factor}")
    if max_phrase_seeds < 1:
        raise ValidationError(f"max_phrase_seeds must be >= 1, got {max_phrase_seeds}")

    scores_by_phrase: dict[int, list[float]] = {}
    for st in kept_triples:
        triple = kg.triple(st.triple_id)
        for node_id in {triple.subject_id, triple.object_id}:
            scores_by_phrase.setdefault(node_id, []).append(st.score)
    phrase_scores = {
        node_id: float(np.mean(values)) for node_id, values in scores_by_phrase.items()
    }
    ranked = sorted(phrase_scores.items(), key=lambda item: (-item[1], item[0]))
    seeds = [(node_id, score) for node_id, score in ranked[:max_phrase_seeds] if score > 0.0]

    raw: dict[int, float] = {node_id: score for node_id, score in seeds}
    for passage_id, sim in passage_scores.items():
        adjusted = max(float(sim), 0.0) * weight_factor
        if adjusted > 0.0:
            raw[passage_id] = raw.get(passage_id, 0.0) + adjusted

    total = sum(raw.values())
    if total <= 0.0:
        raise DegenerateResetError("all seed scores are zero")
    entries = {node_id: value / total for node_id, value in raw.items()}
    return ResetVector(entries=entries, weight_factor=weight_factor,
                       phrase_seed_ids=tuple(node_id for node_id, _ in seeds))


def seeds_to_reset_vector(phrase_seeds: list[tuple[int, float]],
                          passage_scores: dict[int, float],
                          weight_factor: float = DEFAULT_PASSAGE_WEIGHT,
                          max_phrase_seeds: int = DEFAULT_MAX_PHRASE_SEEDS) -> ResetVector:
    """Reset distribution from directly scored phrase seeds (node/entity link modes)."""
    if weight_factor <= 0.0:
        raise ValidationError(f"weight_factor must be positive, got {weight_factor}")
    ranked = sorted(phrase_seeds, key=lambda item: (-item[1], item[0]))
    deduped: dict[int, float] = {}
    for node_id, score in ranked:
        if node_id not in deduped and score > 0.0:
            deduped[node_id] = float(score)
        if len(deduped) >= max_phrase_seeds:
            break
    raw = dict(deduped)
    for passage_id, sim in passage_scores.items():
        adjusted = max(float(sim), 0.0) * weight_factor
        if adjusted > 0.0:
            raw[passage_id] = raw.get(passage_id, 0.0) + adjusted
    total = sum(raw.values())
    if total <= 0.0:
        raise DegenerateResetError("all seed scores are zero")
    entries = {node_id: value / total for node_id, value in raw.items()}
    return ResetVector(entries=entries, weight_factor=weight_factor,
                       phrase_seed_ids=tuple(deduped))


def run_ppr(kg: OpenKG, reset: ResetVector, params: PprParams | None = None) -> PprScores:
    """Power iteration until the L1 step change drops below tolerance."""
    params = params or PprParams()
    params.validate()
    if not kg.frozen:
        raise ValidationError("graph must be frozen before running PPR")
    n = kg.node_count
    r = reset.to_array(n)
    _check_reset(r)
    matrix, dangling = kg.transition()
    has_dangling = bool(dangling.any())
    d = params.damping
    p = r.copy()
    iterations = 0
    converged = False
    for iterations in range(1, params.max_iterations + 1):
        dangling_mass = float(p[dangling].sum()) if has_dangling else 0.0
        p_next = (1.0 - d) * r + d * (matrix @ p + dangling_mass * r)
        delta = float(np.abs(p_next - p).sum())
        p = p_next
        if delta <= params.tolerance:
            converged = True
            break
    if not converged:
        logger.warning("PPR did not converge in %d iterations", params.max_iterations)
    return PprScores(scores=p, iterations=iterations, converged=converged)


def dense_ppr_oracle(kg: OpenKG, reset: ResetVector, damping: float = DEFAULT_DAMPING) -> PprScores:
    """Exact stationary distribution via a dense linear solve; test/verify only."""
    if not 0.0 < damping < 1.0:
        raise ValidationError(f"damping must be in (0, 1), got {damping}")
    n = kg.node_count
    if n > _ORACLE_NODE_LIMIT:
        raise ValidationError(
            f"dense oracle refuses graphs over {_ORACLE_NODE_LIMIT} nodes (got {n})")
    r = reset.to_array(n)
    _check_reset(r)
    weights = np.zeros((n, n), dtype=np.float64)
    for edge in kg.edge_records():
        weights[edge.u, edge.v] += edge.weight
        weights[edge.v, edge.u] += edge.weight
    degree = weights.sum(axis=1)
    transition = np.empty_like(weights)
    for i in range(n):
        if degree[i] > 0.0:
            transition[i] = weights[i] / degree[i]
        else:
            transition[i] = r
    system = np.eye(n) - damping * transition.T
    p = np.linalg.solve(system, (1.0 - damping) * r)
    return PprScores(scores=p, iterations=0, converged=True)


def _check_reset(r: np.ndarray) -> None:
    if np.any(r < 0.0):
        raise ValidationError("reset vector has negative entries")
    total = float(r.sum())
    if abs(total - 1.0) > 1e-9:
        raise ValidationError(f"reset vector sums to {total}, expected 1")
