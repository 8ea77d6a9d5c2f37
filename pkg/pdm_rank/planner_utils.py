"""
Next-operation selection: seven baseline heuristics and six rank based
variants (three plain, three extended with meaningless-operation filtering
and interdependence surcharges).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Dict, NamedTuple, Optional

import numpy as np

from pdm_rank.path_utils import (
    LivenessState,
    NoRootPathError,
    WeightKind,
    group_surcharge,
    operation_weights,
    root_distances,
)


class PlannerKind(str, enum.Enum):
    RANDOM = "random"
    LOWEST_COST = "lowest_cost"
    SHORTEST_TIME = "shortest_time"
    LOWEST_FAIL_PROB = "lowest_fail_prob"
    ROOT_DISTANCE = "root_distance"
    REMAINING_COST = "remaining_cost"
    REMAINING_TIME = "remaining_time"
    RANK_COST = "rank_cost"
    RANK_TIME = "rank_time"
    RANK_COMBO = "rank_combo"
    RANK_EXT_COST = "rank_ext_cost"
    RANK_EXT_TIME = "rank_ext_time"
    RANK_EXT_COMBO = "rank_ext_combo"

    @property
    def is_rank(self):
        return self.value.startswith("rank_")

    @property
    def is_extended(self):
        return self.value.startswith("rank_ext_")

    @property
    def variant(self):
        """cost, time or combo for rank kinds"""
        return self.value.rsplit("_", 1)[1] if self.is_rank else None


ALL_PLANNERS = tuple(kind.value for kind in PlannerKind)
BASE_OF_EXTENDED = {
    PlannerKind.RANK_EXT_COST: PlannerKind.RANK_COST,
    PlannerKind.RANK_EXT_TIME: PlannerKind.RANK_TIME,
    PlannerKind.RANK_EXT_COMBO: PlannerKind.RANK_COMBO,
}
VARIANT_WEIGHT = {
    "cost": WeightKind.COST,
    "time": WeightKind.TIME,
    "combo": WeightKind.NORMALIZED_COMBO,
}


class Score(NamedTuple):
    value: float
    secondary: float
    order: int
    maximize: bool = False

    def sort_key(self):
        """Smaller is better"""
        if self.maximize:
            return (-self.value, -self.secondary, self.order)
        return (self.value, self.secondary, self.order)


class InstanceTables:
    """
    Root distances and success products for one instance, computed on first
    use and shared by every planner run on that instance.
    """

    def __init__(self, graph, attrs=None):
        self.graph = graph
        self.attrs = attrs
        self._distances = {}
        self._products: Dict[str, float] = {}
        self._terms: Dict[tuple, tuple] = {}
        self.sort_keys: Dict[tuple, tuple] = {}

    def distances(self, kind):
        kind = WeightKind(kind)
        if kind not in self._distances:
            weights = operation_weights(self.graph, kind, self.attrs)
            self._distances[kind] = root_distances(self.graph, weights)
        return self._distances[kind]

    def weights(self, kind):
        return self.distances(kind).weights

    def _fail_prob(self, op):
        if op.artificial:
            return 0.0
        row = self.attrs[op.id] if self.attrs is not None else op
        return float(row.fail_prob)

    def success_from_vertex(self, vertex):
        """Success product of the least-failure-sum chain from vertex to the root"""
        if vertex in self._products:
            return self._products[vertex]
        table = self.distances(WeightKind.FAIL_PROB)
        chain = []
        current = vertex
        while current != self.graph.root and current not in self._products:
            if current not in table.distance:
                raise NoRootPathError(f"vertex {current} cannot reach root {self.graph.root}")
            chain.append(current)
            current = self.graph.by_id[table.next_op[current]].output
        product = self._products.get(current, 1.0)
        for v in reversed(chain):
            product *= 1.0 - self._fail_prob(self.graph.by_id[table.next_op[v]])
            self._products[v] = product
        self._products.setdefault(self.graph.root, 1.0)
        return product

    def numerator(self, op_id):
        op = self.graph.by_id[op_id]
        return (1.0 - self._fail_prob(op)) * self.success_from_vertex(op.output)

    def rank_terms(self, op_id, kind):
        """(numerator, root path weight) of an operation; both fixed for the instance"""
        key = (op_id, kind)
        if key not in self._terms:
            try:
                terms = (self.numerator(op_id), self.distances(kind).of_op(self.graph, op_id))
            except NoRootPathError:
                terms = (-math.inf, math.inf)
            self._terms[key] = terms
        return self._terms[key]


@dataclass
class PlanningContext:
    """Everything a planner may look at when picking the next operation."""
    pdm: object
    graph: object
    tables: InstanceTables
    grouping: object = None
    liveness: LivenessState = field(default_factory=LivenessState)
    produced: set = field(default_factory=set)
    rng: Optional[np.random.Generator] = None
    _surcharges: dict = field(default_factory=dict, repr=False)
    _surcharge_state: tuple = field(default=(), repr=False)

    @property
    def attrs(self):
        return self.tables.attrs

    def row(self, op_id):
        return self.attrs[op_id] if self.attrs is not None else self.graph.by_id[op_id]

    def surcharge(self, element, kind):
        """
        Group surcharge of an element, kept until the next failure or production

        Failed operations and produced vertices only ever grow during a run, so
        their sizes identify the state the cached values belong to.
        """
        state = (len(self.liveness.failed_ops), len(self.produced))
        if state != self._surcharge_state:
            self._surcharges.clear()
            self._surcharge_state = state
        key = (element, kind)
        if key not in self._surcharges:
            self._surcharges[key] = group_surcharge(
                self.pdm, self.grouping, element, self.tables.weights(kind),
                failed_ops=self.liveness.failed_ops, produced=self.produced,
            )
        return self._surcharges[key]


def rank(op_id, variant, context, extended=False):
    """
    Rank value of an operation: success product of its most reliable root
    path divided by the weight of its cheapest root path

    Args:
        op_id (str): Candidate operation
        variant (str): cost, time or combo
        context (PlanningContext): Instance tables, grouping and liveness
        extended (bool): Add the interdependence surcharge to the denominator

    Returns:
        Score: maximizing score with the numerator as tie-break
    """
    weight_kind = VARIANT_WEIGHT[variant]
    order = context.graph.order[op_id]
    numerator, denominator = context.tables.rank_terms(op_id, weight_kind)
    if denominator == math.inf:
        return Score(-math.inf, -math.inf, order, maximize=True)

    if extended and context.grouping is not None:
        denominator += context.surcharge(context.pdm.by_id[op_id].output, weight_kind)

    if denominator == 0:
        value = math.inf
    else:
        value = numerator / denominator
    return Score(value, numerator, order, maximize=True)


def baseline_score(op_id, kind, context):
    """Minimizing score of one of the six deterministic baseline heuristics"""
    kind = PlannerKind(kind)
    row = context.row(op_id)
    order = context.graph.order[op_id]
    secondary = float(row.fail_prob)

    if kind is PlannerKind.LOWEST_COST:
        value = float(row.cost)
    elif kind is PlannerKind.SHORTEST_TIME:
        value = float(row.time)
    elif kind is PlannerKind.LOWEST_FAIL_PROB:
        value = float(row.fail_prob)
    else:
        weight_kind = {
            PlannerKind.ROOT_DISTANCE: WeightKind.HOP,
            PlannerKind.REMAINING_COST: WeightKind.COST,
            PlannerKind.REMAINING_TIME: WeightKind.TIME,
        }[kind]
        value = context.tables.distances(weight_kind).of_op(context.graph, op_id)
    return Score(value, secondary, order)


def score(kind, op_id, context):
    kind = PlannerKind(kind)
    if kind.is_rank:
        return rank(op_id, kind.variant, context, extended=kind.is_extended)
    return baseline_score(op_id, kind, context)


def score_candidates(kind, candidates, context):
    """Candidates with their scores, best first"""
    scored = [(op_id, score(kind, op_id, context)) for op_id in candidates]
    scored.sort(key=lambda item: item[1].sort_key())
    return scored


def _sort_key(kind, op_id, context):
    """Scores of the non-extended planners are fixed for an instance and kept on its tables"""
    if kind.is_extended:
        return score(kind, op_id, context).sort_key()
    keys = context.tables.sort_keys
    if (kind, op_id) not in keys:
        keys[(kind, op_id)] = score(kind, op_id, context).sort_key()
    return keys[(kind, op_id)]


def next_operation(kind, candidates, context):
    """
    Pick the next operation to execute

    Returns:
        str | None: operation id, or None when an extended planner finds only
        meaningless candidates
    """
    kind = PlannerKind(kind)
    pool = candidates
    if kind.is_extended:
        meaningless = context.liveness.meaningless_ops
        pool = [op_id for op_id in candidates if op_id not in meaningless]
    if not pool:
        return None

    if kind is PlannerKind.RANDOM:
        if context.rng is None:
            raise ValueError("random planner needs an rng stream")
        pool = sorted(pool, key=context.graph.order.__getitem__)
        return pool[int(context.rng.integers(len(pool)))]

    # keys end with the canonical order, so the minimum is unique
    return min(pool, key=lambda op_id: _sort_key(kind, op_id, context))
