"""
Graph analyses shared by the planners and the experiment harness:
shortest paths to the root, complete path enumeration, producibility,
meaningless-operation detection and interdependence grouping.

Interdependence groups only take elements that have a single producer. Two
elements consumed by exactly the same operations stay apart when either of
them has alternative producers, as the two inputs of the monitoring model's
root operation do.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Dict, FrozenSet, Iterable, List, Optional, Tuple

import networkx as nx
import pandas as pd

from pdm_rank.print_manager import print_manager

DEFAULT_ENUMERATION_CAP = 1_000_000
TIE_TOLERANCE = 1e-12


class NoRootPathError(RuntimeError):
    """Raised when an operation's output cannot reach the root."""


class EnumerationCapError(RuntimeError):
    """Raised when complete path enumeration finds more sets than allowed."""


class WeightKind(str, enum.Enum):
    COST = "cost"
    TIME = "time"
    FAIL_PROB = "fail_prob"
    HOP = "hop"
    NORMALIZED_COMBO = "normalized_combo"


class LivenessRule(str, enum.Enum):
    PAIRWISE = "pairwise"
    PROPAGATING = "propagating"


# ---------------------------------------------------------------------------
# Shortest root paths
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RootPath:
    ops: Tuple[str, ...]
    total_weight: float


def combo_scales(operations, attrs=None):
    """Maximum cost and time over the real operations (0 when there are none)"""
    rows = [attrs[op.id] if attrs is not None else op for op in operations if not op.artificial]
    max_cost = max((row.cost for row in rows), default=0.0)
    max_time = max((row.time for row in rows), default=0.0)
    return max_cost, max_time


def operation_weights(graph, kind, attrs=None):
    """
    Per-operation weights for a WeightKind

    Args:
        graph (NormalizedGraph): Graph whose operations get a weight
        kind (WeightKind): Attribute to read
        attrs (dict, optional): op id -> row with cost/time/fail_prob; defaults to the file values

    Returns:
        dict: op id -> non-negative weight, 0 for artificial operations
    """
    kind = WeightKind(kind)
    if kind is WeightKind.NORMALIZED_COMBO:
        max_cost, max_time = combo_scales(graph.operations, attrs)

    weights = {}
    for op in graph.operations:
        if op.artificial:
            weights[op.id] = 0.0
            continue
        row = attrs[op.id] if attrs is not None else op
        if kind is WeightKind.COST:
            weights[op.id] = float(row.cost)
        elif kind is WeightKind.TIME:
            weights[op.id] = float(row.time)
        elif kind is WeightKind.FAIL_PROB:
            weights[op.id] = float(row.fail_prob)
        elif kind is WeightKind.HOP:
            weights[op.id] = 1.0
        else:
            cost_part = row.cost / max_cost if max_cost > 0 else 0.0
            time_part = row.time / max_time if max_time > 0 else 0.0
            weights[op.id] = float(cost_part + time_part)
    return weights


@dataclass(frozen=True)
class RootDistances:
    """Distance from every vertex to the root and the operation to take next."""
    distance: Dict[str, float]
    next_op: Dict[str, Optional[str]]
    weights: Dict[str, float]

    def of_op(self, graph, op_id):
        op = graph.by_id[op_id]
        return self.weights[op_id] + self.distance.get(op.output, math.inf)

    def path_from(self, graph, op_id):
        op = graph.by_id[op_id]
        if self.distance.get(op.output, math.inf) == math.inf:
            raise NoRootPathError(f"output {op.output} of operation {op_id} cannot reach root {graph.root}")
        ops = [op_id]
        vertex = op.output
        while vertex != graph.root:
            step = self.next_op[vertex]
            ops.append(step)
            vertex = graph.by_id[step].output
        return RootPath(ops=tuple(ops), total_weight=self.of_op(graph, op_id))


def root_distances(graph, weights):
    """
    Reverse Dijkstra from the root over the normalized graph

    Each edge u -> v stands for exactly one operation, so the edge weight is
    that operation's weight. Among equally short continuations the one with
    the lowest canonical order is kept.
    """
    reverse = graph.digraph.reverse(copy=False)
    distance = nx.single_source_dijkstra_path_length(
        reverse, graph.root, weight=lambda u, v, data: weights[data["op"]]
    )

    order = graph.order
    consumers = graph.consumers_of
    next_op = {graph.root: None}
    for vertex, dist in distance.items():
        if vertex == graph.root:
            continue
        best = None
        for op in consumers.get(vertex, ()):
            via = weights[op.id] + distance.get(op.output, math.inf)
            if abs(via - dist) <= TIE_TOLERANCE * max(1.0, abs(dist)):
                if best is None or order[op.id] < order[best]:
                    best = op.id
        next_op[vertex] = best
    return RootDistances(distance=dict(distance), next_op=next_op, weights=weights)


def shortest_root_path(graph, op_id, kind, attrs=None, distances=None):
    """Minimum-weight chain from op_id (inclusive) to an operation producing the root"""
    if distances is None:
        distances = root_distances(graph, operation_weights(graph, kind, attrs))
    return distances.path_from(graph, op_id)


def success_product(graph, path, attrs=None):
    product = 1.0
    for op_id in path.ops:
        op = graph.by_id[op_id]
        if op.artificial:
            continue
        row = attrs[op_id] if attrs is not None else op
        product *= 1.0 - row.fail_prob
    return product


def rank_probability_path(graph, op_id, attrs=None, distances=None):
    """
    Root path with the smallest sum of failure probabilities and its success product

    Returns:
        tuple: (RootPath, product of (1 - fail_prob) along the path)
    """
    if distances is None:
        distances = root_distances(graph, operation_weights(graph, WeightKind.FAIL_PROB, attrs))
    path = distances.path_from(graph, op_id)
    return path, success_product(graph, path, attrs)


# ---------------------------------------------------------------------------
# Producibility and complete paths
# ---------------------------------------------------------------------------

def producible_elements(pdm, usable_ops):
    """Fixpoint of the elements that can be produced using only usable_ops"""
    usable = set(usable_ops)
    produced = set()
    changed = True
    while changed:
        changed = False
        for op in pdm.operations:
            if op.id in usable and op.output not in produced and all(e in produced for e in op.inputs):
                produced.add(op.output)
                changed = True
    return produced


@dataclass(frozen=True)
class CompletePathSet:
    ops: Tuple[str, ...]
    total_cost: float
    total_time: float

    @property
    def op_set(self):
        return frozenset(self.ops)


def _drop_supersets(sets):
    kept = []
    for candidate in sorted(sets, key=len):
        if not any(smaller <= candidate for smaller in kept):
            kept.append(candidate)
    return kept


def enumerate_complete_paths(pdm, cap=DEFAULT_ENUMERATION_CAP, attrs=None):
    """
    All minimal sets of operations that produce the root

    Branches over every producer of an element and recursively satisfies its
    inputs. Sets are compared as sets, supersets are removed, and the result is
    sorted by total cost then canonical order.

    Args:
        pdm (ProductDataModel): Valid model
        cap (int): Maximum number of distinct sets
        attrs (dict, optional): op id -> row used for totals, file values by default

    Returns:
        list[CompletePathSet]: Minimal complete sets
    """
    memo: Dict[str, List[FrozenSet[str]]] = {}

    def satisfy(element):
        if element in memo:
            return memo[element]
        found = set()
        for producer in pdm.producers.get(element, ()):
            partials = [frozenset([producer.id])]
            for needed in producer.inputs:
                options = satisfy(needed)
                partials = list({p | o for p in partials for o in options})
                if len(partials) > cap:
                    raise EnumerationCapError(f"more than {cap} complete paths in model '{pdm.name}'")
            found.update(partials)
            if len(found) > cap:
                raise EnumerationCapError(f"more than {cap} complete paths in model '{pdm.name}'")
        memo[element] = _drop_supersets(found)
        return memo[element]

    order = pdm.order
    results = []
    for op_set in satisfy(pdm.root):
        ops = tuple(sorted(op_set, key=order.__getitem__))
        rows = [attrs[o] if attrs is not None else pdm.by_id[o] for o in ops]
        results.append(CompletePathSet(
            ops=ops,
            total_cost=float(sum(r.cost for r in rows)),
            total_time=float(sum(r.time for r in rows)),
        ))
    if len(results) > cap:
        raise EnumerationCapError(f"more than {cap} complete paths in model '{pdm.name}'")
    results.sort(key=lambda p: (p.total_cost, tuple(order[o] for o in p.ops)))
    print_manager.print_data(f"Enumerated {len(results)} complete paths for {pdm.name or 'model'}")
    return results


def write_paths_csv(paths, fh):
    """Write complete path sets as `ops;total_cost;total_time` rows"""
    frame = pd.DataFrame(
        {
            "ops": [",".join(p.ops) for p in paths],
            "total_cost": [p.total_cost for p in paths],
            "total_time": [p.total_time for p in paths],
        },
        columns=["ops", "total_cost", "total_time"],
    )
    frame.to_csv(fh, sep=";", index=False, float_format="%.6f", lineterminator="\n")


# ---------------------------------------------------------------------------
# Liveness
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LivenessState:
    failed_ops: FrozenSet[str] = frozenset()
    executed_ops: FrozenSet[str] = frozenset()
    dead_elements: FrozenSet[str] = frozenset()
    meaningless_ops: FrozenSet[str] = frozenset()
    exhausted_elements: FrozenSet[str] = frozenset()


def record_success(state, op_id):
    return replace(state, executed_ops=state.executed_ops | {op_id})


def _spread_dead(pdm, start, failed, dead):
    """Add to dead every element downstream of start that lost all its producers; returns the new ones"""
    newly = []
    stack = [start]
    while stack:
        element = stack.pop()
        if element in dead:
            continue
        if all(p.id in failed or any(i in dead for i in p.inputs) for p in pdm.producers[element]):
            dead.add(element)
            newly.append(element)
            stack.extend(op.output for op in pdm.consumers[element])
    return newly


def _pairwise_meaningless(pdm, exhausted, failed, executed):
    marked = set()
    for a in exhausted:
        # Condition 1: B shares an unexecuted consumer with A
        partners = set()
        for op in pdm.consumers[a]:
            if op.id not in executed:
                partners.update(e for e in op.inputs if e != a)
        for b in partners:
            if b == pdm.root:
                continue
            # Condition 2: no non-failed consumer takes B without A
            if any(op.id not in failed and a not in op.inputs for op in pdm.consumers[b]):
                continue
            marked.update(p.id for p in pdm.producers[b] if p.id not in executed)
    return marked


def _useless_elements(pdm, failed, dead, meaningless):
    useless = set()
    changed = True
    while changed:
        changed = False
        for element in pdm.elements:
            if element == pdm.root or element in useless:
                continue
            if all(
                op.id in failed or op.id in meaningless
                or any(i in dead for i in op.inputs) or op.output in useless
                for op in pdm.consumers[element]
            ):
                useless.add(element)
                changed = True
    return useless


def update_liveness(state, pdm, newly_failed, rule=LivenessRule.PAIRWISE):
    """
    Extend dead elements and meaningless operations after a failure

    An element A is exhausted when its only producer has failed. An
    unexecuted operation producing B is then meaningless when (1) an
    unexecuted operation takes both A and B and (2) no non-failed operation
    takes B without A. Elements with several producers never take the A
    role, even once all of them have failed: their consumers are handled by
    the dead-input rule instead. Operations with a dead input are meaningless.
    The propagating rule also marks producers of non-root elements whose
    consumers are all blocked.

    Dead elements are only searched downstream of the failed operation, so a
    failure costs work proportional to what it can affect.
    """
    rule = LivenessRule(rule)
    failed = state.failed_ops | {newly_failed}
    executed = state.executed_ops | {newly_failed}
    output = pdm.by_id[newly_failed].output

    dead = set(state.dead_elements)
    newly_dead = _spread_dead(pdm, output, failed, dead)
    exhausted = state.exhausted_elements
    if len(pdm.producers[output]) == 1:
        exhausted = exhausted | {output}

    marked = set(state.meaningless_ops)
    marked |= _pairwise_meaningless(pdm, exhausted, failed, executed)
    marked.update(
        op.id for element in newly_dead for op in pdm.consumers[element]
        if op.id not in executed
    )
    if rule is LivenessRule.PROPAGATING:
        useless = _useless_elements(pdm, failed, dead, marked)
        marked.update(op.id for op in pdm.operations if op.id not in executed and op.output in useless)

    return LivenessState(
        failed_ops=frozenset(failed),
        executed_ops=frozenset(executed),
        dead_elements=frozenset(dead),
        meaningless_ops=frozenset(marked),
        exhausted_elements=frozenset(exhausted),
    )


# ---------------------------------------------------------------------------
# Interdependent elements
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Grouping:
    groups: Tuple[FrozenSet[str], ...]
    group_of: Dict[str, FrozenSet[str]]

    def partners(self, element):
        return self.group_of.get(element, frozenset([element])) - {element}


def interdependent_groups(pdm):
    """
    Partition elements into interdependence groups

    Elements with a single producer and the same non-empty set of consuming
    operations are grouped; all other elements are singletons.
    """
    by_consumers: Dict[FrozenSet[str], List[str]] = {}
    singles = []
    for element in pdm.sorted_elements():
        consumer_ids = frozenset(op.id for op in pdm.consumers[element])
        if len(pdm.producers[element]) == 1 and consumer_ids:
            by_consumers.setdefault(consumer_ids, []).append(element)
        else:
            singles.append(element)

    groups = [frozenset(members) for members in by_consumers.values()]
    groups.extend(frozenset([e]) for e in singles)
    groups.sort(key=lambda g: sorted(g))
    group_of = {e: g for g in groups for e in g}
    return Grouping(groups=tuple(groups), group_of=group_of)


def group_surcharge(pdm, grouping, element, weights, failed_ops=frozenset(), produced=frozenset()):
    """
    Sum of the production weights of the element's partners still to be produced

    The production weight of a partner is the minimum weight over its
    non-failed producers, infinite when none is left.
    """
    total = 0.0
    for partner in grouping.partners(element):
        if partner in produced:
            continue
        live = [weights[p.id] for p in pdm.producers[partner] if p.id not in failed_ops]
        total += min(live) if live else math.inf
    return total


def iter_root_paths(graph, op_id, weights) -> Iterable[Tuple[Tuple[str, ...], float]]:
    """Every chain from op_id to the root with its weight (exhaustive, small graphs only)"""
    op = graph.by_id[op_id]
    if op.output == graph.root:
        yield (op_id,), weights[op_id]
        return
    for nxt in graph.consumers_of.get(op.output, ()):
        for ops, weight in iter_root_paths(graph, nxt.id, weights):
            yield (op_id,) + ops, weights[op_id] + weight
