"""
Brute-force checks on random small models: success agreement, soundness of
meaningless-operation marks, incremental dead elements against a full
fixpoint and optimality of the shortest root paths.
"""

import unittest

import numpy as np

from pdm_rank.model_utils import normalize, validate
from pdm_rank.path_utils import (
    LivenessRule,
    LivenessState,
    NoRootPathError,
    WeightKind,
    enumerate_complete_paths,
    iter_root_paths,
    operation_weights,
    shortest_root_path,
    update_liveness,
)
from pdm_rank.planner_utils import ALL_PLANNERS
from pdm_rank.simulation_utils import OpAttributes, Instance, ROOT_PRODUCED, execute, root_producible
from tests.pdm_fixtures import random_pdm

MODELS = 500


def dead_by_fixpoint(pdm, failed):
    dead = set()
    changed = True
    while changed:
        changed = False
        for element in pdm.elements:
            if element not in dead and all(
                p.id in failed or any(i in dead for i in p.inputs) for p in pdm.producers[element]
            ):
                dead.add(element)
                changed = True
    return dead


def random_instance(pdm, rng):
    outcomes = {op.id: bool(rng.random() < 0.7) for op in pdm.operations}
    attrs = {op.id: OpAttributes(op.cost, op.time, op.fail_prob) for op in pdm.operations}
    return Instance(attrs=attrs, outcomes=outcomes, index=0, seed=0)


class TestOracles(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.models = [random_pdm(seed) for seed in range(MODELS)]

    def test_models_are_valid(self):
        for pdm in self.models:
            self.assertEqual(validate(pdm), [], pdm.name)
            self.assertLessEqual(len(pdm.elements), 12)

    def test_success_agreement(self):
        rng = np.random.default_rng(2024)
        for pdm in self.models:
            graph = normalize(pdm)
            paths = enumerate_complete_paths(pdm)
            instance = random_instance(pdm, rng)
            feasible = any(all(instance.outcomes[op_id] for op_id in path.ops) for path in paths)
            self.assertEqual(root_producible(pdm, instance), feasible, pdm.name)
            for planner in ALL_PLANNERS:
                trace = execute(pdm, graph, planner, instance)
                self.assertEqual(trace.status == ROOT_PRODUCED, feasible, f"{pdm.name} {planner}")

    def test_meaningless_operations_are_in_no_feasible_path(self):
        rng = np.random.default_rng(7)
        for pdm in self.models:
            paths = enumerate_complete_paths(pdm)
            order = list(pdm.by_id)
            rng.shuffle(order)
            failures = order[: int(rng.integers(1, len(order) + 1))]
            for rule in LivenessRule:
                state = LivenessState()
                failed = set()
                for op_id in failures:
                    state = update_liveness(state, pdm, op_id, rule)
                    failed.add(op_id)
                    self.assertEqual(set(state.dead_elements), dead_by_fixpoint(pdm, failed), pdm.name)
                    usable = [p for p in paths if not (p.op_set & failed)]
                    for marked in state.meaningless_ops:
                        self.assertFalse(
                            any(marked in p.op_set for p in usable),
                            f"{pdm.name} {rule.value}: {marked} after {sorted(failed)}",
                        )

    def test_shortest_root_path_matches_exhaustive_search(self):
        for pdm in self.models:
            graph = normalize(pdm)
            for kind in (WeightKind.COST, WeightKind.TIME, WeightKind.HOP):
                weights = operation_weights(graph, kind)
                for op in graph.real_operations:
                    totals = [weight for _, weight in iter_root_paths(graph, op.id, weights)]
                    if not totals:
                        with self.assertRaises(NoRootPathError):
                            shortest_root_path(graph, op.id, kind)
                        continue
                    path = shortest_root_path(graph, op.id, kind)
                    self.assertAlmostEqual(path.total_weight, min(totals), places=9)
                    self.assertEqual(graph.by_id[path.ops[-1]].output, graph.root)


if __name__ == "__main__":
    unittest.main()
