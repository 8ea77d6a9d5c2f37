import io
import unittest

import numpy as np

from pdm_rank.experiment_utils import builtin_pdm
from pdm_rank.model_utils import normalize, parse_pdm
from pdm_rank.path_utils import LivenessRule, enumerate_complete_paths
from pdm_rank.planner_utils import ALL_PLANNERS, BASE_OF_EXTENDED, PlannerKind
from pdm_rank.simulation_utils import (
    EARLY_TERMINATED,
    EXHAUSTED,
    ROOT_PRODUCED,
    OpAttributes,
    SettingConfig,
    SettingError,
    execute,
    forced_instance,
    root_producible,
    sample_instance,
    write_traces_csv,
)

NON_EXTENDED = [k for k in ALL_PLANNERS if not PlannerKind(k).is_extended]

EXTREMES_TEXT = """
root: A
op: id=X out=A in=B,C cost=1 time=1 prob=0.0
op: id=PB out=B in=- cost=1 time=1 prob=1.0
op: id=PC out=C in=- cost=1 time=1 prob=0.0
"""


class TestSettingConfig(unittest.TestCase):

    def test_invalid_kind(self):
        with self.assertRaises(SettingError):
            SettingConfig(kind="poisson")

    def test_invalid_cases(self):
        with self.assertRaises(SettingError):
            SettingConfig(cases=0)

    def test_sample_requires_setting(self):
        with self.assertRaises(SettingError):
            sample_instance(builtin_pdm("mortgage"), {"kind": "gaussian"})


class TestSampleInstance(unittest.TestCase):
    """Per-case attribute and outcome draws"""

    def setUp(self):
        self.mortgage = builtin_pdm("mortgage")
        self.monitoring = builtin_pdm("monitoring")

    def test_extreme_probabilities(self):
        pdm = parse_pdm(EXTREMES_TEXT)
        setting = SettingConfig(kind="gaussian", sigma_fraction=0.0)
        for index in range(20):
            instance = sample_instance(pdm, setting, master_seed=3, index=index)
            self.assertFalse(instance.outcomes["PB"])
            self.assertTrue(instance.outcomes["PC"])
            self.assertTrue(instance.outcomes["X"])

    def test_zero_sigma_keeps_file_values(self):
        instance = sample_instance(self.mortgage, SettingConfig(sigma_fraction=0.0), index=5)
        for op in self.mortgage.operations:
            self.assertEqual(instance.attrs[op.id], (op.cost, op.time, op.fail_prob))

    def test_gaussian_values_are_clamped(self):
        setting = SettingConfig(kind="gaussian", sigma_fraction=2.0)
        for index in range(50):
            instance = sample_instance(self.monitoring, setting, index=index)
            for row in instance.attrs.values():
                self.assertGreaterEqual(row.cost, 0.0)
                self.assertGreaterEqual(row.time, 0.0)
                self.assertTrue(0.0 <= row.fail_prob <= 1.0)

    def test_per_operation_sigma(self):
        text = "root: A\nop: id=X out=A in=- cost=4 time=4 prob=0.5 sigma=0.0\n"
        instance = sample_instance(parse_pdm(text), SettingConfig(sigma_fraction=0.9), index=1)
        self.assertEqual(instance.attrs["X"], (4.0, 4.0, 0.5))

    def test_uniform_ranges(self):
        setting = SettingConfig(kind="uniform")
        values = []
        for index in range(100):
            instance = sample_instance(self.mortgage, setting, master_seed=11, index=index)
            values.extend(instance.attrs.values())
        costs = np.array([row.cost for row in values])
        probs = np.array([row.fail_prob for row in values])
        self.assertTrue(np.all(costs == np.floor(costs)))
        self.assertGreaterEqual(costs.min(), 0)
        self.assertLessEqual(costs.max(), 10)
        self.assertEqual(costs.max(), 10)
        self.assertTrue(np.all((probs >= 0) & (probs <= 1)))

    def test_replay(self):
        setting = SettingConfig(kind="uniform", master_seed=7)
        first = sample_instance(self.monitoring, setting, index=3)
        again = sample_instance(self.monitoring, setting, index=3)
        other = sample_instance(self.monitoring, setting, index=4)
        self.assertEqual(first.attrs, again.attrs)
        self.assertEqual(first.outcomes, again.outcomes)
        self.assertNotEqual(first.attrs, other.attrs)
        self.assertEqual(list(first.planner_rng().random(3)), list(again.planner_rng().random(3)))


class TestExecute(unittest.TestCase):
    """Step by step execution under each planner"""

    def setUp(self):
        self.mortgage = builtin_pdm("mortgage")
        self.mortgage_graph = normalize(self.mortgage)
        self.monitoring = builtin_pdm("monitoring")
        self.monitoring_graph = normalize(self.monitoring)

    def test_all_success(self):
        instance = forced_instance(self.mortgage, fail_ops=[])
        cheapest = enumerate_complete_paths(self.mortgage)[0].total_cost
        for planner in ALL_PLANNERS:
            trace = execute(self.mortgage, self.mortgage_graph, planner, instance)
            self.assertEqual(trace.status, ROOT_PRODUCED, planner)
            self.assertGreaterEqual(trace.total_cost, cheapest)
            ops = [step.op for step in trace.steps]
            self.assertEqual(len(ops), len(set(ops)))

    def test_worked_example(self):
        instance = forced_instance(self.mortgage, fail_ops=["Op07"])
        trace = execute(self.mortgage, self.mortgage_graph, "rank_cost", instance)
        self.assertEqual([s.op for s in trace.steps], ["Op07", "Op05", "Op06", "Op08", "Op09", "Op10", "Op03"])
        self.assertFalse(trace.steps[0].success)
        self.assertEqual(trace.status, ROOT_PRODUCED)
        self.assertEqual(trace.total_cost, 13.0)
        self.assertEqual(trace.total_time, 11.0)

    def test_cumulative_values_non_decreasing(self):
        instance = sample_instance(self.monitoring, SettingConfig(kind="uniform"), master_seed=5, index=0)
        trace = execute(self.monitoring, self.monitoring_graph, "remaining_time", instance)
        costs = [s.cum_cost for s in trace.steps]
        times = [s.cum_time for s in trace.steps]
        self.assertEqual(costs, sorted(costs))
        self.assertEqual(times, sorted(times))
        self.assertEqual(trace.total_cost, costs[-1])

    def test_monitoring_without_i2(self):
        instance = forced_instance(self.monitoring, fail_ops=["Op13", "Op14", "Op15", "Op16"])
        self.assertFalse(root_producible(self.monitoring, instance))
        totals = set()
        for planner in ALL_PLANNERS:
            trace = execute(self.monitoring, self.monitoring_graph, planner, instance)
            self.assertNotEqual(trace.status, ROOT_PRODUCED, planner)
            if planner in NON_EXTENDED:
                self.assertEqual(trace.status, EXHAUSTED)
                totals.add((round(trace.total_cost, 9), round(trace.total_time, 9)))
        self.assertEqual(len(totals), 1)

    def test_root_producible(self):
        self.assertTrue(root_producible(self.mortgage, forced_instance(self.mortgage, fail_ops=[])))
        all_fail = forced_instance(self.mortgage, fail_ops=[op.id for op in self.mortgage.operations])
        self.assertFalse(root_producible(self.mortgage, all_fail))
        self.assertTrue(root_producible(self.mortgage, forced_instance(self.mortgage, fail_ops=["Op04"])))

    def test_early_termination_saves_cost(self):
        attrs = {op.id: OpAttributes(op.cost, op.time, op.fail_prob) for op in self.mortgage.operations}
        attrs["Op09"] = OpAttributes(2.0, 1.0, 0.1)
        instance = forced_instance(self.mortgage, fail_ops=["Op07", "Op08", "Op10"], attrs=attrs)
        self.assertFalse(root_producible(self.mortgage, instance))
        base = execute(self.mortgage, self.mortgage_graph, "rank_cost", instance)
        extended = execute(self.mortgage, self.mortgage_graph, "rank_ext_cost", instance)
        self.assertEqual(base.status, EXHAUSTED)
        self.assertEqual(extended.status, EARLY_TERMINATED)
        self.assertEqual(base.total_cost, 6.0)
        self.assertEqual(extended.total_cost, 4.0)
        self.assertNotIn("Op09", [s.op for s in extended.steps])

    def test_extended_never_costs_more_on_failed_instances(self):
        setting = SettingConfig(kind="uniform", master_seed=21)
        for index in range(200):
            instance = sample_instance(self.mortgage, setting, index=index)
            if root_producible(self.mortgage, instance):
                continue
            for extended, base in BASE_OF_EXTENDED.items():
                for rule in LivenessRule:
                    ext = execute(self.mortgage, self.mortgage_graph, extended, instance, liveness_rule=rule)
                    ref = execute(self.mortgage, self.mortgage_graph, base, instance)
                    self.assertLessEqual(ext.total_cost, ref.total_cost + 1e-9)

    def test_replay_determinism(self):
        instance = sample_instance(self.monitoring, SettingConfig(), master_seed=9, index=12)
        for planner in ALL_PLANNERS:
            first = execute(self.monitoring, self.monitoring_graph, planner, instance)
            again = execute(self.monitoring, self.monitoring_graph, planner, instance)
            self.assertEqual(first, again, planner)

    def test_unknown_forced_operation(self):
        with self.assertRaises(SettingError):
            forced_instance(self.mortgage, fail_ops=["Op99"])

    def test_traces_csv(self):
        instance = forced_instance(self.mortgage, fail_ops=["Op07"])
        trace = execute(self.mortgage, self.mortgage_graph, "rank_cost", instance)
        buffer = io.StringIO()
        write_traces_csv([trace], buffer)
        lines = buffer.getvalue().splitlines()
        self.assertEqual(lines[0], "instance;planner;step;op;success;cum_cost;cum_time;status")
        self.assertEqual(lines[1], "0;rank_cost;1;Op07;0;1.000000;2.000000;root_produced")
        self.assertEqual(len(lines), 8)


if __name__ == "__main__":
    unittest.main()
