"""
Instance sampling and step-by-step execution of a PDM under a planner.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, NamedTuple, Optional, Tuple

import numpy as np
import pandas as pd

from pdm_rank.path_utils import (
    LivenessRule,
    LivenessState,
    interdependent_groups,
    producible_elements,
    record_success,
    update_liveness,
)
from pdm_rank.planner_utils import InstanceTables, PlannerKind, PlanningContext, next_operation, score_candidates
from pdm_rank.print_manager import print_manager

SETTING_KINDS = ("gaussian", "uniform")
DEFAULT_SIGMA = 0.5
DEFAULT_UNIFORM_MAX = 10

ROOT_PRODUCED = "root_produced"
EXHAUSTED = "exhausted"
EARLY_TERMINATED = "early_terminated"


class SettingError(ValueError):
    """Raised for an invalid experiment setting."""


@dataclass(frozen=True)
class SettingConfig:
    kind: str = "gaussian"
    sigma_fraction: float = DEFAULT_SIGMA
    cases: int = 10000
    master_seed: int = 0
    uniform_max: int = DEFAULT_UNIFORM_MAX

    def __post_init__(self):
        if self.kind not in SETTING_KINDS:
            raise SettingError(f"unknown setting '{self.kind}', expected one of {', '.join(SETTING_KINDS)}")
        if not self.sigma_fraction >= 0:
            raise SettingError(f"sigma fraction must be non-negative, got {self.sigma_fraction}")
        if self.cases < 1:
            raise SettingError(f"cases must be positive, got {self.cases}")
        if self.master_seed < 0:
            raise SettingError(f"seed must be non-negative, got {self.master_seed}")
        if self.uniform_max < 0:
            raise SettingError(f"uniform_max must be non-negative, got {self.uniform_max}")


class OpAttributes(NamedTuple):
    cost: float
    time: float
    fail_prob: float


@dataclass(frozen=True)
class Instance:
    attrs: Dict[str, OpAttributes]
    outcomes: Dict[str, bool]
    index: int
    seed: int
    planner_seed: Optional[np.random.SeedSequence] = None

    def planner_rng(self):
        """Fresh generator for the random planner; every planner run starts at the same position"""
        if self.planner_seed is None:
            return np.random.default_rng(np.random.SeedSequence(entropy=self.seed, spawn_key=(self.index, 1)))
        return np.random.default_rng(self.planner_seed)


def _streams(master_seed, index):
    data_seq, planner_seq = np.random.SeedSequence(entropy=master_seed, spawn_key=(index,)).spawn(2)
    return np.random.default_rng(data_seq), planner_seq


def sample_instance(pdm, setting, master_seed=None, index=0):
    """
    Draw attributes and outcomes for one case

    Attributes are drawn per operation in canonical order (cost, time, prob),
    then one outcome per operation. Gaussian draws have mean equal to the file
    value and standard deviation sigma * mean, clamped into range. The uniform
    setting draws integer cost and time in [0, uniform_max] and prob in [0, 1].

    Args:
        pdm (ProductDataModel): Model to sample for
        setting (SettingConfig): Gaussian or uniform setting
        master_seed (int, optional): Overrides setting.master_seed
        index (int): Case number

    Returns:
        Instance: Sampled case
    """
    if not isinstance(setting, SettingConfig):
        raise SettingError(f"expected a SettingConfig, got {type(setting).__name__}")
    seed = setting.master_seed if master_seed is None else master_seed
    rng, planner_seq = _streams(seed, index)

    ops = pdm.operations
    n = len(ops)
    means = np.array([[op.cost, op.time, op.fail_prob] for op in ops], dtype=float).reshape(n, 3)

    if setting.kind == "gaussian":
        sigma = np.array(
            [op.sigma if op.sigma is not None else setting.sigma_fraction for op in ops], dtype=float
        ).reshape(n, 1)
        draws = means + rng.standard_normal((n, 3)) * sigma * means
        draws[:, :2] = np.maximum(draws[:, :2], 0.0)
        draws[:, 2] = np.clip(draws[:, 2], 0.0, 1.0)
    else:
        u = rng.random((n, 3))
        draws = np.empty((n, 3))
        draws[:, :2] = np.minimum(np.floor(u[:, :2] * (setting.uniform_max + 1)), setting.uniform_max)
        draws[:, 2] = u[:, 2]

    successes = rng.random(n) < 1.0 - draws[:, 2]

    attrs = {op.id: OpAttributes(float(c), float(t), float(p)) for op, (c, t, p) in zip(ops, draws)}
    outcomes = {op.id: bool(ok) for op, ok in zip(ops, successes)}
    return Instance(attrs=attrs, outcomes=outcomes, index=index, seed=seed, planner_seed=planner_seq)


def forced_instance(pdm, fail_ops=None, attrs=None, seed=0, index=0):
    """
    Instance with file attributes and given outcomes

    With fail_ops, exactly those operations fail. Without, outcomes are drawn
    from the file failure probabilities using the seed.
    """
    if attrs is None:
        attrs = {op.id: OpAttributes(op.cost, op.time, op.fail_prob) for op in pdm.operations}
    rng, planner_seq = _streams(seed, index)
    if fail_ops is None:
        draws = rng.random(len(pdm.operations))
        outcomes = {op.id: bool(r < 1.0 - attrs[op.id].fail_prob) for op, r in zip(pdm.operations, draws)}
    else:
        failing = set(fail_ops)
        unknown = sorted(failing - set(pdm.by_id))
        if unknown:
            raise SettingError(f"unknown operation(s) for model '{pdm.name}': {', '.join(unknown)}")
        outcomes = {op.id: op.id not in failing for op in pdm.operations}
    return Instance(attrs=dict(attrs), outcomes=outcomes, index=index, seed=seed, planner_seed=planner_seq)


def root_producible(pdm, instance):
    """True when the root can be produced using only the operations that succeed in this instance"""
    usable = [op_id for op_id, ok in instance.outcomes.items() if ok]
    return pdm.root in producible_elements(pdm, usable)


class TraceStep(NamedTuple):
    op: str
    success: bool
    cum_cost: float
    cum_time: float


@dataclass(frozen=True)
class ExecutionTrace:
    steps: Tuple[TraceStep, ...]
    status: str
    total_cost: float
    total_time: float
    planner: str = ""
    instance: int = 0

    @property
    def succeeded(self):
        return self.status == ROOT_PRODUCED


def execute(pdm, graph, planner, instance, grouping=None, tables=None,
            liveness_rule=LivenessRule.PAIRWISE, explain=False):
    """
    Run one instance to completion under a planner

    Artificial operations run as soon as their input exists. Each chosen
    operation runs once and is charged its cost and time whatever the outcome.
    Stops when the root is produced, when nothing is executable, or when an
    extended planner finds only meaningless candidates.

    Args:
        pdm (ProductDataModel): Model
        graph (NormalizedGraph): normalize(pdm)
        planner (PlannerKind | str): Heuristic name
        instance (Instance): Sampled or forced case
        grouping (Grouping, optional): Interdependence groups for extended planners
        tables (InstanceTables, optional): Shared per-instance distance tables
        liveness_rule (LivenessRule): Meaningless-operation rule
        explain (bool): Print candidate scores at every step

    Returns:
        ExecutionTrace: Executed steps and the terminal status
    """
    kind = PlannerKind(planner)
    if grouping is None and kind.is_extended:
        grouping = interdependent_groups(pdm)
    if tables is None:
        tables = InstanceTables(graph, instance.attrs)
    context = PlanningContext(
        pdm=pdm, graph=graph, tables=tables, grouping=grouping,
        liveness=LivenessState(), produced=set(),
        rng=instance.planner_rng() if kind is PlannerKind.RANDOM else None,
    )

    missing = {op.id: len(op.inputs) for op in graph.operations}
    ready_real = {op.id for op in graph.real_operations if missing[op.id] == 0}
    ready_artificial = [op.id for op in graph.artificial_operations if missing[op.id] == 0]
    executed = set()
    produced = context.produced
    root = graph.root
    steps = []
    cum_cost = 0.0
    cum_time = 0.0

    def produce(vertex):
        if vertex in produced:
            return
        produced.add(vertex)
        for consumer in graph.consumers_of.get(vertex, ()):
            missing[consumer.id] -= 1
            if missing[consumer.id] == 0 and consumer.id not in executed:
                if consumer.artificial:
                    ready_artificial.append(consumer.id)
                else:
                    ready_real.add(consumer.id)

    status = None
    while status is None:
        while ready_artificial:
            op_id = ready_artificial.pop(0)
            executed.add(op_id)
            produce(graph.by_id[op_id].output)
        if root in produced:
            status = ROOT_PRODUCED
            break
        if not ready_real:
            status = EXHAUSTED
            break

        if explain:
            for op_id, op_score in score_candidates(kind, ready_real, context):
                print_manager.print_step(f"     {op_id}: {op_score.value:.6f}")
        choice = next_operation(kind, ready_real, context)
        if choice is None:
            status = EARLY_TERMINATED
            break

        ready_real.discard(choice)
        executed.add(choice)
        row = instance.attrs[choice]
        cum_cost += row.cost
        cum_time += row.time
        ok = instance.outcomes[choice]
        steps.append(TraceStep(choice, ok, cum_cost, cum_time))
        if print_manager.show_data_info:
            print_manager.print_data(f"step {len(steps)}: {choice} {'ok' if ok else 'failed'}")

        if ok:
            if kind.is_extended:
                context.liveness = record_success(context.liveness, choice)
            produce(graph.by_id[choice].output)
        elif kind.is_extended:
            context.liveness = update_liveness(context.liveness, pdm, choice, liveness_rule)

    return ExecutionTrace(
        steps=tuple(steps), status=status, total_cost=cum_cost, total_time=cum_time,
        planner=kind.value, instance=instance.index,
    )


def write_traces_csv(traces, fh):
    """Write traces as `instance;planner;step;op;success;cum_cost;cum_time;status` rows"""
    rows = [
        {
            "instance": trace.instance,
            "planner": trace.planner,
            "step": number,
            "op": step.op,
            "success": int(step.success),
            "cum_cost": step.cum_cost,
            "cum_time": step.cum_time,
            "status": trace.status,
        }
        for trace in traces
        for number, step in enumerate(trace.steps, start=1)
    ]
    columns = ["instance", "planner", "step", "op", "success", "cum_cost", "cum_time", "status"]
    frame = pd.DataFrame(rows, columns=columns)
    frame.to_csv(fh, sep=";", index=False, float_format="%.6f", lineterminator="\n")
