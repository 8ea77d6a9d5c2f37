"""
Experiment harness: runs every planner on sampled instances of the built-in
models, computes normalized performance, best-case shares, failed-instance
savings and the gap to the optimal complete path, and writes the report.
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from pdm_rank.model_utils import PDMValidationError, normalize, parse_pdm, read_pdm_text, validate
from pdm_rank.path_utils import (
    DEFAULT_ENUMERATION_CAP,
    LivenessRule,
    enumerate_complete_paths,
    interdependent_groups,
)
from pdm_rank.planner_utils import ALL_PLANNERS, BASE_OF_EXTENDED, InstanceTables, PlannerKind
from pdm_rank.print_manager import print_manager
from pdm_rank.simulation_utils import SettingConfig, execute, root_producible, sample_instance

MODELS_DIR = Path(__file__).resolve().parent.parent / "reference" / "pdm_models"
BUILTIN_MODELS = ("mortgage", "social_insurance", "monitoring")
DEFAULT_SIGMA_FRACTION = {"mortgage": 0.5, "social_insurance": 0.33, "monitoring": 0.33}
DEFAULT_CASES = 10000
OPTIMAL_MODELS = ("mortgage",)
POOLED = "ALL"
BEST_TOLERANCE = 1e-9
METRICS = ("cost", "time")


class UnknownModelError(KeyError):
    """Raised for a built-in model name that does not exist."""

    def __str__(self):
        return str(self.args[0]) if self.args else ""


class EmptyInputError(ValueError):
    """Raised when an aggregate is requested over no instances."""


def builtin_path(name):
    if name not in BUILTIN_MODELS:
        raise UnknownModelError(f"unknown built-in model '{name}', expected one of {', '.join(BUILTIN_MODELS)}")
    return MODELS_DIR / f"{name}.pdm"


def builtin_pdm(name):
    """
    Load one of the shipped models

    Args:
        name (str): mortgage, social_insurance or monitoring

    Returns:
        ProductDataModel: Validated model with its published attributes
    """
    path = builtin_path(name)
    pdm = parse_pdm(read_pdm_text(path), name=name)
    violations = validate(pdm)
    if violations:
        raise PDMValidationError(violations)
    return pdm


def model_setting(setting, name, sigma_override=None):
    """Setting with the model's default sigma fraction unless overridden"""
    if setting.kind != "gaussian":
        return setting
    sigma = sigma_override if sigma_override is not None else DEFAULT_SIGMA_FRACTION.get(name, setting.sigma_fraction)
    return replace(setting, sigma_fraction=sigma)


def optimal_cost(paths, instance):
    """Cheapest complete path whose operations all succeed in the instance, None when there is none"""
    best = None
    for path in paths:
        if all(instance.outcomes[op_id] for op_id in path.ops):
            total = sum(instance.attrs[op_id].cost for op_id in path.ops)
            if best is None or total < best:
                best = total
    return best


# ---------------------------------------------------------------------------
# Case runner
# ---------------------------------------------------------------------------

@dataclass
class ModelJob:
    name: str
    pdm: object
    setting: SettingConfig
    planners: Sequence[str]
    liveness_rule: str = LivenessRule.PAIRWISE.value
    with_optimal: bool = False
    cap: int = DEFAULT_ENUMERATION_CAP
    keep_traces: bool = False


def _run_cases(job, indices):
    """Run every planner on each case index; returns (rows, traces)"""
    graph = normalize(job.pdm)
    grouping = interdependent_groups(job.pdm)
    paths = enumerate_complete_paths(job.pdm, job.cap) if job.with_optimal else None

    rows = []
    traces = []
    for index in indices:
        started = time.perf_counter()
        instance = sample_instance(job.pdm, job.setting, index=index)
        tables = InstanceTables(graph, instance.attrs)
        feasible = root_producible(job.pdm, instance)
        best = optimal_cost(paths, instance) if paths is not None else None
        for planner in job.planners:
            trace = execute(job.pdm, graph, planner, instance, grouping=grouping, tables=tables,
                            liveness_rule=job.liveness_rule)
            rows.append({
                "model": job.name,
                "index": index,
                "planner": planner,
                "cost": trace.total_cost,
                "time": trace.total_time,
                "status": trace.status,
                "feasible": feasible,
                "optimal": np.nan if best is None else best,
            })
            if job.keep_traces:
                traces.append(trace)
        elapsed = time.perf_counter() - started
        for row in rows[-len(job.planners):]:
            row["wall"] = elapsed / len(job.planners)
    return rows, traces


def _chunks(cases, workers):
    size = max(1, -(-cases // (workers * 4)))
    return [range(start, min(start + size, cases)) for start in range(0, cases, size)]


def _run_job(job, workers):
    cases = job.setting.cases
    if workers <= 1:
        rows, traces = [], []
        for chunk in _chunks(cases, 1):
            chunk_rows, chunk_traces = _run_cases(job, chunk)
            rows.extend(chunk_rows)
            traces.extend(chunk_traces)
            print_manager.print_progress(chunk.stop, cases, job.name)
        return rows, traces

    rows, traces = [], []
    with ProcessPoolExecutor(max_workers=workers) as pool:
        chunks = _chunks(cases, workers)
        # map keeps submission order so results stay sorted by case index
        for chunk, (chunk_rows, chunk_traces) in zip(chunks, pool.map(_run_cases, [job] * len(chunks), chunks)):
            rows.extend(chunk_rows)
            traces.extend(chunk_traces)
            print_manager.print_progress(chunk.stop, cases, job.name)
    return rows, traces


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

def normalized_performance(values):
    """
    Mean of each planner's value divided by the per-instance minimum

    Args:
        values (pd.DataFrame | dict): one row per instance, one column per planner

    Returns:
        pd.Series: planner -> mean normalized value
    """
    frame = pd.DataFrame(values)
    if frame.empty:
        raise EmptyInputError("normalized performance needs at least one instance")
    minimum = frame.min(axis=1)
    usable = frame[minimum > 0]
    if usable.empty:
        raise EmptyInputError("every instance has a zero minimum")
    return usable.div(minimum[minimum > 0], axis=0).mean(axis=0)


def best_shares(values, tolerance=BEST_TOLERANCE):
    """Percent of instances where each planner matched the per-instance minimum"""
    frame = pd.DataFrame(values)
    if frame.empty:
        raise EmptyInputError("best-case shares need at least one instance")
    minimum = frame.min(axis=1)
    return frame.le(minimum + tolerance, axis=0).mean(axis=0) * 100.0


def deviation_from_optimal(pdm, instances, planner, graph=None, cap=DEFAULT_ENUMERATION_CAP,
                           liveness_rule=LivenessRule.PAIRWISE):
    """
    Mean ratio of the planner's cost to the optimal feasible complete path

    Instances without a feasible path, or with an optimal cost of 0, are skipped.
    """
    graph = graph if graph is not None else normalize(pdm)
    grouping = interdependent_groups(pdm)
    paths = enumerate_complete_paths(pdm, cap)
    ratios = []
    for instance in instances:
        best = optimal_cost(paths, instance)
        if best is None or best <= 0:
            continue
        trace = execute(pdm, graph, planner, instance, grouping=grouping, liveness_rule=liveness_rule)
        if trace.succeeded:
            ratios.append(trace.total_cost / best)
    if not ratios:
        raise EmptyInputError(f"no instance of '{pdm.name}' has a feasible path with positive cost")
    return float(np.mean(ratios))


def _wide(frame, metric):
    return frame.pivot(index=["model", "index"], columns="planner", values=metric)


def _metric_rows(frame, planners, scope):
    """Report rows for one model (or the pooled frame)"""
    rows = []

    def add(planner, metric, value):
        rows.append({"planner": planner, "model": scope, "metric": metric, "value": float(value)})

    ok = frame[frame["feasible"]]
    failed = frame[~frame["feasible"]]
    ok_cases = ok[["model", "index"]].drop_duplicates().shape[0]
    failed_cases = failed[["model", "index"]].drop_duplicates().shape[0]
    add("*", "successful_cases", ok_cases)
    add("*", "failed_cases", failed_cases)

    for metric in METRICS:
        if ok.empty:
            continue
        wide = _wide(ok, metric)[list(planners)]
        zero_min = int((wide.min(axis=1) <= 0).sum())
        add("*", f"zero_min_cases_{metric}", zero_min)
        if zero_min < len(wide):
            for planner, value in normalized_performance(wide).items():
                add(planner, f"norm_{metric}", value)
        for planner, value in best_shares(wide).items():
            add(planner, f"best_{metric}_share", value)

    for metric in METRICS:
        if failed.empty:
            continue
        wide = _wide(failed, metric)[list(planners)]
        for planner in planners:
            add(planner, f"failed_{metric}", wide[planner].mean())
        for extended, base in BASE_OF_EXTENDED.items():
            if extended.value in planners and base.value in planners:
                base_total = wide[base.value].sum()
                saving = 0.0 if base_total <= 0 else (1.0 - wide[extended.value].sum() / base_total) * 100.0
                add(extended.value, f"failed_{metric}_saving", saving)

    optimal = ok[ok["optimal"] > 0]
    if not optimal.empty:
        per_case = optimal.drop_duplicates(["model", "index"])
        add("optimal", "mean_optimal_cost", per_case["optimal"].mean())
        ratio = optimal.assign(ratio=optimal["cost"] / optimal["optimal"])
        means = ratio.groupby("planner")["ratio"].mean()
        for planner in planners:
            add(planner, "optimal_ratio", means[planner])
    return rows


@dataclass
class Report:
    """Per-case results plus the aggregated `planner;model;metric;value` table."""
    setting: SettingConfig
    models: List[str]
    planners: List[str]
    results: pd.DataFrame
    metrics: pd.DataFrame
    wall_per_case: Dict[str, float] = field(default_factory=dict)
    traces: list = field(default_factory=list)

    def value(self, planner, model, metric):
        match = self.metrics[
            (self.metrics["planner"] == planner) & (self.metrics["model"] == model) & (self.metrics["metric"] == metric)
        ]
        if match.empty:
            raise KeyError(f"no {metric} for {planner} on {model}")
        return float(match["value"].iloc[0])

    def to_csv(self, target):
        self.metrics.to_csv(target, sep=";", index=False, float_format="%.6f", lineterminator="\n")

    def summary_table(self):
        """One row per planner: pooled cost/time then per-model cost/time"""
        columns = {}
        for scope in [POOLED] + list(self.models):
            for metric in METRICS:
                rows = self.metrics[(self.metrics["model"] == scope) & (self.metrics["metric"] == f"norm_{metric}")]
                columns[f"{scope}:{metric}"] = rows.set_index("planner")["value"]
        table = pd.DataFrame(columns).reindex(self.planners)
        return table.to_string(float_format=lambda v: f"{v:.3f}", na_rep="-")


def run_experiment(models, setting, planners=ALL_PLANNERS, liveness_rule=LivenessRule.PAIRWISE,
                   workers=1, optimal_models=OPTIMAL_MODELS, sigma_override=None,
                   cap=DEFAULT_ENUMERATION_CAP, keep_traces=False):
    """
    Run every planner on `setting.cases` instances of each model

    Args:
        models (list): Built-in names or (name, ProductDataModel) pairs
        setting (SettingConfig): Sampling setting; sigma is replaced by the per-model default
        planners (list[str]): Planner names
        liveness_rule (LivenessRule): Rule for the extended planners
        workers (int): Worker processes for case-level parallelism
        optimal_models (tuple): Models for which optimal paths are enumerated
        sigma_override (float, optional): Sigma fraction for every model
        cap (int): Enumeration cap
        keep_traces (bool): Keep every ExecutionTrace on the report

    Returns:
        Report: Results and metrics
    """
    planners = [PlannerKind(p).value for p in planners]
    named = [(m, builtin_pdm(m)) if isinstance(m, str) else m for m in models]
    if not named:
        raise EmptyInputError("no models to run")
    if not planners:
        raise EmptyInputError("no planners to run")

    frames = []
    traces = []
    wall = {}
    for name, pdm in named:
        print_manager.print_status(f"🔄 Running {setting.cases} {setting.kind} cases of {name} with {len(planners)} planners")
        job = ModelJob(
            name=name, pdm=pdm, setting=model_setting(setting, name, sigma_override), planners=planners,
            liveness_rule=LivenessRule(liveness_rule).value, with_optimal=name in optimal_models,
            cap=cap, keep_traces=keep_traces,
        )
        rows, job_traces = _run_job(job, workers)
        frame = pd.DataFrame(rows)
        wall[name] = float(frame["wall"].sum() / setting.cases)
        frames.append(frame.drop(columns=["wall"]))
        traces.extend(job_traces)
        print_manager.print_status(f"✅ {name}: {wall[name] * 1000:.3f} ms per case")

    results = pd.concat(frames, ignore_index=True)

    metric_rows = []
    names = [name for name, _ in named]
    for name, pdm in named:
        metric_rows.extend(_metric_rows(results[results["model"] == name], planners, name))
        metric_rows.append({"planner": "*", "model": name, "metric": "time_from_cost",
                            "value": float(any(op.time_from_cost for op in pdm.operations))})
        if setting.kind == "gaussian":
            metric_rows.append({"planner": "*", "model": name, "metric": "sigma_fraction",
                                "value": float(model_setting(setting, name, sigma_override).sigma_fraction)})
    metric_rows.extend(_metric_rows(results, planners, POOLED))

    metrics = pd.DataFrame(metric_rows, columns=["planner", "model", "metric", "value"])
    return Report(setting=setting, models=names, planners=planners, results=results,
                  metrics=metrics, wall_per_case=wall, traces=traces)
