"""
Product Data Model (PDM) definitions: parsing, validation, serialization and
normalization into a simple directed graph.

A PDM file is line oriented:

    # comment
    root: A
    op: id=Op01 out=A in=B,C,D cost=5 time=1 prob=0.05

`in=-` marks a leaf operation. `time=` is optional (defaults to the cost),
`quality=` and `sigma=` are optional extras.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import networkx as nx

from pdm_rank.print_manager import print_manager

REQUIRED_FIELDS = ("id", "out", "in", "cost", "prob")
OPTIONAL_FIELDS = ("time", "quality", "sigma")
DUMMY_PREFIX = "_d"
ARTIFICIAL_PREFIX = "_a"


class PDMFormatError(ValueError):
    """Raised when a PDM document cannot be parsed."""

    def __init__(self, message, line_no=None):
        self.line_no = line_no
        prefix = f"line {line_no}: " if line_no is not None else ""
        super().__init__(prefix + message)


class PDMValidationError(ValueError):
    """Raised by load_pdm when a parsed model violates the PDM invariants."""

    def __init__(self, violations):
        self.violations = list(violations)
        details = "; ".join(v.message for v in self.violations)
        super().__init__(f"invalid PDM ({len(self.violations)} violation(s)): {details}")


@dataclass(frozen=True)
class Operation:
    id: str
    output: str
    inputs: Tuple[str, ...]
    cost: float
    time: float
    fail_prob: float
    artificial: bool = False
    quality: Optional[float] = None
    sigma: Optional[float] = None
    time_from_cost: bool = False

    @property
    def is_leaf(self):
        return not self.inputs


@dataclass(frozen=True)
class Violation:
    kind: str
    subject: str
    message: str


@dataclass(frozen=True)
class ProductDataModel:
    """Elements, operations (file order is the canonical order) and the root."""
    elements: frozenset
    operations: Tuple[Operation, ...]
    root: str
    name: str = ""

    @cached_property
    def by_id(self) -> Dict[str, Operation]:
        return {op.id: op for op in self.operations}

    @cached_property
    def order(self) -> Dict[str, int]:
        return {op.id: i for i, op in enumerate(self.operations)}

    @cached_property
    def producers(self) -> Dict[str, Tuple[Operation, ...]]:
        table = {e: [] for e in self.elements}
        for op in self.operations:
            table.setdefault(op.output, []).append(op)
        return {e: tuple(ops) for e, ops in table.items()}

    @cached_property
    def consumers(self) -> Dict[str, Tuple[Operation, ...]]:
        table = {e: [] for e in self.elements}
        for op in self.operations:
            for element in op.inputs:
                table.setdefault(element, []).append(op)
        return {e: tuple(ops) for e, ops in table.items()}

    def op(self, op_id):
        try:
            return self.by_id[op_id]
        except KeyError:
            raise KeyError(f"unknown operation '{op_id}' in model '{self.name or '?'}'") from None

    def sorted_elements(self):
        return sorted(self.elements)


def _parse_real(key, raw, line_no):
    try:
        return float(raw)
    except ValueError:
        raise PDMFormatError(f"field '{key}' is not a real number: '{raw}'", line_no) from None


def _parse_operation(body, line_no):
    fields = {}
    for token in body.split():
        if "=" not in token:
            raise PDMFormatError(f"expected key=value, got '{token}'", line_no)
        key, value = token.split("=", 1)
        if key not in REQUIRED_FIELDS and key not in OPTIONAL_FIELDS:
            raise PDMFormatError(f"unknown field '{key}'", line_no)
        if key in fields:
            raise PDMFormatError(f"field '{key}' given twice", line_no)
        fields[key] = value

    missing = [key for key in REQUIRED_FIELDS if key not in fields]
    if missing:
        raise PDMFormatError(f"missing required field(s): {', '.join(missing)}", line_no)

    op_id, output = fields["id"], fields["out"]
    if not op_id or not output:
        raise PDMFormatError("operation id and output must be non-empty", line_no)

    raw_inputs = fields["in"]
    inputs = () if raw_inputs == "-" else tuple(e for e in raw_inputs.split(","))
    if any(not e for e in inputs):
        raise PDMFormatError(f"empty element name in input list '{raw_inputs}'", line_no)
    if len(set(inputs)) != len(inputs):
        raise PDMFormatError(f"duplicate element in input list '{raw_inputs}'", line_no)
    if output in inputs:
        raise PDMFormatError(f"operation {op_id}: output {output} is in its own input set", line_no)

    cost = _parse_real("cost", fields["cost"], line_no)
    time_from_cost = "time" not in fields
    time = cost if time_from_cost else _parse_real("time", fields["time"], line_no)
    prob = _parse_real("prob", fields["prob"], line_no)
    quality = _parse_real("quality", fields["quality"], line_no) if "quality" in fields else None
    sigma = _parse_real("sigma", fields["sigma"], line_no) if "sigma" in fields else None

    return Operation(
        id=op_id, output=output, inputs=inputs, cost=cost, time=time, fail_prob=prob,
        quality=quality, sigma=sigma, time_from_cost=time_from_cost,
    )


def parse_pdm(text, name=""):
    """
    Parse a PDM document into a ProductDataModel

    Args:
        text (str): Document contents
        name (str): Model name carried along for reports

    Returns:
        ProductDataModel: Model with operations in file order
    """
    root = None
    root_line = None
    operations = []
    seen_ids = {}

    for line_no, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if ":" not in line:
            raise PDMFormatError(f"expected 'root:' or 'op:' line, got '{line}'", line_no)
        keyword, body = line.split(":", 1)
        keyword = keyword.strip()
        body = body.strip()

        if keyword == "root":
            if root is not None:
                raise PDMFormatError("root given more than once", line_no)
            if not body or len(body.split()) != 1:
                raise PDMFormatError("root line needs exactly one element", line_no)
            root, root_line = body, line_no
        elif keyword == "op":
            op = _parse_operation(body, line_no)
            if op.id in seen_ids:
                raise PDMFormatError(f"duplicate operation id '{op.id}' (first on line {seen_ids[op.id]})", line_no)
            seen_ids[op.id] = line_no
            operations.append(op)
        else:
            raise PDMFormatError(f"unknown line type '{keyword}'", line_no)

    if root is None:
        raise PDMFormatError("missing required 'root:' line")

    elements = set()
    for op in operations:
        elements.add(op.output)
        elements.update(op.inputs)
    if root not in elements:
        raise PDMFormatError(f"unknown root '{root}': no operation references it", root_line)

    return ProductDataModel(elements=frozenset(elements), operations=tuple(operations), root=root, name=name)


def _format_real(value):
    return repr(float(value))


def serialize_pdm(pdm):
    """Write a model back to the PDM file format"""
    lines = []
    if pdm.name:
        lines.append(f"# {pdm.name}")
    lines.append(f"root: {pdm.root}")
    for op in pdm.operations:
        if op.artificial:
            continue
        inputs = ",".join(op.inputs) if op.inputs else "-"
        parts = [f"op: id={op.id}", f"out={op.output}", f"in={inputs}", f"cost={_format_real(op.cost)}"]
        if not op.time_from_cost:
            parts.append(f"time={_format_real(op.time)}")
        parts.append(f"prob={_format_real(op.fail_prob)}")
        if op.quality is not None:
            parts.append(f"quality={_format_real(op.quality)}")
        if op.sigma is not None:
            parts.append(f"sigma={_format_real(op.sigma)}")
        lines.append(" ".join(parts))
    return "\n".join(lines) + "\n"


def dependency_graph(pdm):
    """Element-level dependency graph: an edge input -> output per operation"""
    graph = nx.DiGraph()
    graph.add_nodes_from(pdm.sorted_elements())
    for op in pdm.operations:
        for element in op.inputs:
            if element != op.output:
                graph.add_edge(element, op.output)
    return graph


def validate(pdm):
    """
    Check a model against the PDM invariants

    Returns:
        list[Violation]: Empty when the model is valid
    """
    violations = []
    seen = set()
    for op in pdm.operations:
        if op.id in seen:
            violations.append(Violation("duplicate_id", op.id, f"operation id {op.id} used more than once"))
        seen.add(op.id)
        if op.output in op.inputs:
            violations.append(Violation("self_input", op.id, f"operation {op.id}: output {op.output} is one of its inputs"))
        if op.cost < 0 or op.time < 0:
            violations.append(Violation("negative_attribute", op.id, f"operation {op.id}: cost and time must be non-negative"))
        if not 0.0 <= op.fail_prob <= 1.0:
            violations.append(Violation("probability_range", op.id, f"operation {op.id}: failure probability {op.fail_prob} outside [0, 1]"))
        if op.artificial and (op.cost or op.time or op.fail_prob):
            violations.append(Violation("artificial_attributes", op.id, f"artificial operation {op.id} must have zero attributes"))
        for element in (op.output, *op.inputs):
            if element not in pdm.elements:
                violations.append(Violation("unknown_element", op.id, f"operation {op.id} references unknown element {element}"))

    produced = {op.output for op in pdm.operations}
    if pdm.root not in pdm.elements:
        violations.append(Violation("unknown_root", pdm.root, f"root {pdm.root} is not an element of the model"))
    elif pdm.root not in produced:
        violations.append(Violation("root_unproduced", pdm.root, f"root {pdm.root} has no producing operation"))

    for element in pdm.sorted_elements():
        if element not in produced and element != pdm.root:
            violations.append(Violation("missing_producer", element, f"element {element} has no producing operation"))

    graph = dependency_graph(pdm)
    if not nx.is_directed_acyclic_graph(graph):
        for component in sorted(nx.strongly_connected_components(graph), key=lambda c: sorted(c)):
            if len(component) > 1:
                members = ", ".join(sorted(component))
                violations.append(Violation("cycle", members, f"dependency cycle between elements {members}"))

    return violations


def read_pdm_text(path):
    """Text of a model file; bytes that are not UTF-8 raise PDMFormatError with their line"""
    raw = Path(path).read_bytes()
    try:
        return raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        line_no = raw[:exc.start].count(b"\n") + 1
        raise PDMFormatError(f"{path} is not valid UTF-8 (byte 0x{raw[exc.start]:02x})", line_no) from None


def load_pdm(source):
    """
    Load a model from a file path or a `builtin:NAME` reference and validate it

    Args:
        source (str | Path): File path or builtin reference

    Returns:
        ProductDataModel: Validated model
    """
    source = str(source)
    if source.startswith("builtin:"):
        # Imported here to keep the model layer free of experiment code at import time
        from pdm_rank.experiment_utils import builtin_pdm
        return builtin_pdm(source.split(":", 1)[1])

    path = Path(source)
    if not path.exists():
        raise FileNotFoundError(f"PDM file not found: {path}")
    pdm = parse_pdm(read_pdm_text(path), name=path.stem)
    violations = validate(pdm)
    if violations:
        raise PDMValidationError(violations)
    print_manager.print_data(f"Loaded {len(pdm.operations)} operations from {path}")
    return pdm


@dataclass(frozen=True)
class NormalizedGraph:
    """
    Directed simple graph derived from a PDM. Operations that would create a
    second edge between the same ordered pair of vertices are rerouted to a
    dummy vertex, followed by a zero-attribute artificial operation.
    """
    pdm: ProductDataModel
    operations: Tuple[Operation, ...]
    digraph: nx.DiGraph
    dummy_vertices: Tuple[str, ...]
    rerouted: Dict[str, str] = field(default_factory=dict)   # original op id -> dummy vertex
    artificial_for: Dict[str, str] = field(default_factory=dict)  # artificial op id -> original op id

    @property
    def root(self):
        return self.pdm.root

    @cached_property
    def vertices(self):
        return frozenset(self.digraph.nodes)

    @cached_property
    def by_id(self) -> Dict[str, Operation]:
        return {op.id: op for op in self.operations}

    @cached_property
    def order(self) -> Dict[str, int]:
        return {op.id: i for i, op in enumerate(self.operations)}

    @cached_property
    def real_operations(self) -> Tuple[Operation, ...]:
        return tuple(op for op in self.operations if not op.artificial)

    @cached_property
    def artificial_operations(self) -> Tuple[Operation, ...]:
        return tuple(op for op in self.operations if op.artificial)

    @cached_property
    def producers_of(self) -> Dict[str, Tuple[Operation, ...]]:
        table = {v: [] for v in self.digraph.nodes}
        for op in self.operations:
            table.setdefault(op.output, []).append(op)
        return {v: tuple(ops) for v, ops in table.items()}

    @cached_property
    def consumers_of(self) -> Dict[str, Tuple[Operation, ...]]:
        table = {v: [] for v in self.digraph.nodes}
        for op in self.operations:
            for element in op.inputs:
                table.setdefault(element, []).append(op)
        return {v: tuple(ops) for v, ops in table.items()}

    def original_of(self, op_id):
        """Id of the PDM operation an operation of this graph stands for (None for artificial ones)"""
        if op_id in self.artificial_for:
            return None
        return op_id

    def collapse(self):
        """Hyperedges with dummy vertices removed: {op id: (frozenset(inputs), output)}"""
        forward = {op.inputs[0]: op.output for op in self.artificial_operations}
        edges = {}
        for op in self.real_operations:
            edges[op.id] = (frozenset(op.inputs), forward.get(op.output, op.output))
        return edges


def normalize(pdm):
    """
    Turn a PDM into a NormalizedGraph with at most one edge per vertex pair

    Operations are visited in file order. An operation whose (input, output)
    pairs collide with an edge kept earlier is rerouted: its output becomes a
    fresh dummy vertex `_d<n>` and an artificial operation `_a<n>` maps the
    dummy to the original output.
    """
    digraph = nx.DiGraph()
    digraph.add_nodes_from(pdm.sorted_elements())
    operations: List[Operation] = []
    dummies: List[str] = []
    rerouted: Dict[str, str] = {}
    artificial_for: Dict[str, str] = {}

    for op in pdm.operations:
        pairs = [(element, op.output) for element in op.inputs]
        if not any(digraph.has_edge(u, v) for u, v in pairs):
            for u, v in pairs:
                digraph.add_edge(u, v, op=op.id)
            operations.append(op)
            continue

        n = len(dummies) + 1
        dummy = f"{DUMMY_PREFIX}{n}"
        artificial_id = f"{ARTIFICIAL_PREFIX}{n}"
        dummies.append(dummy)
        rerouted[op.id] = dummy
        artificial_for[artificial_id] = op.id

        moved = Operation(
            id=op.id, output=dummy, inputs=op.inputs, cost=op.cost, time=op.time,
            fail_prob=op.fail_prob, quality=op.quality, sigma=op.sigma,
            time_from_cost=op.time_from_cost,
        )
        link = Operation(id=artificial_id, output=op.output, inputs=(dummy,), cost=0.0, time=0.0,
                         fail_prob=0.0, artificial=True)
        digraph.add_node(dummy)
        for u, _ in pairs:
            digraph.add_edge(u, dummy, op=op.id)
        digraph.add_edge(dummy, op.output, op=artificial_id)
        operations.extend([moved, link])

    if dummies:
        print_manager.print_data(f"Normalization of {pdm.name or 'model'}: {len(dummies)} dummy vertices ({', '.join(dummies)})")

    return NormalizedGraph(
        pdm=pdm,
        operations=tuple(operations),
        digraph=nx.freeze(digraph),
        dummy_vertices=tuple(dummies),
        rerouted=rerouted,
        artificial_for=artificial_for,
    )
