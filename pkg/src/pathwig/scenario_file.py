"""JSON scenario documents: parsing, validation, and canonical emission.

Complex numbers are ``[re, im]`` pairs, vectors are lists of pairs, and
matrices are row-major lists of vectors. Emission always writes explicit
matrices and full-space branch bases, so emit -> parse -> emit is
byte-identical.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any

import jsonschema
import numpy as np

from .hilbert import (
    LayoutError,
    NormalizationError,
    OperatorMatrix,
    SpaceLayout,
    StateVector,
    embed_operator,
    permute_layout,
    tensor_state,
)
from .protocol import (
    Branch,
    CouplingEvent,
    MeasurementEvent,
    ObservableDecomposition,
    Protocol,
    ProtocolValidationError,
    composite_basis_coupling,
    controlled_flip_coupling,
    validate,
)

SCHEMA_VERSION = 1
QUERY_KINDS = ("distribution", "paths", "interference", "compare_oracle", "wigner_comparison")


class ScenarioSyntaxError(ValueError):
    exit_code = 2


class ScenarioSchemaError(ValueError):
    exit_code = 3


class ScenarioProtocolError(ValueError):
    exit_code = 4

    def __init__(self, message: str, diagnostics: list[str] | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or [message]


def _schema(strict: bool) -> dict:
    def obj(props: dict, required: list[str]) -> dict:
        out = {"type": "object", "properties": props, "required": required}
        if strict:
            out["additionalProperties"] = False
        return out

    number = {"type": "number"}
    cplx = {"type": "array", "items": number, "minItems": 2, "maxItems": 2}
    vector = {"type": "array", "items": cplx, "minItems": 1}
    matrix = {"type": "array", "items": vector, "minItems": 1}
    names = {"type": "array", "items": {"type": "string"}, "minItems": 1}
    gate = {
        "oneOf": [
            obj({"name": {"const": "cnot"}}, ["name"]),
            obj({"name": {"const": "controlled_flip"},
                 "basis": {"type": "array", "items": vector, "minItems": 2, "maxItems": 2}},
                ["name", "basis"]),
            obj({"name": {"const": "composite_flip"}, "distinguished": vector,
                 "completion": {"type": "array", "items": vector}},
                ["name", "distinguished", "completion"]),
        ]
    }
    branch = {
        "allOf": [obj({"eigenvalue": number, "label": {"type": "string"},
                       "basis_states": {"type": "array", "items": vector, "minItems": 1},
                       "projector": matrix}, ["eigenvalue"])],
        "oneOf": [{"required": ["basis_states"]}, {"required": ["projector"]}],
    }
    couple = obj({"time": number, "targets": names, "matrix": matrix, "gate": gate,
                  "kind": {"type": "string"}}, ["time", "targets"])
    couple["oneOf"] = [{"required": ["matrix"]}, {"required": ["gate"]}]
    measure = obj({
        "time": number,
        "observer": {"type": "string", "minLength": 1},
        "registered": {"type": "boolean"},
        "observable": obj({"label": {"type": "string"}, "targets": names,
                           "branches": {"type": "array", "items": branch, "minItems": 1}},
                          ["branches"]),
    }, ["time", "observer", "observable"])
    event = {"oneOf": [obj({"couple": couple}, ["couple"]), obj({"measure": measure}, ["measure"])]}
    final = {"type": "string"}
    query = {"oneOf": [
        obj({"distribution": obj({}, [])}, ["distribution"]),
        obj({"paths": obj({"final": final}, ["final"])}, ["paths"]),
        obj({"interference": obj({"final": final}, ["final"])}, ["interference"]),
        obj({"compare_oracle": obj({"tolerance": number}, [])}, ["compare_oracle"]),
        obj({"wigner_comparison": obj({"final": final}, ["final"])}, ["wigner_comparison"]),
    ]}
    initial = {"oneOf": [
        obj({"product": {"type": "object", "additionalProperties": vector}}, ["product"]),
        obj({"vector": vector}, ["vector"]),
    ]}
    return obj({
        "schema_version": {"const": SCHEMA_VERSION},
        "name": {"type": "string"},
        "subsystems": {"type": "array", "minItems": 1,
                       "items": obj({"name": {"type": "string", "minLength": 1},
                                     "dim": {"type": "integer", "minimum": 2}}, ["name", "dim"])},
        "initial": initial,
        "events": {"type": "array", "items": event},
        "queries": {"type": "array", "items": query},
    }, ["schema_version", "subsystems", "initial", "events"])


def _path(error: jsonschema.ValidationError) -> str:
    out = "$"
    for part in error.absolute_path:
        out += f"[{part}]" if isinstance(part, int) else f".{part}"
    return out


def _best_error(errors) -> jsonschema.ValidationError:
    err = jsonschema.exceptions.best_match(errors)
    # descend through oneOf wrappers to the most specific complaint
    while err.context:
        err = jsonschema.exceptions.best_match(err.context)
    return err


def _complex_vector(raw) -> np.ndarray:
    return np.array([complex(re, im) for re, im in raw], dtype=complex)


def _complex_matrix(raw) -> np.ndarray:
    return np.array([[complex(re, im) for re, im in row] for row in raw], dtype=complex)


def _pairs(values) -> list:
    return [[float(z.real), float(z.imag)] for z in np.asarray(values, dtype=complex).reshape(-1)]


def _matrix_rows(m) -> list:
    return [_pairs(row) for row in np.asarray(m)]


@dataclass(frozen=True, eq=False)
class ScenarioDocument:
    schema_version: int
    protocol: Protocol
    queries: list = field(default_factory=list)
    name: str = ""


def _gate_matrix(gate: dict, layout: SpaceLayout, targets: list[str]) -> OperatorMatrix:
    name = gate["name"]
    if name == "cnot":
        if len(targets) != 2:
            raise ScenarioSchemaError("cnot needs exactly two targets [control, target]")
        control, target = targets
        if layout.dim(control) != 2 or layout.dim(target) != 2:
            raise ScenarioSchemaError("cnot acts on two qubits")
        u = np.eye(4, dtype=complex)[[0, 1, 3, 2]]
        return OperatorMatrix(layout.sub(targets), u, unitary=True)
    if name == "controlled_flip":
        if len(targets) != 2:
            raise ScenarioSchemaError("controlled_flip needs targets [pointer, system]")
        basis = [_complex_vector(v) for v in gate["basis"]]
        return controlled_flip_coupling(layout, targets[0], targets[1], basis)
    distinguished = _complex_vector(gate["distinguished"])
    completion = [_complex_vector(v) for v in gate["completion"]]
    return composite_basis_coupling(layout, targets[0], targets[1:], distinguished, completion)


def _observable(raw: dict, layout: SpaceLayout, where: str) -> ObservableDecomposition:
    targets = raw.get("targets")
    branches = []
    for i, b in enumerate(raw["branches"]):
        if targets:
            local = layout.sub(targets)
            rest = [n for n in layout.names if n not in targets]
            if "projector" in b:
                proj = embed_operator(_complex_matrix(b["projector"]), targets, layout).entries
                branches.append(Branch(b["eigenvalue"], proj, b.get("label", "")))
                continue
            cols = np.column_stack([_complex_vector(v) for v in b["basis_states"]])
            if cols.shape[0] != local.total_dim:
                raise ScenarioSchemaError(f"{where}.branches[{i}]: basis states need {local.total_dim} entries")
            rest_dim = layout.total_dim // local.total_dim
            full = np.kron(cols, np.eye(rest_dim))
            full = permute_layout(full, layout.sub(list(targets) + rest), layout.names)
            branches.append(Branch(b["eigenvalue"], None, b.get("label", ""), full))
        elif "projector" in b:
            proj = _complex_matrix(b["projector"])
            if proj.shape != (layout.total_dim,) * 2:
                raise ScenarioSchemaError(f"{where}.branches[{i}]: projector must be {layout.total_dim}x{layout.total_dim}")
            branches.append(Branch(b["eigenvalue"], proj, b.get("label", "")))
        else:
            cols = np.column_stack([_complex_vector(v) for v in b["basis_states"]])
            if cols.shape[0] != layout.total_dim:
                raise ScenarioSchemaError(f"{where}.branches[{i}]: basis states need {layout.total_dim} entries")
            branches.append(Branch(b["eigenvalue"], None, b.get("label", ""), cols))
    return ObservableDecomposition(layout, tuple(branches), raw.get("label", ""))


def build_protocol(doc: dict) -> Protocol:
    try:
        layout = SpaceLayout(tuple((s["name"], s["dim"]) for s in doc["subsystems"]))
    except LayoutError as exc:
        raise ScenarioSchemaError(f"$.subsystems: {exc}") from None
    init = doc["initial"]
    try:
        if "vector" in init:
            initial = StateVector(layout, _complex_vector(init["vector"]))
        else:
            missing = set(layout.names) ^ set(init["product"])
            if missing:
                raise ScenarioSchemaError(f"$.initial.product: subsystems mismatch {sorted(missing)}")
            initial = tensor_state([StateVector(layout.sub([n]), _complex_vector(init["product"][n]))
                                    for n in layout.names], layout)
    except LayoutError as exc:
        raise ScenarioSchemaError(f"$.initial: {exc}") from None
    except NormalizationError as exc:
        raise ScenarioProtocolError(f"$.initial: {exc}") from None

    events = []
    for i, entry in enumerate(doc["events"]):
        where = f"$.events[{i}]"
        try:
            if "couple" in entry:
                c = entry["couple"]
                targets = list(c["targets"])
                for t in targets:
                    layout.position(t)
                if "gate" in c:
                    op = _gate_matrix(c["gate"], layout, targets)
                else:
                    op = OperatorMatrix(layout.sub(targets), _complex_matrix(c["matrix"]), unitary=True)
                events.append(CouplingEvent(c["time"], op, tuple(targets), c.get("kind", "coupling")))
            else:
                m = entry["measure"]
                obs = _observable(m["observable"], layout, f"{where}.measure.observable")
                events.append(MeasurementEvent(m["time"], m["observer"], obs, m.get("registered", True)))
        except ScenarioSchemaError as exc:
            raise ScenarioSchemaError(f"{where}: {exc}") from None
        except LayoutError as exc:
            raise ScenarioSchemaError(f"{where}: {exc}") from None
        except ValueError as exc:
            raise ScenarioProtocolError(f"{where}: {exc}") from None
    return Protocol(layout, initial, events, name=doc.get("name", ""))


def parse_scenario(text: str, strict: bool = True) -> ScenarioDocument:
    """Parse and fully validate a scenario document.

    Raises ScenarioSyntaxError (exit 2), ScenarioSchemaError (exit 3) or
    ScenarioProtocolError (exit 4).
    """
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioSyntaxError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    validator = jsonschema.Draft202012Validator(_schema(strict))
    errors = list(validator.iter_errors(raw))
    if errors:
        err = _best_error(errors)
        raise ScenarioSchemaError(f"{_path(err)}: {err.message}")
    protocol = build_protocol(raw)
    diagnostics = validate(protocol)
    if diagnostics:
        raise ScenarioProtocolError("protocol validation failed: " + "; ".join(diagnostics), diagnostics)
    return ScenarioDocument(raw["schema_version"], protocol, list(raw.get("queries", [])),
                            raw.get("name", ""))


def document_from_protocol(protocol: Protocol, queries=(), name: str | None = None) -> dict:
    doc: dict[str, Any] = {"schema_version": SCHEMA_VERSION}
    name = protocol.name if name is None else name
    if name:
        doc["name"] = name
    doc["subsystems"] = [{"name": n, "dim": d} for n, d in protocol.layout.subsystems]
    doc["initial"] = {"vector": _pairs(protocol.initial.entries)}
    events = []
    for e in protocol.events:
        if isinstance(e, CouplingEvent):
            c = {"time": e.time, "targets": list(e.targets), "matrix": _matrix_rows(e.unitary.entries)}
            if e.kind != "coupling":
                c["kind"] = e.kind
            events.append({"couple": c})
        else:
            obs = {"label": e.observable.label, "branches": [
                {"eigenvalue": b.eigenvalue, "label": b.label,
                 "basis_states": [_pairs(b.basis[:, j]) for j in range(b.rank)]}
                for b in e.observable.branches]}
            events.append({"measure": {"time": e.time, "observer": e.observer,
                                       "registered": bool(e.registered), "observable": obs}})
    doc["events"] = events
    if queries:
        doc["queries"] = list(queries)
    return doc


def document_to_dict(document: ScenarioDocument) -> dict:
    return document_from_protocol(document.protocol, document.queries, document.name)


def _is_numeric_list(x, depth: int) -> bool:
    if depth == 0:
        return isinstance(x, (int, float)) and not isinstance(x, bool)
    return isinstance(x, list) and all(_is_numeric_list(v, depth - 1) or _is_numeric_list(v, 0)
                                       for v in x)


def dump_document(doc, indent: int = 0) -> str:
    """Canonical text: nested objects indented, numeric vectors kept on one line."""
    pad = "  " * indent
    inner = "  " * (indent + 1)
    if isinstance(doc, dict):
        if not doc:
            return "{}"
        items = [f"{inner}{json.dumps(k)}: {dump_document(v, indent + 1)}" for k, v in doc.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(doc, list):
        scalars = all(not isinstance(v, (list, dict)) for v in doc)
        if not doc or scalars or _is_numeric_list(doc, 2):
            return json.dumps(doc, separators=(", ", ": "))
        items = [inner + dump_document(v, indent + 1) for v in doc]
        return "[\n" + ",\n".join(items) + "\n" + pad + "]"
    return json.dumps(doc)


def emit(document: ScenarioDocument | Protocol, queries=()) -> str:
    if isinstance(document, Protocol):
        doc = document_from_protocol(document, queries)
    else:
        doc = document_to_dict(document)
    return dump_document(doc) + "\n"


__all__ = [
    "ScenarioDocument", "ScenarioSyntaxError", "ScenarioSchemaError", "ScenarioProtocolError",
    "parse_scenario", "document_from_protocol", "dump_document", "emit", "ProtocolValidationError",
]
