"""JSON files for instances, plans and results; LP-format export and solution import."""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from .formulations import MilpModel
from .lp_engine import EQ, GE, LE
from .model_core import Horizon, Instance, Request
from .routes import Plan

SCHEMA_VERSION = 1

PathLike = Union[str, Path]


class FormatError(ValueError):
    pass


# ---------------------------------------------------------------------------
# JSON


def dumps(doc: dict) -> str:
    """Canonical JSON text: sorted keys, two-space indent, trailing newline."""
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _load(text: str, kind: str) -> dict:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"not JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise FormatError("top level must be an object")
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise FormatError(f"unsupported schema_version {doc.get('schema_version')!r}")
    if doc.get("kind") != kind:
        raise FormatError(f"expected a {kind} document, got {doc.get('kind')!r}")
    return doc


def _matrix(rows) -> tuple[tuple[int, ...], ...]:
    return tuple(tuple(int(v) for v in row) for row in rows)


def instance_to_dict(inst: Instance) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "instance",
        "name": inst.name,
        "days": inst.horizon.days,
        "instants_per_day": inst.horizon.instants_per_day,
        "locations": list(inst.locations),
        "truck_starts": list(inst.truck_starts),
        "driver_starts": list(inst.driver_starts),
        "requests": [{
            "id": r.id,
            "pickup_loc": r.pickup_loc,
            "delivery_loc": r.delivery_loc,
            "pickup_day": r.pickup_day,
            "delivery_day": r.delivery_day,
            "pickup_window": list(r.pickup_window),
            "delivery_window": list(r.delivery_window),
            "pickup_service": r.pickup_service,
            "delivery_service": r.delivery_service,
            "penalty": r.penalty,
        } for r in inst.requests],
        "truck_time": [list(row) for row in inst.truck_time],
        "truck_cost": [list(row) for row in inst.truck_cost],
        "taxi_time": [list(row) for row in inst.taxi_time],
        "taxi_cost": [list(row) for row in inst.taxi_cost],
        "notes": inst.notes,
    }


def instance_from_dict(doc: dict) -> Instance:
    try:
        requests = tuple(Request(
            id=str(r["id"]),
            pickup_loc=int(r["pickup_loc"]),
            delivery_loc=int(r["delivery_loc"]),
            pickup_day=int(r["pickup_day"]),
            delivery_day=int(r["delivery_day"]),
            pickup_window=tuple(int(v) for v in r["pickup_window"]),
            delivery_window=tuple(int(v) for v in r["delivery_window"]),
            pickup_service=int(r.get("pickup_service", 1)),
            delivery_service=int(r.get("delivery_service", 1)),
            penalty=int(r.get("penalty", 0)),
        ) for r in doc["requests"])
        return Instance(
            horizon=Horizon(int(doc["days"]), int(doc["instants_per_day"])),
            locations=tuple(str(l) for l in doc["locations"]),
            truck_starts=tuple(int(v) for v in doc["truck_starts"]),
            driver_starts=tuple(int(v) for v in doc["driver_starts"]),
            requests=requests,
            truck_time=_matrix(doc["truck_time"]),
            truck_cost=_matrix(doc["truck_cost"]),
            taxi_time=_matrix(doc["taxi_time"]),
            taxi_cost=_matrix(doc["taxi_cost"]),
            name=str(doc.get("name", "")),
            notes=dict(doc.get("notes", {})),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"bad instance document: {exc!r}") from None


def plan_to_dict(plan: Plan, instance_name: str = "") -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "plan",
        "instance": instance_name,
        "flavor": plan.flavor,
        "truck_routes": [list(r) for r in plan.truck_routes],
        "driver_routes": [list(r) for r in plan.driver_routes],
        "day_off": None if plan.day_off is None else [list(f) for f in plan.day_off],
    }


def plan_from_dict(doc: dict) -> Plan:
    try:
        day_off = doc.get("day_off")
        return Plan(str(doc["flavor"]),
                    [[int(e) for e in r] for r in doc["truck_routes"]],
                    [[int(e) for e in r] for r in doc["driver_routes"]],
                    None if day_off is None else [[int(f) for f in row] for row in day_off])
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"bad plan document: {exc!r}") from None


def dumps_instance(inst: Instance) -> str:
    return dumps(instance_to_dict(inst))


def loads_instance(text: str) -> Instance:
    return instance_from_dict(_load(text, "instance"))


def dumps_plan(plan: Plan, instance_name: str = "") -> str:
    return dumps(plan_to_dict(plan, instance_name))


def loads_plan(text: str) -> Plan:
    return plan_from_dict(_load(text, "plan"))


def write_instance(inst: Instance, path: PathLike) -> None:
    Path(path).write_text(dumps_instance(inst))


def read_instance(path: PathLike) -> Instance:
    return loads_instance(Path(path).read_text())


def write_plan(plan: Plan, path: PathLike, instance_name: str = "") -> None:
    Path(path).write_text(dumps_plan(plan, instance_name))


def read_plan(path: PathLike) -> Plan:
    return loads_plan(Path(path).read_text())


def document_kind(text: str) -> str:
    """``kind`` field of a JSON document, for commands that accept several."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"not JSON: {exc}") from None
    return doc.get("kind", "") if isinstance(doc, dict) else ""


def result_to_dict(**fields) -> dict:
    """Result document; non-finite floats become null."""
    def clean(v):
        if isinstance(v, float) and not math.isfinite(v):
            return None
        if isinstance(v, dict):
            return {k: clean(x) for k, x in v.items()}
        if isinstance(v, (list, tuple)):
            return [clean(x) for x in v]
        return v
    return {"schema_version": SCHEMA_VERSION, "kind": "result", **clean(fields)}


# ---------------------------------------------------------------------------
# LP format

_SENSE_TEXT = {LE: "<=", GE: ">=", EQ: "="}
_TEXT_SENSE = {"<=": LE, "=<": LE, "<": LE, ">=": GE, "=>": GE, ">": GE, "=": EQ}
_WIDTH = 78


def num(v: float) -> str:
    """Number with 17 significant digits, integers without a fraction."""
    v = float(v)
    if v == 0:
        return "0"
    return format(v, ".17g")


def _expr(names: Sequence[str], coefs: Sequence[float]) -> list[str]:
    parts = []
    for name, c in zip(names, coefs):
        sign = "-" if c < 0 else "+"
        parts.append(f"{sign} {num(abs(c))} {name}")
    return parts


def _wrap(head: str, parts: list[str]) -> list[str]:
    lines, cur = [], head
    for p in parts:
        if len(cur) + 1 + len(p) > _WIDTH and cur.strip():
            lines.append(cur)
            cur = "   " + p
        else:
            cur = f"{cur} {p}" if cur else p
    lines.append(cur)
    return lines


@dataclass
class ExtraRow:
    name: str
    cols: list[int]
    coefs: list[float]
    sense: int
    rhs: float


def emit_lp(model: MilpModel, extra_rows: Sequence[ExtraRow] = ()) -> str:
    """The model in LP text format, with optional extra rows (cuts) appended."""
    names = [v.name for v in model.variables]
    out = ["\\ " + (model.inst.name or "model") + f" flavor={model.options.flavor}"
           f" precedence={model.options.precedence} sync={model.options.sync}",
           "Minimize"]
    nz = np.flatnonzero(model.obj)
    parts = _expr([names[j] for j in nz], [model.obj[j] for j in nz]) or [f"0 {names[0]}"] if names else []
    out.extend(_wrap(" obj:", parts))
    out.append("Subject To")
    rows = [ExtraRow(r.name, list(r.cols), list(r.coefs), r.sense, r.rhs) for r in model.rows]
    for row in list(rows) + list(extra_rows):
        parts = _expr([names[j] for j in row.cols], row.coefs) or [f"0 {names[0]}"]
        parts.append(f"{_SENSE_TEXT[row.sense]} {num(row.rhs)}")
        out.extend(_wrap(f" {row.name}:", parts))
    out.append("Bounds")
    binaries, generals = [], []
    for j, name in enumerate(names):
        lo, hi = model.lb[j], model.ub[j]
        is_int = bool(model.integer[j])
        if is_int and lo == 0 and hi == 1:
            binaries.append(name)
            continue
        if is_int:
            generals.append(name)
        if lo == hi:
            out.append(f" {name} = {num(lo)}")
        else:
            lo_t = "-inf" if math.isinf(lo) else num(lo)
            hi_t = "+inf" if math.isinf(hi) else num(hi)
            out.append(f" {lo_t} <= {name} <= {hi_t}")
    if generals:
        out.append("Generals")
        out.extend(_wrap("", generals))
    if binaries:
        out.append("Binaries")
        out.extend(_wrap("", binaries))
    out.append("End")
    return "\n".join(out) + "\n"


def write_lp(model: MilpModel, path: PathLike, extra_rows: Sequence[ExtraRow] = ()) -> None:
    Path(path).write_text(emit_lp(model, extra_rows))


@dataclass
class LpText:
    """Structural content of an LP file."""
    objective: dict[str, float] = field(default_factory=dict)
    rows: list[tuple[str, dict[str, float], int, float]] = field(default_factory=list)
    bounds: dict[str, tuple[float, float]] = field(default_factory=dict)
    generals: list[str] = field(default_factory=list)
    binaries: list[str] = field(default_factory=list)


_SECTIONS = {
    "minimize": "obj", "minimum": "obj", "min": "obj",
    "subject to": "rows", "such that": "rows", "st": "rows", "s.t.": "rows",
    "bounds": "bounds", "bound": "bounds",
    "generals": "generals", "general": "generals", "gen": "generals",
    "binaries": "binaries", "binary": "binaries", "bin": "binaries",
    "end": "end",
}
_NAME = r"[A-Za-z_][A-Za-z0-9_.\[\]]*"
_NUMBER = re.compile(r"[+-]?(?:inf(?:inity)?|[0-9]*\.?[0-9]+(?:[eE][+-]?[0-9]+)?)", re.I)


def _number(tok: str) -> float:
    if not _NUMBER.fullmatch(tok):
        raise FormatError(f"bad number {tok!r}")
    return float(tok)


def _linear(text: str) -> dict[str, float]:
    text = text.strip()
    terms: dict[str, float] = {}
    pos = 0
    while pos < len(text):
        m = re.compile(r"\s*([+-])?\s*(" + _NUMBER.pattern + r")?\s*(" + _NAME + r")\s*").match(text, pos)
        if not m or m.end() == pos:
            raise FormatError(f"cannot parse expression near {text[pos:pos + 30]!r}")
        sign = -1.0 if m.group(1) == "-" else 1.0
        coef = _number(m.group(2)) if m.group(2) else 1.0
        name = m.group(3)
        terms[name] = terms.get(name, 0.0) + sign * coef
        pos = m.end()
    return terms


def parse_lp(text: str) -> LpText:
    """Parse the LP subset written by :func:`emit_lp`."""
    lp = LpText()
    section = None
    chunks: dict[str, list[str]] = {"obj": [], "rows": [], "bounds": [], "generals": [], "binaries": []}
    for raw in text.splitlines():
        line = raw.split("\\", 1)[0].rstrip()
        if not line.strip():
            continue
        key = line.strip().lower()
        if key in _SECTIONS and not raw.startswith(" "):
            section = _SECTIONS[key]
            if section == "end":
                break
            continue
        if section is None:
            raise FormatError(f"text before the objective section: {line!r}")
        if section in ("obj", "rows") and raw.startswith("   ") and chunks[section]:
            chunks[section][-1] += " " + line.strip()
        elif section in ("generals", "binaries"):
            chunks[section].extend(line.split())
        else:
            chunks[section].append(line.strip())
    else:
        if section != "end":
            raise FormatError("missing End")
    for entry in chunks["obj"]:
        _, _, body = entry.partition(":")
        lp.objective = {k: v for k, v in _linear(body).items() if v != 0}
    for entry in chunks["rows"]:
        name, colon, body = entry.partition(":")
        if not colon:
            raise FormatError(f"unnamed row {entry!r}")
        m = re.search(r"(<=|>=|=<|=>|<|>|=)\s*(\S+)\s*$", body)
        if not m:
            raise FormatError(f"row {name.strip()} has no sense")
        coefs = {k: v for k, v in _linear(body[:m.start()]).items() if v != 0}
        lp.rows.append((name.strip(), coefs, _TEXT_SENSE[m.group(1)], _number(m.group(2))))
    for entry in chunks["bounds"]:
        tok = entry.split()
        if len(tok) == 5 and tok[1] in ("<=", "=<") and tok[3] in ("<=", "=<"):
            lp.bounds[tok[2]] = (_number(tok[0]), _number(tok[4]))
        elif len(tok) == 3 and tok[1] == "=":
            v = _number(tok[2])
            lp.bounds[tok[0]] = (v, v)
        elif len(tok) == 2 and tok[1].lower() == "free":
            lp.bounds[tok[0]] = (-math.inf, math.inf)
        else:
            raise FormatError(f"bad bound line {entry!r}")
    lp.generals = chunks["generals"]
    lp.binaries = chunks["binaries"]
    for name in lp.binaries:
        lp.bounds.setdefault(name, (0.0, 1.0))
    return lp


def model_lp_text(model: MilpModel, extra_rows: Sequence[ExtraRow] = ()) -> LpText:
    """What :func:`parse_lp` should return for ``emit_lp(model, extra_rows)``."""
    names = [v.name for v in model.variables]
    lp = LpText()
    lp.objective = {names[j]: float(model.obj[j]) for j in np.flatnonzero(model.obj)}
    for row in list(model.rows) + list(extra_rows):
        coefs: dict[str, float] = {}
        for j, c in zip(row.cols, row.coefs):
            coefs[names[j]] = coefs.get(names[j], 0.0) + float(c)
        lp.rows.append((row.name, {k: v for k, v in coefs.items() if v != 0}, row.sense, float(row.rhs)))
    for j, name in enumerate(names):
        lo, hi, is_int = float(model.lb[j]), float(model.ub[j]), bool(model.integer[j])
        lp.bounds[name] = (lo, hi)
        if is_int and lo == 0 and hi == 1:
            lp.binaries.append(name)
        elif is_int:
            lp.generals.append(name)
    return lp


@dataclass
class SolutionValues:
    x: np.ndarray
    unknown: int
    missing: int


def read_solution(text: str, model: MilpModel) -> SolutionValues:
    """Values from ``name value`` lines; unknown names are counted and skipped.

    Blank lines and lines starting with ``#`` or ``\\`` are ignored; variables
    not mentioned are zero.
    """
    index = {v.name: k for k, v in enumerate(model.variables)}
    x = np.zeros(model.n_vars)
    seen = set()
    unknown = 0
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line[0] in "#\\":
            continue
        tok = line.split()
        if len(tok) != 2:
            raise FormatError(f"line {lineno}: expected 'name value', got {line!r}")
        try:
            value = float(tok[1])
        except ValueError:
            raise FormatError(f"line {lineno}: bad value {tok[1]!r}") from None
        j = index.get(tok[0])
        if j is None:
            unknown += 1
            continue
        x[j] = value
        seen.add(j)
    return SolutionValues(x, unknown, model.n_vars - len(seen))


def load_solution(path: PathLike, model: MilpModel) -> SolutionValues:
    return read_solution(Path(path).read_text(), model)


def format_solution(model: MilpModel, x: np.ndarray, skip_zero: bool = True) -> str:
    lines = [f"{v.name} {num(val)}" for v, val in zip(model.variables, x) if not (skip_zero and val == 0)]
    return "\n".join(lines) + "\n"
