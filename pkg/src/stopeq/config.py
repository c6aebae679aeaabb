"""JSON problem configuration: parsing, validation and problem construction.

A config names a chain, a payoff and a discount curve::

    {
      "chain":    {"type": "matrix", "labels": [1, 2], "rows": [[0.5, 0.5], [0, 1]]},
      "payoff":   {"type": "identity"},
      "discount": {"family": "hyperbolic", "params": {"beta": 0.2}},
      "tol": 1e-10,
      "tie_tol": 1e-9
    }

``chain`` may instead be ``{"type": "lattice", "u", "p", "window", "boundary"}``;
``payoff`` may be ``{"type": "table", "values"}`` or ``{"type": "put", "K"}``;
``discount`` may be ``{"type": "table", "values"}``.  Errors carry a JSON
path such as ``$.chain.rows[1]`` (and a line number for syntax errors).
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from stopeq.discounting import DiscountCurve, Family
from stopeq.equilibrium import TIE_TOL
from stopeq.errors import ConfigParseError, ValidationError
from stopeq.evaluate import DEFAULT_TOL, StoppingProblem
from stopeq.markov import Boundary, LatticeSpec, build_finite_chain, build_lattice_chain

_CHAIN_KEYS = {"matrix": {"labels", "rows"}, "lattice": {"u", "p", "window", "boundary"}}
_PAYOFF_KEYS = {"table": {"values"}, "put": {"K"}, "identity": set()}


@dataclass(frozen=True)
class ProblemConfig:
    chain: dict
    payoff: dict
    discount: dict
    tol: float = DEFAULT_TOL
    tie_tol: float = TIE_TOL

    @classmethod
    def from_dict(cls, data) -> "ProblemConfig":
        if not isinstance(data, dict):
            raise ConfigParseError("config must be a JSON object", "$")
        _no_extra(data, {"chain", "payoff", "discount", "tol", "tie_tol"}, "$")
        for key in ("chain", "payoff", "discount"):
            if key not in data:
                raise ConfigParseError(f"missing required field {key!r}", "$")
        chain = _parse_chain(data["chain"])
        payoff = _parse_payoff(data["payoff"])
        discount = _parse_discount(data["discount"])
        tol = _positive(data.get("tol", DEFAULT_TOL), "$.tol")
        tie_tol = _number(data.get("tie_tol", TIE_TOL), "$.tie_tol")
        if tie_tol < 0:
            raise ConfigParseError("must be nonnegative", "$.tie_tol")
        cfg = cls(chain, payoff, discount, tol, tie_tol)
        _build(cfg)  # surface dimension and stochasticity errors at load time
        return cfg

    def to_dict(self) -> dict:
        return {"chain": copy.deepcopy(self.chain), "payoff": copy.deepcopy(self.payoff),
                "discount": copy.deepcopy(self.discount), "tol": self.tol,
                "tie_tol": self.tie_tol}

    def problem(self) -> StoppingProblem:
        return _build(self)


def load_config(path) -> ProblemConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigParseError(f"cannot read config: {exc.strerror}", str(path)) from None
    return parse_config(text, source=str(path))


def parse_config(text: str, source: str = "<config>") -> ProblemConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigParseError(exc.msg, f"{source}:{exc.lineno}:{exc.colno}") from None
    return ProblemConfig.from_dict(data)


# -- field parsers ------------------------------------------------------------

def _no_extra(obj, allowed, where):
    extra = set(obj) - set(allowed)
    if extra:
        raise ConfigParseError(f"unexpected field(s) {sorted(extra)}", where)


def _variant(obj, where, table):
    if not isinstance(obj, dict):
        raise ConfigParseError("must be an object", where)
    kind = obj.get("type")
    if kind not in table:
        raise ConfigParseError(f"'type' must be one of {sorted(table)}, got {kind!r}", where)
    _no_extra(obj, table[kind] | {"type"}, where)
    return kind


def _number(x, where):
    if isinstance(x, bool) or not isinstance(x, (int, float)) or not math.isfinite(x):
        raise ConfigParseError(f"expected a finite number, got {x!r}", where)
    return float(x)


def _positive(x, where):
    x = _number(x, where)
    if x <= 0:
        raise ConfigParseError("must be positive", where)
    return x


def _number_list(xs, where):
    if not isinstance(xs, list) or not xs:
        raise ConfigParseError("expected a nonempty list of numbers", where)
    return [_number(x, f"{where}[{i}]") for i, x in enumerate(xs)]


def _required(obj, key, where):
    if key not in obj:
        raise ConfigParseError(f"missing required field {key!r}", where)
    return obj[key]


def _parse_chain(obj):
    where = "$.chain"
    kind = _variant(obj, where, _CHAIN_KEYS)
    if kind == "matrix":
        labels = _required(obj, "labels", where)
        rows = _required(obj, "rows", where)
        if not isinstance(labels, list) or not labels:
            raise ConfigParseError("expected a nonempty list", f"{where}.labels")
        for i, lab in enumerate(labels):
            if isinstance(lab, bool) or not isinstance(lab, (int, float, str)):
                raise ConfigParseError("labels must be numbers or strings", f"{where}.labels[{i}]")
        if not isinstance(rows, list) or len(rows) != len(labels):
            raise ConfigParseError(f"expected {len(labels)} rows", f"{where}.rows")
        parsed = []
        for i, row in enumerate(rows):
            vals = _number_list(row, f"{where}.rows[{i}]")
            if len(vals) != len(labels):
                raise ConfigParseError(f"expected {len(labels)} entries", f"{where}.rows[{i}]")
            parsed.append(vals)
        return {"type": "matrix", "labels": list(labels), "rows": parsed}
    window = _required(obj, "window", where)
    if isinstance(window, bool) or not isinstance(window, int) or window < 1:
        raise ConfigParseError("must be an integer >= 1", f"{where}.window")
    boundary = obj.get("boundary", Boundary.ABSORB_TOP_ZERO.value)
    try:
        Boundary(boundary)
    except ValueError:
        raise ConfigParseError(
            f"must be one of {[b.value for b in Boundary]}", f"{where}.boundary") from None
    return {"type": "lattice", "u": _number(_required(obj, "u", where), f"{where}.u"),
            "p": _number(_required(obj, "p", where), f"{where}.p"),
            "window": window, "boundary": boundary}


def _parse_payoff(obj):
    where = "$.payoff"
    kind = _variant(obj, where, _PAYOFF_KEYS)
    if kind == "table":
        return {"type": "table",
                "values": _number_list(_required(obj, "values", where), f"{where}.values")}
    if kind == "put":
        return {"type": "put", "K": _positive(_required(obj, "K", where), f"{where}.K")}
    return {"type": "identity"}


def _parse_discount(obj):
    where = "$.discount"
    if not isinstance(obj, dict):
        raise ConfigParseError("must be an object", where)
    if obj.get("type") == "table":
        _no_extra(obj, {"type", "values"}, where)
        return {"type": "table",
                "values": _number_list(_required(obj, "values", where), f"{where}.values")}
    _no_extra(obj, {"family", "params"}, where)
    family = _required(obj, "family", where)
    try:
        fam = Family(family)
    except ValueError:
        raise ConfigParseError(f"unknown family {family!r}", f"{where}.family") from None
    if fam is Family.TABLE:
        raise ConfigParseError("use {'type': 'table', 'values': [...]}", f"{where}.family")
    params = obj.get("params", {})
    if not isinstance(params, dict):
        raise ConfigParseError("must be an object", f"{where}.params")
    return {"family": fam.value,
            "params": {k: _number(v, f"{where}.params.{k}") for k, v in params.items()}}


# -- construction -------------------------------------------------------------

def _build(cfg: ProblemConfig) -> StoppingProblem:
    try:
        chain = _build_chain(cfg.chain)
    except ValidationError as exc:
        raise ConfigParseError(str(exc), "$.chain") from None
    try:
        payoff = _build_payoff(cfg.payoff, chain)
    except ValidationError as exc:
        raise ConfigParseError(str(exc), "$.payoff") from None
    try:
        d = cfg.discount
        curve = (DiscountCurve.table(d["values"]) if d.get("type") == "table"
                 else DiscountCurve(d["family"], d["params"]))
    except ValidationError as exc:
        raise ConfigParseError(str(exc), "$.discount") from None
    return StoppingProblem(chain, payoff, curve)


def _build_chain(c):
    if c["type"] == "matrix":
        return build_finite_chain(c["labels"], c["rows"])
    return build_lattice_chain(LatticeSpec(c["u"], c["p"], c["window"], Boundary(c["boundary"])))


def _build_payoff(pay, chain):
    if pay["type"] == "table":
        if len(pay["values"]) != chain.n:
            raise ValidationError(f"payoff table has {len(pay['values'])} entries for {chain.n} states")
        f = np.asarray(pay["values"], dtype=float)
    elif pay["type"] == "put":
        f = np.maximum(pay["K"] - chain.coords, 0.0)
    else:
        f = np.asarray(chain.coords, dtype=float)
    if np.any(f < 0):
        raise ValidationError("payoff must be nonnegative")
    return f
