"""Model configuration files (JSON or TOML).

Schema (states and targets are 1-based in files, 0-based in code):

    {
      "states": 2,
      "discount": {"weights": [0.5, 0.5], "rates": [1.0, 2.0]},
      "payoff": {
        "1": {"constant": 0.0,
              "terms": {"2": {"domain": [0.0, null],
                              "knots": [],
                              "coeffs": [[0.0, 0.0, -1.0]]}}},
        "2": {"terms": {"1": {"domain": [0.0, null],
                              "knots": [0.5833333333333334],
                              "coeffs": [[1.3402777777777777, 0.8333333333333334],
                                         [1.0, 2.0, -1.0]]}}}
      },
      "boxes": {"1": {"2": [0.0, 2.0]}, "2": {"1": [0.0, 2.0]}}
    }

Coefficients are ascending powers in the global variable; ``knots`` are
the interior breakpoints between consecutive pieces.  An infinite upper
endpoint is JSON ``null`` or the string ``"inf"`` (TOML has no null).
Parsing errors cite the offending field path; JSON/TOML syntax errors
carry line information from the underlying parser.
"""

from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path

import numpy as np

from .model import (
    AdmissibleRowSet,
    ExponentialMixture,
    ModelError,
    ModelSpec,
    PiecewisePolynomial,
    RowPayoff,
    StateSpace,
)

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover - depends on interpreter
    import tomli as tomllib


class ConfigError(ValueError):
    """Bad model configuration; the message cites the field path."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.field_path = path


def _expect(cond: bool, path: str, message: str):
    if not cond:
        raise ConfigError(path, message)


def _number(value, path: str, allow_inf: bool = False) -> float:
    if allow_inf and (value is None or value in ("inf", "Infinity", "+inf")):
        return math.inf
    _expect(isinstance(value, (int, float)) and not isinstance(value, bool), path,
            f"expected a number, got {value!r}")
    v = float(value)
    _expect(allow_inf or math.isfinite(v), path, "must be finite")
    return v


def _parse_piece(data, path: str) -> PiecewisePolynomial:
    _expect(isinstance(data, dict), path, "expected a table")
    unknown = set(data) - {"domain", "knots", "coeffs"}
    _expect(not unknown, path, f"unknown fields {sorted(unknown)}")
    dom = data.get("domain", [0.0, None])
    _expect(isinstance(dom, (list, tuple)) and len(dom) == 2, f"{path}.domain",
            "expected [lo, hi]")
    lo = _number(dom[0], f"{path}.domain[0]")
    hi = _number(dom[1], f"{path}.domain[1]", allow_inf=True)
    knots = data.get("knots", [])
    _expect(isinstance(knots, (list, tuple)), f"{path}.knots", "expected a list")
    knots = [_number(k, f"{path}.knots[{n}]") for n, k in enumerate(knots)]
    coeffs = data.get("coeffs")
    _expect(isinstance(coeffs, (list, tuple)) and coeffs, f"{path}.coeffs",
            "expected a non-empty list of coefficient lists")
    _expect(len(coeffs) == len(knots) + 1, f"{path}.coeffs",
            f"{len(coeffs)} pieces need {len(coeffs) - 1} knots, got {len(knots)}")
    rows = []
    for n, c in enumerate(coeffs):
        _expect(isinstance(c, (list, tuple)) and c, f"{path}.coeffs[{n}]",
                "expected a non-empty list of numbers")
        rows.append(np.array(
            [_number(v, f"{path}.coeffs[{n}][{m}]") for m, v in enumerate(c)]
        ))
    breaks = np.array([lo, *knots, hi])
    try:
        return PiecewisePolynomial(breaks, tuple(rows))
    except ModelError as exc:
        raise ConfigError(path, str(exc)) from exc


def _state_key(key, n: int, path: str) -> int:
    try:
        idx = int(key)
    except (TypeError, ValueError):
        raise ConfigError(path, f"state keys must be integers, got {key!r}") from None
    _expect(1 <= idx <= n, path, f"state {idx} outside 1..{n}")
    return idx - 1


def parse_model(data: dict, source: str = "<config>") -> ModelSpec:
    """Build a ModelSpec from parsed configuration data."""
    _expect(isinstance(data, dict), "$", "top level must be a table")
    unknown = set(data) - {"states", "discount", "payoff", "boxes"}
    _expect(not unknown, "$", f"unknown fields {sorted(unknown)}")
    for key in ("states", "discount", "payoff", "boxes"):
        _expect(key in data, key, "missing required field")
    n = data["states"]
    _expect(isinstance(n, int) and not isinstance(n, bool) and n >= 1,
            "states", f"expected a positive integer, got {n!r}")

    disc = data["discount"]
    _expect(isinstance(disc, dict), "discount", "expected a table")
    for key in ("weights", "rates"):
        _expect(key in disc, f"discount.{key}", "missing required field")
        _expect(isinstance(disc[key], (list, tuple)) and disc[key],
                f"discount.{key}", "expected a non-empty list")
    weights = [_number(w, f"discount.weights[{k}]") for k, w in enumerate(disc["weights"])]
    rates = [_number(r, f"discount.rates[{k}]") for k, r in enumerate(disc["rates"])]
    try:
        discount = ExponentialMixture(np.array(weights), np.array(rates))
    except ModelError as exc:
        raise ConfigError("discount", str(exc)) from exc

    payoff_data = data["payoff"]
    _expect(isinstance(payoff_data, dict), "payoff", "expected a table keyed by state")
    payoffs: list[RowPayoff] = []
    for i in range(n):
        entry = None
        for key, val in payoff_data.items():
            if _state_key(key, n, f"payoff.{key}") == i:
                entry = (key, val)
        if entry is None:
            payoffs.append(RowPayoff(i, {}))
            continue
        key, val = entry
        path = f"payoff.{key}"
        _expect(isinstance(val, dict), path, "expected a table")
        unknown = set(val) - {"constant", "terms"}
        _expect(not unknown, path, f"unknown fields {sorted(unknown)}")
        constant = _number(val.get("constant", 0.0), f"{path}.constant")
        terms = {}
        for tkey, tval in val.get("terms", {}).items():
            j = _state_key(tkey, n, f"{path}.terms.{tkey}")
            _expect(j != i, f"{path}.terms.{tkey}", "payoff term targets j != i")
            terms[j] = _parse_piece(tval, f"{path}.terms.{tkey}")
        payoffs.append(RowPayoff(i, terms, constant))

    boxes_data = data["boxes"]
    _expect(isinstance(boxes_data, dict), "boxes", "expected a table keyed by state")
    boxes: list[AdmissibleRowSet] = []
    for i in range(n):
        entry = None
        for key, val in boxes_data.items():
            if _state_key(key, n, f"boxes.{key}") == i:
                entry = (key, val)
        _expect(entry is not None, f"boxes.{i + 1}", "missing row box")
        key, val = entry
        path = f"boxes.{key}"
        _expect(isinstance(val, dict), path, "expected a table keyed by target state")
        lo, hi = {}, {}
        for tkey, bounds in val.items():
            j = _state_key(tkey, n, f"{path}.{tkey}")
            _expect(isinstance(bounds, (list, tuple)) and len(bounds) == 2,
                    f"{path}.{tkey}", "expected [lo, hi]")
            lo[j] = _number(bounds[0], f"{path}.{tkey}[0]")
            hi[j] = _number(bounds[1], f"{path}.{tkey}[1]", allow_inf=True)
        try:
            boxes.append(AdmissibleRowSet(i, lo, hi))
        except ModelError as exc:
            raise ConfigError(path, str(exc)) from exc

    try:
        return ModelSpec(StateSpace(n), discount, tuple(payoffs), tuple(boxes))
    except ModelError as exc:
        raise ConfigError("$", f"{exc} (in {source})") from exc


def load_model(path: str | Path) -> tuple[ModelSpec, dict]:
    """Parse a JSON or TOML model file; returns the model and the raw
    configuration data (used for digests and reports)."""
    p = Path(path)
    text = p.read_bytes()
    if p.suffix.lower() == ".toml":
        try:
            data = tomllib.loads(text.decode("utf-8"))
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError("$", f"TOML syntax error in {p}: {exc}") from exc
    else:
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(
                "$", f"JSON syntax error in {p} at line {exc.lineno}, "
                f"column {exc.colno}: {exc.msg}"
            ) from exc
    return parse_model(data, source=str(p)), data


def model_digest(data: dict) -> str:
    """Stable digest of a configuration for report provenance."""
    blob = json.dumps(data, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]
