"""Run configuration: strict JSON schemas and object construction.

One JSON document drives each CLI command.  Validation is eager and
strict (unknown keys are rejected, types checked) so that a typo fails
before any computation starts, with a message naming the offending key.
"""

from __future__ import annotations

import csv
import json
import os
import tempfile

import numpy as np

from .dictionary import GridSpec, default_margin
from .errors import ValidationError
from .operators import operator_from_json
from .sensing import Sampling, plan_from_json
from .tv import SolverConfig


def load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ValidationError(f"config file not found: {path}") from None
    except json.JSONDecodeError as err:
        raise ValidationError(f"invalid JSON in {path}: {err}") from None


def _check_keys(obj, where, required, optional=()):
    if not isinstance(obj, dict):
        raise ValidationError(f"{where} must be a JSON object")
    allowed = set(required) | set(optional)
    unknown = set(obj) - allowed
    if unknown:
        raise ValidationError(f"{where}: unknown keys {sorted(unknown)}")
    missing = set(required) - set(obj)
    if missing:
        raise ValidationError(f"{where}: missing keys {sorted(missing)}")


def _number(obj, key, where, positive=False):
    v = obj.get(key)
    if not isinstance(v, (int, float)) or isinstance(v, bool):
        raise ValidationError(f"{where}.{key} must be a number")
    if positive and not v > 0:
        raise ValidationError(f"{where}.{key} must be positive")
    return float(v)


def parse_operators(obj):
    _check_keys(obj, "operators", required=("trend", "seasonal"))
    return (operator_from_json(obj["trend"], "trend"),
            operator_from_json(obj["seasonal"], "seasonal"))


def parse_grid(obj):
    _check_keys(obj, "grid", required=("h_t", "window", "n_s"),
                optional=("margin",))
    h_t = _number(obj, "h_t", "grid", positive=True)
    window = obj["window"]
    if (not isinstance(window, list) or len(window) != 2
            or not all(isinstance(v, (int, float)) for v in window)):
        raise ValidationError("grid.window must be [lo, hi]")
    n_s = obj["n_s"]
    if not isinstance(n_s, int) or n_s < 1:
        raise ValidationError("grid.n_s must be a positive integer")
    margin = obj.get("margin", default_margin(h_t))
    if not isinstance(margin, int) or margin < 0:
        raise ValidationError("grid.margin must be a nonnegative integer")
    return GridSpec(h_t=h_t, t_lo=float(window[0]), t_hi=float(window[1]),
                    margin=margin, n_s=n_s)


def parse_solver(obj, lambda_t, lambda_s):
    if obj is None:
        return SolverConfig(lambda_t=lambda_t, lambda_s=lambda_s)
    _check_keys(obj, "solver", required=(),
                optional=("max_iters", "tol_obj", "tol_kkt", "step_rule",
                          "restart", "window", "check_every"))
    kwargs = {"lambda_t": lambda_t, "lambda_s": lambda_s}
    if "max_iters" in obj:
        if not isinstance(obj["max_iters"], int) or obj["max_iters"] < 1:
            raise ValidationError("solver.max_iters must be a positive integer")
        kwargs["max_iters"] = obj["max_iters"]
    for key in ("tol_obj", "tol_kkt"):
        if key in obj:
            kwargs[key] = _number(obj, key, "solver", positive=True)
    if "step_rule" in obj:
        kwargs["step_rule"] = obj["step_rule"]
    if "restart" in obj:
        if not isinstance(obj["restart"], bool):
            raise ValidationError("solver.restart must be a boolean")
        kwargs["restart"] = obj["restart"]
    for key in ("window", "check_every"):
        if key in obj:
            if not isinstance(obj[key], int) or obj[key] < 1:
                raise ValidationError(f"solver.{key} must be a positive integer")
            kwargs[key] = obj[key]
    return SolverConfig(**kwargs)


def read_data_csv(path):
    """Sampling plan and observations from a 't,y' CSV."""
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except FileNotFoundError:
        raise ValidationError(f"data file not found: {path}") from None
    if not rows:
        raise ValidationError(f"data file is empty: {path}")
    header = [c.strip() for c in rows[0]]
    if header != ["t", "y"]:
        raise ValidationError(f"data file {path} must have header 't,y'")
    if len(rows) < 2:
        raise ValidationError(f"data file has no rows: {path}")
    try:
        t = np.array([float(r[0]) for r in rows[1:]])
        y = np.array([float(r[1]) for r in rows[1:]])
    except (ValueError, IndexError):
        raise ValidationError(f"malformed row in data file {path}") from None
    return [Sampling(float(ti)) for ti in t], y


def parse_plan_and_y(cfg, where="config", base_dir="."):
    """Either a 'data' CSV path or an inline 'plan' plus 'y' vector."""
    has_data = "data" in cfg
    has_plan = "plan" in cfg
    if has_data == has_plan:
        raise ValidationError(f"{where}: provide exactly one of 'data' or 'plan'")
    if has_data:
        if not isinstance(cfg["data"], str):
            raise ValidationError(f"{where}.data must be a file path")
        path = cfg["data"]
        if not os.path.isabs(path):
            path = os.path.join(base_dir, path)
        return read_data_csv(path)
    plan = plan_from_json(cfg["plan"])
    if "y" not in cfg:
        raise ValidationError(f"{where}: inline 'plan' requires a 'y' vector")
    y = cfg["y"]
    if (not isinstance(y, list) or len(y) != len(plan)
            or not all(isinstance(v, (int, float)) for v in y)):
        raise ValidationError(f"{where}.y must be a number list matching the plan")
    return plan, np.asarray(y, dtype=float)


def write_atomic(path, content: str) -> None:
    """Write via a temp file in the same directory, then rename."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(content)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
