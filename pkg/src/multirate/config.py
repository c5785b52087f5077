"""Problem-definition files and inline parameter overrides.

A problem file is YAML.  Linear ODE example::

    kind: ode
    name: my-lin
    A_SS: [[-1.0]]
    A_SF: [[0.1]]
    A_FS: [[0.2]]
    A_FF: [[-10.0]]
    y_slow0: [1.0]
    y_fast0: [1.0]
    t0: 0.0
    t_end: 1.0

``kind: dae`` additionally accepts ``B_XY`` (f_X w.r.t. z_Y), ``C_XY`` and
``D_XY`` (constraint ``0 = C y + D z``) for X, Y in {S, F}.  A file may
instead name a catalog entry with ``problem: <id>`` plus an optional
``params`` mapping.
"""

from __future__ import annotations

import os
from typing import Optional

import numpy as np
import yaml

from .errors import ConfigError, MultirateError, ValidationError
from .problems import CatalogEntry, _dae_reference, _expm_self_check, _ode_reference, get_problem, linear_dae, linear_ode

BLOCK_KEYS = tuple(f"{p}_{r}{c}" for p in "ABCD" for r in "SF" for c in "SF")
ODE_KEYS = {"kind", "name", "y_slow0", "y_fast0", "t0", "t_end", "A_SS", "A_SF", "A_FS", "A_FF"}
DAE_KEYS = ODE_KEYS | set(BLOCK_KEYS) | {"dim_zslow", "dim_zfast"}
CATALOG_KEYS = {"problem", "params"}


def _key_lines(text: str) -> dict:
    """Map top-level keys to 1-based source lines."""
    node = yaml.compose(text)
    if node is None or not isinstance(node, yaml.MappingNode):
        return {}
    return {k.value: k.start_mark.line + 1 for k, _ in node.value}


def _where(lines: dict, key: str, source: str) -> str:
    line = lines.get(key)
    return f"{source}:{line}: field {key!r}" if line else f"{source}: field {key!r}"


def parse_overrides(text: str) -> dict:
    """Parse ``key=value,key=value`` into a dict of floats (or strings)."""
    out = {}
    for item in filter(None, (s.strip() for s in text.split(","))):
        key, sep, val = item.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"override {item!r} is not of the form key=value")
        try:
            out[key.strip()] = float(val)
        except ValueError:
            out[key.strip()] = val.strip()
    return out


def _array(value, key, where, ndim):
    try:
        arr = np.asarray(value, dtype=np.float64)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: expected numeric {'matrix' if ndim == 2 else 'vector'}") from None
    if ndim == 2:
        arr = np.atleast_2d(arr)
    else:
        arr = np.atleast_1d(arr)
    if arr.ndim != ndim:
        raise ConfigError(f"{where}: expected a {ndim}-d array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ConfigError(f"{where}: non-finite entries")
    return arr


def load_config_text(text: str, source: str = "<config>") -> CatalogEntry:
    """Build a catalog entry from YAML text; errors cite line and field."""
    try:
        data = yaml.safe_load(text)
        lines = _key_lines(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        loc = f"{source}:{mark.line + 1}" if mark else source
        raise ConfigError(f"{loc}: malformed YAML ({getattr(exc, 'problem', exc)})") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: top level must be a mapping")

    if "problem" in data:
        unknown = sorted(set(data) - CATALOG_KEYS)
        if unknown:
            raise ConfigError(f"{_where(lines, unknown[0], source)}: unknown field")
        params = data.get("params") or {}
        if not isinstance(params, dict):
            raise ConfigError(f"{_where(lines, 'params', source)}: expected a mapping")
        return get_problem(str(data["problem"]), **params)

    kind = str(data.get("kind", "ode")).lower()
    if kind not in ("ode", "dae"):
        raise ConfigError(f"{_where(lines, 'kind', source)}: must be 'ode' or 'dae', got {kind!r}")
    allowed = ODE_KEYS if kind == "ode" else DAE_KEYS
    problems = [f"{_where(lines, k, source)}: unknown field" for k in data if k not in allowed]
    for req in ("y_slow0", "y_fast0", "t_end"):
        if req not in data:
            problems.append(f"{source}: missing required field {req!r}")
    if problems:
        raise ConfigError(problems)

    vec = {k: _array(data[k], k, _where(lines, k, source), 1) for k in ("y_slow0", "y_fast0")}
    mats = {k: _array(data[k], k, _where(lines, k, source), 2) for k in BLOCK_KEYS if data.get(k) is not None}
    try:
        t0 = float(data.get("t0", 0.0))
        t_end = float(data["t_end"])
    except (TypeError, ValueError):
        raise ConfigError(f"{_where(lines, 't_end', source)}: horizon must be numeric") from None
    name = str(data.get("name", os.path.splitext(os.path.basename(source))[0] or "config"))

    try:
        if kind == "ode":
            problem, lin = linear_ode(mats.get("A_SS"), mats.get("A_SF"), mats.get("A_FS"), mats.get("A_FF"),
                                      vec["y_slow0"], vec["y_fast0"], t0, t_end, name)
            ref, check, mat = _ode_reference(problem, lin), _expm_self_check, lin.full
        else:
            problem, lin = linear_dae(mats, vec["y_slow0"], vec["y_fast0"], t0, t_end, name,
                                      data.get("dim_zslow"), data.get("dim_zfast"))
            ref, check, mat = _dae_reference(problem, lin), _expm_self_check, lin.reduced()
    except ValidationError as exc:
        field = next((k for k in BLOCK_KEYS if k in str(exc)), None)
        prefix = _where(lines, field, source) if field else source
        raise ConfigError(f"{prefix}: {exc}") from None
    w0 = np.concatenate([problem.y_slow0, problem.y_fast0])
    return CatalogEntry(name, problem, ref, f"linear {kind} from {source}", {"data": lin},
                        check(mat, w0, t_end - t0))


def load_config(path: str) -> CatalogEntry:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc.strerror}") from None
    return load_config_text(text, path)


def resolve_problem(problem_id: Optional[str], config: Optional[str], t_end: Optional[float] = None) -> CatalogEntry:
    """Combine ``--problem`` and ``--config``.

    ``config`` is either a file path or inline ``key=value`` overrides for the
    catalog factory named by ``problem_id``.
    """
    params = {}
    entry = None
    if config:
        if os.path.exists(config) or (not problem_id and "=" not in config):
            if problem_id:
                raise ConfigError("give either --problem or a config file, not both")
            entry = load_config(config)
        else:
            params = parse_overrides(config)
    if entry is None:
        if not problem_id:
            raise ConfigError("no problem given (use --problem or --config <file>)")
        if t_end is not None:
            params["t_end"] = t_end
        try:
            entry = get_problem(problem_id, **params)
        except MultirateError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad parameters for {problem_id}: {exc}") from None
        return entry
    if t_end is not None:
        raise ConfigError("--t-end cannot be combined with a config file; set t_end in the file")
    return entry
