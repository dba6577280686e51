"""Flat ``name = value`` files used for twin, model, controller and summary data.

One parameter per line.  ``#`` starts a comment.  Per-supply parameters use a
bracketed key, e.g. ``f_base_mhz[0.7] = 175``.
"""

from __future__ import annotations

import re
from pathlib import Path
from typing import Iterable, Mapping

from .errors import ConfigurationError

_LINE = re.compile(r"^\s*([A-Za-z_][\w.]*)(?:\[([^\]]+)\])?\s*=\s*(.*?)\s*$")


def parse(text: str, source: str = "<string>") -> dict[str, object]:
    """Parse flat key/value text.

    Bracketed keys are collected into a nested dict keyed by the bracket
    content converted to float when possible, so ``x[0.7] = 1`` becomes
    ``{"x": {0.7: 1.0}}``.
    """
    out: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _LINE.match(line)
        if m is None:
            raise ConfigurationError(f"{source}:{lineno}: expected 'name = value', got {raw.strip()!r}")
        key, sub, value = m.group(1), m.group(2), _coerce(m.group(3))
        if sub is None:
            out[key] = value
        else:
            table = out.setdefault(key, {})
            if not isinstance(table, dict):
                raise ConfigurationError(f"{source}:{lineno}: {key} used both as scalar and table")
            table[_coerce(sub)] = value
    return out


def load(path: str | Path) -> dict[str, object]:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read {p}: {exc.strerror or exc}") from exc
    return parse(text, str(p))


def dump(values: Mapping[str, object], comments: Mapping[str, str] | None = None,
         header: Iterable[str] = ()) -> str:
    """Render a mapping back to the flat format; nested dicts become bracketed keys."""
    comments = comments or {}
    lines = [f"# {h}" for h in header]
    for key, value in values.items():
        note = comments.get(key)
        if note:
            lines.append(f"# {note}")
        if isinstance(value, Mapping):
            for sub, v in value.items():
                lines.append(f"{key}[{_fmt(sub)}] = {_fmt(v)}")
        else:
            lines.append(f"{key} = {_fmt(value)}")
    return "\n".join(lines) + "\n"


def _coerce(token: str) -> object:
    t = token.strip()
    if t.lower() in ("true", "false"):
        return t.lower() == "true"
    try:
        return int(t)
    except ValueError:
        pass
    try:
        return float(t)
    except ValueError:
        return t


def _fmt(v: object) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if hasattr(v, "value") and not isinstance(v, (int, str)):
        return str(v.value)
    return str(v)


def require(values: Mapping[str, object], key: str, kind: type = float):
    if key not in values:
        raise ConfigurationError(f"missing required key {key!r}")
    try:
        return kind(values[key])
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"key {key!r}: cannot convert {values[key]!r} to {kind.__name__}") from exc
