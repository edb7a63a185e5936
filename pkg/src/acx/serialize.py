"""Canonical JSON emission: sorted keys, floats at 17 significant digits.

Reports written through this module are byte-identical across runs for
identical inputs; run timings and timestamps belong in the separate
metadata block, never in the report payload.
"""

from __future__ import annotations

import time

import numpy as np


def _fmt(value) -> str:
    if value is None:
        return "null"
    if isinstance(value, bool) or isinstance(value, np.bool_):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        x = float(value)
        if x != x:
            return '"nan"'
        if x in (float("inf"), float("-inf")):
            return f'"{x}"'
        return f"{x:.17g}"
    if isinstance(value, str):
        return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(value, dict):
        items = ", ".join(f'{_fmt(str(k))}: {_fmt(v)}'
                          for k, v in sorted(value.items()))
        return "{" + items + "}"
    if isinstance(value, (list, tuple, np.ndarray)):
        seq = value.tolist() if isinstance(value, np.ndarray) else value
        return "[" + ", ".join(_fmt(v) for v in seq) + "]"
    raise TypeError(f"cannot serialize {type(value)!r}")


def dumps_canonical(payload: dict) -> str:
    return _fmt(payload) + "\n"


def write_report(path, payload: dict, meta: dict | None = None) -> None:
    with open(path, "w") as fh:
        fh.write(dumps_canonical(payload))
    if meta is not None:
        meta = dict(meta)
        meta["timestamp"] = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
        with open(str(path) + ".meta", "w") as fh:
            fh.write(dumps_canonical(meta))
