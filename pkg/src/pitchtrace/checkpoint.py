"""Text checkpoints: a JSON metadata header plus shape-tagged tensors.

::

    # pitchtrace checkpoint v1
    # kind: bc
    # meta: {"context_max": 50, ...}
    tensor net.0.weight 128,2300
    0.0123 -0.5 ...
    tensor net.0.bias 128
    ...

Values are written with ``repr`` so floats round-trip exactly.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from pitchtrace.errors import ParseError

MAGIC = "# pitchtrace checkpoint v1"


def write_checkpoint(path, kind: str, meta: dict, tensors: dict[str, np.ndarray]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [MAGIC, f"# kind: {kind}", f"# meta: {json.dumps(meta, sort_keys=True)}"]
    for name, arr in tensors.items():
        arr = np.asarray(arr, dtype=np.float64)
        shape = ",".join(str(d) for d in arr.shape) or "scalar"
        lines.append(f"tensor {name} {shape}")
        lines.append(" ".join(repr(float(v)) for v in arr.ravel()))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def read_checkpoint(path) -> tuple[str, dict, dict[str, np.ndarray]]:
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if len(lines) < 3 or lines[0] != MAGIC:
        raise ParseError(1, "not a pitchtrace checkpoint", path)
    if not lines[1].startswith("# kind: "):
        raise ParseError(2, "missing kind header", path)
    if not lines[2].startswith("# meta: "):
        raise ParseError(3, "missing meta header", path)
    kind = lines[1][len("# kind: "):].strip()
    try:
        meta = json.loads(lines[2][len("# meta: "):])
    except json.JSONDecodeError as exc:
        raise ParseError(3, f"bad metadata JSON: {exc}", path) from None
    tensors: dict[str, np.ndarray] = {}
    i = 3
    while i < len(lines):
        head = lines[i].split()
        if not head:
            i += 1
            continue
        if len(head) != 3 or head[0] != "tensor":
            raise ParseError(i + 1, f"expected 'tensor <name> <shape>', got {lines[i]!r}", path)
        name, shape_txt = head[1], head[2]
        try:
            shape = () if shape_txt == "scalar" else tuple(int(d) for d in shape_txt.split(","))
        except ValueError:
            raise ParseError(i + 1, f"bad shape {shape_txt!r}", path) from None
        if i + 1 >= len(lines):
            raise ParseError(i + 2, f"missing values for tensor {name}", path)
        try:
            values = np.array([float(v) for v in lines[i + 1].split()], dtype=np.float64)
        except ValueError:
            raise ParseError(i + 2, f"non-numeric value in tensor {name}", path) from None
        if values.size != int(np.prod(shape)):
            raise ParseError(i + 2, f"tensor {name} has {values.size} values, shape {shape} needs {int(np.prod(shape))}", path)
        tensors[name] = values.reshape(shape)
        i += 2
    return kind, meta, tensors
