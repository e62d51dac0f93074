"""Text format for network parameters.

::

    freeway-dqn-params 1
    architecture PLAIN
    stack layers 30x128:RELU 128x128:RELU 128x5:LINEAR
    param layers.0.W 128 30 <values>
    param layers.0.b 128 1 <values>
    ...
    end

Values are written with 17 significant digits, which round-trips every
float64 exactly. The ``end`` line makes truncation detectable.
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from ..errors import ArchitectureMismatchError, MalformedFileError, VersionMismatchError
from ..nn import STACKS, Activation, Architecture, LayerSpec, QNetworkParams

FORMAT_NAME = "freeway-dqn-params"
FORMAT_VERSION = 1


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def dumps_params(net: QNetworkParams) -> str:
    lines = [f"{FORMAT_NAME} {FORMAT_VERSION}", f"architecture {net.architecture.value}"]
    for name in net.stack_names:
        dims = " ".join(f"{s.in_dim}x{s.out_dim}:{s.activation.value}" for s in net.specs[name])
        lines.append(f"stack {name} {dims}")
    for name, arr in net.arrays():
        rows, cols = (arr.shape[0], arr.shape[1]) if arr.ndim == 2 else (arr.shape[0], 1)
        lines.append(f"param {name} {rows} {cols} " + " ".join(_fmt(x) for x in arr.reshape(-1)))
    lines.append("end")
    return "\n".join(lines) + "\n"


def save_params(net: QNetworkParams, path) -> None:
    """Write atomically: a partially written file never replaces a good one."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(dumps_params(net))
    os.replace(tmp, path)


def _parse_layer(token: str, lineno: int) -> LayerSpec:
    try:
        dims, act = token.split(":")
        a, b = dims.split("x")
        return LayerSpec(int(a), int(b), Activation(act))
    except (ValueError, KeyError) as exc:
        raise MalformedFileError(f"bad layer descriptor {token!r}", lineno) from exc


def loads_params(text: str, architecture=None, expected: QNetworkParams | None = None) -> QNetworkParams:
    """Parse a parameter file.

    ``architecture`` and/or ``expected`` constrain what is accepted; a
    mismatch raises ``ArchitectureMismatchError`` naming both shapes.
    """
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()

    def line(i):
        if i >= len(lines):
            raise MalformedFileError("unexpected end of file", i + 1)
        return lines[i].split(" ")

    head = line(0)
    if len(head) != 2 or head[0] != FORMAT_NAME:
        raise MalformedFileError(f"not a {FORMAT_NAME} file", 1)
    if head[1] != str(FORMAT_VERSION):
        raise VersionMismatchError(f"format version {head[1]!r}, this reader handles {FORMAT_VERSION}", 1)

    arch_line = line(1)
    if len(arch_line) != 2 or arch_line[0] != "architecture":
        raise MalformedFileError("expected 'architecture <PLAIN|DUELING>'", 2)
    try:
        arch = Architecture(arch_line[1])
    except ValueError:
        raise MalformedFileError(f"unknown architecture {arch_line[1]!r}", 2) from None
    wanted = expected.architecture if expected is not None else architecture
    if wanted is not None and Architecture(wanted) is not arch:
        raise ArchitectureMismatchError(f"file holds a {arch.value} network, expected {Architecture(wanted).value}", 2)

    i = 2
    specs = {}
    for name in STACKS[arch]:
        parts = line(i)
        if len(parts) < 3 or parts[0] != "stack" or parts[1] != name:
            raise MalformedFileError(f"expected 'stack {name} ...'", i + 1)
        specs[name] = [_parse_layer(tok, i + 1) for tok in parts[2:]]
        i += 1

    weights = {n: [] for n in specs}
    biases = {n: [] for n in specs}
    for name in STACKS[arch]:
        for li, spec in enumerate(specs[name]):
            for kind, shape in (("W", (spec.out_dim, spec.in_dim)), ("b", (spec.out_dim, 1))):
                parts = line(i)
                label = f"{name}.{li}.{kind}"
                if len(parts) < 4 or parts[0] != "param" or parts[1] != label:
                    raise MalformedFileError(f"expected 'param {label} ...'", i + 1)
                try:
                    rows, cols = int(parts[2]), int(parts[3])
                    values = np.array([float(v) for v in parts[4:]], dtype=np.float64)
                except ValueError as exc:
                    raise MalformedFileError(f"bad number in {label}: {exc}", i + 1) from None
                if (rows, cols) != shape or values.size != rows * cols:
                    raise MalformedFileError(
                        f"{label}: declared {rows}x{cols} with {values.size} values, layer needs {shape[0]}x{shape[1]}",
                        i + 1)
                if not np.all(np.isfinite(values)):
                    raise MalformedFileError(f"{label}: non-finite value", i + 1)
                (weights if kind == "W" else biases)[name].append(
                    values.reshape(shape) if kind == "W" else values)
                i += 1
    if line(i) != ["end"]:
        raise MalformedFileError("expected 'end'", i + 1)
    if i + 1 != len(lines):
        raise MalformedFileError("trailing content after 'end'", i + 2)

    try:
        net = QNetworkParams(arch, specs, weights, biases)
    except ValueError as exc:
        raise MalformedFileError(str(exc), 3) from exc
    if expected is not None and net.descriptor() != expected.descriptor():
        raise ArchitectureMismatchError(f"file holds {net.descriptor()}, expected {expected.descriptor()}", 3)
    return net


def load_params(path, architecture=None, expected: QNetworkParams | None = None) -> QNetworkParams:
    return loads_params(Path(path).read_text(), architecture, expected)
