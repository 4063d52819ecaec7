"""Figure specs: what to read, what kind of figure, where to write it."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

KINDS = ("curves", "hitting", "correlation", "bounds")


class FigSpecError(ValueError):
    """Invalid figure spec or input data; message names the problem field."""


@dataclass(frozen=True)
class FigureSpec:
    inputs: tuple[str, ...]       # CSV paths
    kind: str
    output: str                   # image path
    metric: str = "val_loss"      # curves: which metric becomes the y axis
    group_by: str = "experiment"  # curves: column that defines a series
    title: str = ""
    xlabel: str = ""
    ylabel: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise FigSpecError(f"kind: unknown figure kind {self.kind!r}; "
                               f"choose from {KINDS}")
        if not self.inputs:
            raise FigSpecError("inputs: need at least one CSV path")
        if not self.output:
            raise FigSpecError("output: required")

    @classmethod
    def from_dict(cls, d: dict) -> "FigureSpec":
        if not isinstance(d, dict):
            raise FigSpecError("spec: expected a JSON object")
        known = {"inputs", "kind", "output", "metric", "group_by",
                 "title", "xlabel", "ylabel"}
        unknown = set(d) - known
        if unknown:
            raise FigSpecError(f"spec: unknown fields {sorted(unknown)}")
        for name in ("inputs", "kind", "output"):
            if name not in d:
                raise FigSpecError(f"{name}: required")
        inputs = d["inputs"]
        if isinstance(inputs, str):
            inputs = [inputs]
        return cls(inputs=tuple(inputs), kind=d["kind"], output=d["output"],
                   metric=d.get("metric", "val_loss"),
                   group_by=d.get("group_by", "experiment"),
                   title=d.get("title", ""), xlabel=d.get("xlabel", ""),
                   ylabel=d.get("ylabel", ""))

    @classmethod
    def load(cls, path: str | Path) -> "FigureSpec":
        try:
            raw = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise FigSpecError(f"spec: cannot read {path}: {e}") from e
        return cls.from_dict(raw)
