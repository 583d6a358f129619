"""
Result tables and plot-data files.

A TransformTable is a pandas frame of (quantity, t, probe, finite_t_value,
limit_value, abs_error) rows plus a metadata header. Files are written with
17 significant digits and sorted header keys, so a fixed input always gives
the same bytes.
"""
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, Union

import pandas as pd

from config import settings

COLUMNS = ["quantity", "t", "probe", "finite_t_value", "limit_value", "abs_error"]
FLOAT_FORMAT = "%.17g"
PLOT_STYLES = ("error-vs-t", "cdf-overlay")


def _empty_frame() -> pd.DataFrame:
    return pd.DataFrame({name: pd.Series(dtype=object if name == "quantity" else float) for name in COLUMNS})


@dataclass
class TransformTable:
    name: str
    metadata: Dict[str, object] = field(default_factory=dict)
    frame: pd.DataFrame = field(default_factory=_empty_frame)

    def __post_init__(self):
        self.metadata.setdefault("artifact_version", settings.ARTIFACT_VERSION)
        self._pending = []

    def add_row(self, quantity: str, t: float, probe: float, finite_t_value: float, limit_value: float):
        self._pending.append({
            "quantity": quantity,
            "t": float(t),
            "probe": float(probe),
            "finite_t_value": float(finite_t_value),
            "limit_value": float(limit_value),
            "abs_error": abs(float(finite_t_value) - float(limit_value)),
        })

    def extend(self, rows: Iterable[dict]):
        for row in rows:
            self.add_row(**row)

    def _flush(self):
        if self._pending:
            added = pd.DataFrame(self._pending, columns=COLUMNS)
            self.frame = added if self.frame.empty else pd.concat([self.frame, added], ignore_index=True)
            self._pending = []

    @property
    def rows(self) -> pd.DataFrame:
        self._flush()
        return self.frame

    def __len__(self) -> int:
        return len(self.rows)

    def select(self, quantity: str) -> pd.DataFrame:
        rows = self.rows
        return rows[rows["quantity"] == quantity]

    def max_error_by_t(self, quantity: str = None) -> pd.Series:
        rows = self.rows if quantity is None else self.select(quantity)
        return rows.groupby("t", sort=True)["abs_error"].max()

    def max_error(self, quantity: str = None) -> float:
        by_t = self.max_error_by_t(quantity)
        return float(by_t.iloc[-1]) if len(by_t) else math.nan

    def write_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        header = [f"# table: {self.name}"]
        for key in sorted(self.metadata):
            value = self.metadata[key]
            if isinstance(value, (dict, list, tuple)):
                value = json.dumps(value, sort_keys=True, separators=(",", ":"))
            header.append(f"# {key}: {value}")
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write("\n".join(header) + "\n")
            self.rows.to_csv(f, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
        return path

    @classmethod
    def read_csv(cls, path: Union[str, Path]) -> "TransformTable":
        path = Path(path)
        name, metadata = path.stem, {}
        with open(path, encoding="utf-8") as f:
            for line in f:
                if not line.startswith("#"):
                    break
                key, _, value = line[1:].strip().partition(": ")
                if key == "table":
                    name = value
                else:
                    metadata[key] = value
        frame = pd.read_csv(path, comment="#")
        return cls(name=name, metadata=metadata, frame=frame)


def emit_plotdata(table: TransformTable, style: str, path: Union[str, Path], quantity: str = None) -> Path:
    """
    Whitespace-delimited plot data with a comment header.

    error-vs-t: t and the largest abs_error at that t.
    cdf-overlay: y, finite-t (or empirical) CDF and reference CDF at the largest t.
    """
    if style not in PLOT_STYLES:
        raise ValueError(f"unknown plot style '{style}' (known: {', '.join(PLOT_STYLES)})")
    rows = table.rows if quantity is None else table.select(quantity)
    if rows.empty:
        raise ValueError(f"table '{table.name}' has no rows to plot")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    lines = [f"# {style}: {table.name}"]
    if "config_hash" in table.metadata:
        lines.append(f"# config_hash: {table.metadata['config_hash']}")
    if style == "error-vs-t":
        lines.append("# t max_abs_error")
        by_t = rows.groupby("t", sort=True)["abs_error"].max()
        lines += [f"{t:.17g} {err:.17g}" for t, err in by_t.items()]
    else:
        last = rows[rows["t"] == rows["t"].max()].sort_values("probe")
        lines.append(f"# y finite_t reference (t = {rows['t'].max():.17g})")
        lines += [f"{r.probe:.17g} {r.finite_t_value:.17g} {r.limit_value:.17g}" for r in last.itertuples()]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path
