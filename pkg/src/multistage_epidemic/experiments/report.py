"""Study results and their serialisation (JSON record plus CSV tables)."""
from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np


def jsonable(obj):
    """Plain JSON types; non-finite floats become the strings "inf", "-inf", "nan"."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return obj


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return int(v)
    return v


@dataclass
class Table:
    header: list
    rows: list

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.header)
        for row in self.rows:
            w.writerow([_cell(v) for v in row])
        return buf.getvalue()

    def as_records(self) -> list:
        return [dict(zip(self.header, (jsonable(_cell(v)) for v in row))) for row in self.rows]


@dataclass
class StudyReport:
    study_kind: str
    parameters: dict
    statistics: dict
    replica_count: int
    seeds: dict
    tables: dict = field(default_factory=dict)

    def as_record(self) -> dict:
        return jsonable({"study_kind": self.study_kind, "parameters": self.parameters,
                         "statistics": self.statistics, "replica_count": self.replica_count,
                         "seeds": self.seeds, "tables": sorted(self.tables)})

    def to_json(self) -> str:
        return json.dumps(self.as_record(), indent=2) + "\n"

    def write(self, output_dir, fmt: str = "csv") -> list:
        """Write ``report.json`` and one file per table; returns the paths written."""
        os.makedirs(output_dir, exist_ok=True)
        written = []
        path = os.path.join(output_dir, "report.json")
        with open(path, "w", newline="") as fh:
            fh.write(self.to_json())
        written.append(path)
        for name, table in sorted(self.tables.items()):
            if fmt == "csv":
                path = os.path.join(output_dir, f"{name}.csv")
                text = table.to_csv()
            else:
                path = os.path.join(output_dir, f"{name}.json")
                text = json.dumps(table.as_records(), indent=1) + "\n"
            with open(path, "w", newline="") as fh:
                fh.write(text)
            written.append(path)
        return written
