"""JSON and CSV serialization of points, loops, paths and reports.

Complex numbers are stored as ``[re, im]`` pairs; Python's float repr makes
the JSON round trip bit-exact.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .errors import DomainError
from .kahler import ChartPoint, KahlerModel, make_model
from .loops import Loop, LoopGrid


def complex_to_json(arr):
    arr = np.asarray(arr, dtype=complex)
    return np.stack([arr.real, arr.imag], axis=-1).tolist()


def complex_from_json(data):
    arr = np.asarray(data, dtype=float)
    if arr.shape[-1] != 2:
        raise DomainError("complex values must be [re, im] pairs")
    return arr[..., 0] + 1j * arr[..., 1]


def point_to_json(p: ChartPoint) -> dict:
    return {"chart_id": p.chart_id, "coords": complex_to_json(p.coords)}


def point_from_json(data: dict) -> ChartPoint:
    return ChartPoint(int(data["chart_id"]), complex_from_json(data["coords"]))


def model_from_json(data: dict) -> KahlerModel:
    return make_model(data["model"], data.get("dim"))


def loop_to_json(g: Loop) -> dict:
    return {
        "model": g.model.name,
        "dim": g.model.n,
        "M": g.grid.M,
        "measure": g.grid.measure,
        "offset": g.grid.offset,
        "chart_ids": g.chart_ids.tolist(),
        "coords": complex_to_json(g.coords),
    }


def loop_from_json(data: dict, model: KahlerModel | None = None) -> Loop:
    model = model or model_from_json(data)
    grid = LoopGrid(int(data["M"]), data.get("measure", "normalized"), float(data.get("offset", 0.0)))
    coords = complex_from_json(data["coords"]).reshape(grid.M, model.n)
    return Loop(model, grid, np.asarray(data["chart_ids"], dtype=int), coords)


def path_to_json(path) -> dict:
    return {
        "model": path.model.name,
        "dim": path.model.n,
        "M": path.grid.M,
        "measure": path.grid.measure,
        "offset": path.grid.offset,
        "times": path.times.tolist(),
        "loops": [{"chart_ids": path.chart_ids[i].tolist(), "coords": complex_to_json(path.coords[i])}
                  for i in range(path.times.size)],
    }


def path_from_json(data: dict, model: KahlerModel | None = None):
    from .connection import LoopPath

    model = model or model_from_json(data)
    grid = LoopGrid(int(data["M"]), data.get("measure", "normalized"), float(data.get("offset", 0.0)))
    charts = np.array([lp["chart_ids"] for lp in data["loops"]], dtype=int)
    coords = np.array([complex_from_json(lp["coords"]).reshape(grid.M, model.n) for lp in data["loops"]])
    return LoopPath(model, grid, np.asarray(data["times"], dtype=float), charts, coords)


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def write_json(path, data):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2)
        fh.write("\n")


def write_csv(path, rows):
    """Write a list of flat dicts as CSV (columns from the first row)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = list(rows)
    with open(path, "w", newline="") as fh:
        if not rows:
            return
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
