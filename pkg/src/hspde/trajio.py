"""Trajectory container I/O.

An ensemble is stored as two files sharing a path stem: ``<stem>.bin``
holds the raw values (little-endian float64, C order, laid out as
replica x time x space) and ``<stem>.json`` is the sidecar manifest with
format tag "hspde-traj-1", array geometry, grids and run provenance.
The binary payload round-trips bit for bit.
"""

from __future__ import annotations

import csv
import json
import os
from typing import Optional

import numpy as np

from .convolve import TrajectoryEnsemble

__all__ = ["save_trajectories", "load_trajectories", "export_trajectories_csv"]

FORMAT_TAG = "hspde-traj-1"
CSV_CELL_LIMIT = 2_000_000


def _stem(path: str) -> str:
    root, ext = os.path.splitext(path)
    return root if ext in (".bin", ".json") else path


def save_trajectories(ens: TrajectoryEnsemble, path: str) -> str:
    """Write <stem>.bin plus <stem>.json; returns the stem."""
    stem = _stem(path)
    values = np.ascontiguousarray(ens.values, dtype="<f8")
    with open(stem + ".bin", "wb") as fh:
        fh.write(values.tobytes())
    manifest = {
        "format": FORMAT_TAG,
        "dtype": "<f8",
        "order": "C",
        "shape": list(values.shape),
        "time_grid": np.asarray(ens.time_grid, dtype=float).tolist(),
        "space_points": np.asarray(ens.space_points, dtype=float).tolist(),
        "space_indices": np.asarray(ens.space_indices).astype(int).tolist(),
        "space_shape": list(ens.space_shape),
        "space_weight": float(ens.space_weight),
        "provenance": ens.provenance,
    }
    with open(stem + ".json", "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return stem


def load_trajectories(path: str) -> TrajectoryEnsemble:
    stem = _stem(path)
    with open(stem + ".json") as fh:
        manifest = json.load(fh)
    tag = manifest.get("format")
    if tag != FORMAT_TAG:
        raise ValueError(f"unsupported trajectory format {tag!r}")
    shape = tuple(manifest["shape"])
    raw = np.fromfile(stem + ".bin", dtype="<f8")
    expect = int(np.prod(shape))
    if raw.size != expect:
        raise ValueError(
            f"payload holds {raw.size} values, manifest promises {expect}"
        )
    return TrajectoryEnsemble(
        values=raw.reshape(shape),
        time_grid=np.asarray(manifest["time_grid"], dtype=float),
        space_points=np.asarray(manifest["space_points"], dtype=float),
        space_indices=np.asarray(manifest["space_indices"], dtype=int),
        space_shape=tuple(manifest["space_shape"]),
        space_weight=float(manifest["space_weight"]),
        provenance=manifest["provenance"],
    )


def export_trajectories_csv(ens: TrajectoryEnsemble, path: str,
                            max_replicas: Optional[int] = None) -> str:
    """Long-format CSV: replica, t, one coordinate column per axis, value.

    Meant for plotting small ensembles; refuses payloads beyond
    2e6 cells (use the binary container for those).
    """
    n_rep = ens.replicas if max_replicas is None else min(max_replicas, ens.replicas)
    n_cells = n_rep * ens.values.shape[1] * ens.values.shape[2]
    if n_cells > CSV_CELL_LIMIT:
        raise ValueError(
            f"{n_cells} cells exceeds the CSV limit {CSV_CELL_LIMIT}; "
            "save the binary container instead"
        )
    d = ens.space_points.shape[1]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["replica", "t"] + [f"x{i + 1}" for i in range(d)] + ["value"])
        for r in range(n_rep):
            for it, t in enumerate(ens.time_grid):
                for js in range(ens.values.shape[2]):
                    coords = [f"{c:.17g}" for c in ens.space_points[js]]
                    writer.writerow(
                        [r, f"{t:.17g}"] + coords + [f"{ens.values[r, it, js]:.17g}"]
                    )
    return path
