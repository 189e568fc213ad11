"""Output files: polygon JSON, key-value/table reports and timing CSV."""

from __future__ import annotations

import csv
import json
from collections import OrderedDict
from pathlib import Path

import numpy as np

from .metrics import IoUReport, TimingReport
from .plane_fit import PlaneModel
from .polygonize import PlanePolygon, monotone_chain, project_to_plane, shoelace

DIGITS = 9


def _r(x):
    v = round(float(x), DIGITS)
    return 0.0 if v == 0.0 else v  # no "-0.0" in output


def polygon_record(p: PlanePolygon) -> OrderedDict:
    d = OrderedDict()
    d["normal"] = [_r(x) for x in p.plane.normal]
    d["offset"] = _r(p.plane.offset)
    d["vertices"] = [[_r(x) for x in v] for v in p.vertices3d]
    d["area"] = _r(p.area)
    d["cluster_label"] = int(p.cluster_label)
    d["inlier_count"] = int(p.inlier_count)
    return d


def polygons_document(polygons, **header) -> OrderedDict:
    doc = OrderedDict(header)
    doc["polygons"] = [polygon_record(p) for p in sorted(polygons, key=lambda q: q.cluster_label)]
    return doc


def write_polygons(path, polygons, **header) -> None:
    Path(path).write_text(json.dumps(polygons_document(polygons, **header), indent=1) + "\n")


def polygon_from_record(rec) -> PlanePolygon:
    n = np.asarray(rec["normal"], dtype=np.float64)
    plane = PlaneModel(n / np.linalg.norm(n), float(rec["offset"]),
                       int(rec.get("inlier_count", 0)), int(rec["cluster_label"]))
    v3 = np.asarray(rec["vertices"], dtype=np.float64).reshape(-1, 3)
    v2 = monotone_chain(project_to_plane(plane, v3))
    return PlanePolygon(plane, v2, v3, shoelace(v2), None, rec.get("source", ""))


def read_polygons(path) -> list:
    doc = json.loads(Path(path).read_text())
    return [polygon_from_record(r) for r in doc["polygons"]]


def write_kv(fh, items) -> None:
    for k, v in items.items():
        if isinstance(v, float):
            v = f"{v:.6f}"
        fh.write(f"{k}={v}\n")


def write_table(fh, header, rows, sep="\t") -> None:
    fh.write(sep.join(header) + "\n")
    for row in rows:
        fh.write(sep.join(f"{x:.6f}" if isinstance(x, float) else str(x) for x in row) + "\n")


def write_iou_report(path, report: IoUReport, extra: dict | None = None) -> None:
    with open(path, "w") as fh:
        write_kv(fh, OrderedDict(extra or {}))
        write_kv(fh, report.as_dict())
        fh.write("\n")
        write_table(fh, ["truth_id", "cluster_label", "iou"],
                    [(m.truth_id, m.detected_id, m.iou) for m in report.matches])


def read_kv(path) -> dict:
    out = {}
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            break
        k, _, v = line.partition("=")
        out[k] = v
    return out


def write_timing_csv(path, timing: TimingReport) -> None:
    with open(path, "w", newline="") as fh:
        if not timing.rows:
            fh.write("frame\n")
            return
        w = csv.writer(fh)
        keys = list(timing.rows[0].keys())
        w.writerow(keys)
        for row in timing.rows:
            w.writerow([f"{row[k]:.4f}" if isinstance(row[k], float) else row[k] for k in keys])
