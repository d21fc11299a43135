"""Artifact writers: JSON and CSV with 17 significant digits, field CSVs, SVG polylines."""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

FLOAT_FMT = "%.17g"


def _fmt(x):
    x = float(x)
    if not math.isfinite(x):
        return None
    return FLOAT_FMT % x


def _to_plain(obj):
    """Convert numpy scalars/arrays and tuples to plain Python containers."""
    if isinstance(obj, dict):
        return {str(k): _to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _to_plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    return obj


def dumps(obj, indent=2):
    """JSON text with every float written to 17 significant digits; NaN/inf become null."""
    def enc(o, level):
        pad = " " * (indent * (level + 1))
        end = " " * (indent * level)
        if isinstance(o, dict):
            if not o:
                return "{}"
            items = [f"{pad}{json.dumps(k)}: {enc(v, level + 1)}" for k, v in o.items()]
            return "{\n" + ",\n".join(items) + "\n" + end + "}"
        if isinstance(o, list):
            if not o:
                return "[]"
            if all(not isinstance(v, (dict, list)) for v in o):
                return "[" + ", ".join(enc(v, level + 1) for v in o) + "]"
            return "[\n" + ",\n".join(pad + enc(v, level + 1) for v in o) + "\n" + end + "]"
        if isinstance(o, bool) or o is None:
            return json.dumps(o)
        if isinstance(o, int):
            return str(o)
        if isinstance(o, float):
            s = _fmt(o)
            return "null" if s is None else s
        return json.dumps(o)
    return enc(_to_plain(obj), 0) + "\n"


def write_json(path, obj):
    Path(path).write_text(dumps(obj))


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        s = _fmt(v)
        return "nan" if s is None else s
    return str(v)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_cell(v) for v in r])


def write_records_csv(path, records, columns):
    write_csv(path, columns, [[rec.get(c) for c in columns] for rec in records])


def write_field_csv(path, field, elements_path=None):
    """Vertex table ``id,x,y,boundary,value``; y is 0 on 1D meshes."""
    mesh = field.mesh
    V = mesh.vertices
    y = V[:, 1] if V.shape[1] > 1 else np.zeros(len(V))
    rows = [(i, V[i, 0], y[i], int(mesh.boundary[i]), field.values[i]) for i in range(len(V))]
    write_csv(path, ["id", "x", "y", "boundary", "value"], rows)
    if elements_path is not None:
        k = mesh.elements.shape[1]
        write_csv(elements_path, ["id"] + [f"v{j}" for j in range(k)],
                  [(i, *map(int, e)) for i, e in enumerate(mesh.elements)])


def read_field_csv(path):
    """Return (vertex array, boundary mask, values) from a field CSV."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 1:3], data[:, 3].astype(bool), data[:, 4]


def write_svg(path, series, title="", xlabel="", ylabel="", logx=False, logy=False,
              width=640, height=420):
    """Minimal polyline chart; ``series`` maps a label to (x, y) arrays."""
    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]
    tx = (lambda v: np.log10(v)) if logx else (lambda v: v)
    ty = (lambda v: np.log10(v)) if logy else (lambda v: v)
    clean = {}
    for lab, (x, y) in series.items():
        x, y = np.asarray(x, float), np.asarray(y, float)
        ok = np.isfinite(x) & np.isfinite(y)
        if logx:
            ok &= x > 0
        if logy:
            ok &= y > 0
        if ok.any():
            clean[lab] = (tx(x[ok]), ty(y[ok]))
    ml, mr, mt, mb = 70, 20, 40, 50
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
             f'<rect width="{width}" height="{height}" fill="white"/>',
             f'<text x="{width / 2:.1f}" y="22" text-anchor="middle" font-size="15">{title}</text>',
             f'<text x="{width / 2:.1f}" y="{height - 10}" text-anchor="middle" font-size="12">'
             f'{xlabel}{" (log10)" if logx else ""}</text>',
             f'<text x="16" y="{height / 2:.1f}" text-anchor="middle" font-size="12" '
             f'transform="rotate(-90 16 {height / 2:.1f})">{ylabel}{" (log10)" if logy else ""}</text>']
    if clean:
        allx = np.concatenate([v[0] for v in clean.values()])
        ally = np.concatenate([v[1] for v in clean.values()])
        x0, x1 = float(allx.min()), float(allx.max())
        y0, y1 = float(ally.min()), float(ally.max())
        x1 = x1 if x1 > x0 else x0 + 1.0
        y1 = y1 if y1 > y0 else y0 + 1.0
        pw, ph = width - ml - mr, height - mt - mb

        def px(v):
            return ml + (v - x0) / (x1 - x0) * pw

        def py(v):
            return mt + ph - (v - y0) / (y1 - y0) * ph

        parts.append(f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>')
        for val, anchor in ((x0, "start"), (x1, "end")):
            parts.append(f'<text x="{px(val):.1f}" y="{mt + ph + 16}" text-anchor="{anchor}" '
                         f'font-size="11">{val:.4g}</text>')
        for val in (y0, y1):
            parts.append(f'<text x="{ml - 6}" y="{py(val) + 4:.1f}" text-anchor="end" '
                         f'font-size="11">{val:.4g}</text>')
        for j, (lab, (x, y)) in enumerate(clean.items()):
            c = colors[j % len(colors)]
            pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(x, y))
            parts.append(f'<polyline fill="none" stroke="{c}" stroke-width="1.6" points="{pts}"/>')
            parts.append(f'<text x="{ml + 10}" y="{mt + 16 + 14 * j}" fill="{c}" font-size="12">{lab}</text>')
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n")
