"""CSV and JSON sidecar writers.

Every CSV uses a period decimal separator, comma delimiter, LF line endings
and a header row.  Floats are written with ``repr`` so the text round-trips
exactly and two identical runs give byte-identical files.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from qmem import __version__
from qmem.bifurcation import CuspPoint, HopfPoint, SaddleNodePoint
from qmem.dynamics import Spectrum, Trajectory
from qmem.equilibria import Equilibrium
from qmem.errors import ConfigurationError
from qmem.sweeps import AmplitudeCurve, GridMap, SweepResult

TOOL = "qmem"


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return "nan" if math.isnan(x) else repr(x)
    return str(x)


def write_csv(path: Path, header, rows) -> Path:
    path = Path(path)
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([fmt(v) for v in row])
    except OSError as exc:
        raise ConfigurationError(f"cannot write {path}: {exc}") from exc
    return path


def sidecar_path(path: Path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".meta.json")


def write_sidecar(artifact: Path, command: str, params: dict, extra: dict | None = None) -> Path:
    meta = {"tool": TOOL, "version": __version__, "command": command,
            "artifact": Path(artifact).name, "parameters": params}
    if extra:
        meta["results"] = extra
    out = sidecar_path(artifact)
    try:
        out.write_text(json.dumps(meta, indent=2, sort_keys=True, allow_nan=True) + "\n",
                       encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"cannot write {out}: {exc}") from exc
    return out


def write_trajectory(path, traj: Trajectory) -> Path:
    return write_csv(path, ("t", "X", "Y", "Z", "V"),
                     ((t, *y) for t, y in zip(traj.t, traj.y)))


def write_spectrum(path, spec: Spectrum) -> Path:
    return write_csv(path, ("omega", "power"), zip(spec.omega, spec.power))


def write_iv(path, v, g, i) -> Path:
    return write_csv(path, ("V", "G", "I"), zip(v, g, i))


def write_equilibria(path, v_n: float, r_n: float, eqs: list[Equilibrium]) -> Path:
    header = ("V_n", "R_n", "V_star", "re1", "re2", "re3", "re4",
              "im1", "im2", "im3", "im4", "stability")
    rows = [(v_n, r_n, e.V_star, *e.eigenvalues.real, *e.eigenvalues.imag,
             e.stability.value) for e in eqs]
    return write_csv(path, header, rows)


def write_bifurcations(path, cusps: list[CuspPoint], folds: list[SaddleNodePoint],
                       hopfs: list[HopfPoint]) -> Path:
    rows = [("cusp", c.V_n, c.R_n, c.V, "") for c in cusps]
    rows += [("saddle-node", s.V_n, s.R_n, s.V, "") for s in folds]
    rows += [("hopf", h.V_n, h.R_n, h.V_star, h.omega) for h in hopfs]
    return write_csv(path, ("type", "V_n", "R_n", "V_star", "omega"), rows)


def write_sweep(path, result: SweepResult) -> Path:
    return write_csv(path, ("direction", "V_n", "V_low", "V_high"),
                     ((e.direction, e.V_n, e.V_low, e.V_high) for e in result.entries))


def write_amplitude(path, curve: AmplitudeCurve) -> Path:
    return write_csv(path, (curve.param, "span"), zip(curve.values, curve.spans))


def write_gridmap(path, gm: GridMap) -> tuple[Path, Path]:
    """Span matrix plus a companion ``*_flags.csv`` of oscillating flags."""
    path = Path(path)
    header = (f"{gm.axis1}\\{gm.axis2}", *(fmt(v) for v in gm.grid2))
    write_csv(path, header, ((a, *row) for a, row in zip(gm.grid1, gm.spans)))
    flags = path.with_name(path.stem + "_flags.csv")
    # -1 marks invalid or failed cells.
    codes = np.where(np.isnan(gm.spans), -1, gm.oscillating.astype(int))
    write_csv(flags, header, ((a, *row) for a, row in zip(gm.grid1, codes)))
    return path, flags
