"""Command-line entry point.

    qmem [--config FILE] [--out DIR] [--Rn 5 --Vn 0.23 ...] COMMAND

Configuration files hold ``key = value`` lines with ``#`` comments.  Values
given on the command line win over the file, which wins over the defaults.
Each run writes CSV artifacts into the output directory, each with a
``*.meta.json`` sidecar holding the resolved parameters.  A sidecar can be
fed back with ``--replay`` to regenerate its artifact.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from qmem import artifacts
from qmem.bifurcation import find_cusp, find_hopf, find_saddle_nodes
from qmem.dynamics import integrate, power_spectrum, steady_span
from qmem.equilibria import find_equilibria
from qmem.errors import ConfigurationError, ParseError, QmemError
from qmem.model import CircuitParams, DeviceParams, State, check, static_iv_curve
from qmem.overlap import build_overlap_table
from qmem.sweeps import Axis, amplitude_sweep, hysteresis_sweep, scan2d, updown_path

logger = logging.getLogger("qmem")

COMMANDS = ("simulate", "iv-curve", "equilibria", "bifurcations", "sweep", "amplitude",
            "scan", "spectrum")

# key -> (type, default, help)
KEYS = {
    "Omega": (float, 7.0, "trap frequency"),
    "Gamma": (float, 0.1, "pure dephasing rate"),
    "alpha": (float, 1.0, "relaxation to dephasing ratio, in [0, 2]"),
    "ZT": (float, 1.0, "thermal value of Z"),
    "l": (float, 0.5, "oscillator length"),
    "x0": (float, 0.8, "trap offset"),
    "lam": (float, 0.13, "tunnelling length"),
    "Rn": (float, 5.0, "external resistance ratio"),
    "Vn": (float, 0.23, "bias voltage"),
    "init": (str, "0,0,1,0", "initial state X,Y,Z,V"),
    "t_end": (float, 600.0, "integration time"),
    "settle": (float, 0.6, "fraction of the run discarded as transient"),
    "dt": (float, 0.01, "output sampling step"),
    "rtol": (float, 1e-8, "relative tolerance"),
    "atol": (float, 1e-10, "absolute tolerance"),
    "v_min": (float, -1.0, "iv-curve lower voltage"),
    "v_max": (float, 6.0, "iv-curve upper voltage"),
    "n_points": (int, 701, "iv-curve sample count"),
    "hopf_min": (float, 0.05, "Hopf search lower bias"),
    "hopf_max": (float, 4.0, "Hopf search upper bias"),
    "hopf_grid": (int, 80, "Hopf search grid size"),
    "v_start": (float, 0.0, "sweep start bias"),
    "v_turn": (float, 7.0, "sweep turning bias"),
    "step": (float, 0.05, "sweep bias step"),
    "t_relax": (float, 200.0, "sweep relaxation time per step"),
    "grid": (str, "Vn:0.23:0.6:38", "amplitude grid as name:min:max:count"),
    "ax1": (str, "Gamma:0.01:1:50", "first scan axis as name:min:max:count"),
    "ax2": (str, "ZT:0:1:50", "second scan axis as name:min:max:count"),
}

# Short config names to model names.
_AXIS_NAMES = {"Vn": "V_n", "Rn": "R_n", "Gamma": "Gamma", "ZT": "Z_T", "alpha": "alpha"}


@dataclass(frozen=True)
class RunSpec:
    command: str
    params: dict
    out_dir: Path = Path(".")
    deterministic: bool = field(default=True, init=False)

    def device(self) -> DeviceParams:
        p = self.params
        return DeviceParams(p["Omega"], p["Gamma"], p["alpha"], p["ZT"]).replace(
            l=p["l"], x0=p["x0"], lam=p["lam"])

    def circuit(self) -> CircuitParams:
        return CircuitParams(self.params["Rn"], self.params["Vn"])

    def initial_state(self) -> State:
        return parse_state(self.params["init"])


def _convert(key: str, raw: str, line: int | None):
    kind = KEYS[key][0]
    text = raw.strip()
    if kind is str:
        if not text:
            raise ParseError(f"empty value for {key!r}", line)
        return text
    try:
        if kind is int:
            value = int(text)
        else:
            # float() is locale independent; reject "nan"/"inf" spellings
            value = float(text)
            if not math.isfinite(value):
                raise ValueError
    except ValueError:
        raise ParseError(f"malformed number {raw!r} for {key!r}", line) from None
    return value


def parse_state(text: str) -> State:
    parts = text.split(",")
    if len(parts) != 4:
        raise ParseError(f"initial state needs 4 comma-separated values, got {text!r}")
    try:
        return State(*(float(p) for p in parts))
    except ValueError:
        raise ParseError(f"malformed initial state {text!r}") from None


def parse_axis(text: str) -> Axis:
    parts = text.split(":")
    if len(parts) != 4:
        raise ParseError(f"axis spec must be name:min:max:count, got {text!r}")
    name, lo, hi, count = parts
    if name not in _AXIS_NAMES:
        raise ParseError(f"unknown axis {name!r}; choose from {sorted(_AXIS_NAMES)}")
    try:
        return Axis(_AXIS_NAMES[name], float(lo), float(hi), int(count))
    except ValueError:
        raise ParseError(f"malformed axis spec {text!r}") from None


def parse_config(text: str = "", overrides: dict | None = None,
                 command: str | None = None, out_dir: str | Path = ".") -> RunSpec:
    """Resolve a run from a config document and command-line overrides."""
    params = {k: v[1] for k, v in KEYS.items()}
    file_command = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        if key == "command":
            file_command = value
            continue
        if key not in KEYS:
            raise ParseError(f"unknown key {key!r}", lineno)
        params[key] = _convert(key, value, lineno)
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in KEYS:
            raise ParseError(f"unknown key {key!r}")
        params[key] = _convert(key, str(value), None)
    cmd = command or file_command
    if cmd is None:
        raise ParseError("missing command")
    if cmd not in COMMANDS:
        raise ParseError(f"unknown command {cmd!r}; choose from {', '.join(COMMANDS)}")
    return RunSpec(cmd, params, Path(out_dir))


def spec_from_sidecar(path: str | Path, out_dir: str | Path | None = None) -> RunSpec:
    meta = json.loads(Path(path).read_text(encoding="utf-8"))
    try:
        params = {k: str(v) for k, v in meta["parameters"].items()}
        command = meta["command"]
    except (KeyError, AttributeError):
        raise ParseError(f"{path} is not a run sidecar") from None
    return parse_config("", params, command, out_dir or Path(path).parent)


# ------------------------------------------------------------------ commands

def _integrate(spec: RunSpec, dev, circ, table):
    p = spec.params
    return integrate(spec.initial_state(), dev, circ, t_end=p["t_end"], rel_tol=p["rtol"],
                     abs_tol=p["atol"], sample_dt=p["dt"], table=table)


def _run_simulate(spec, dev, circ, out):
    table = build_overlap_table(dev.geom)
    traj = _integrate(spec, dev, circ, table)
    span = steady_span(traj, spec.params["settle"])
    spec_ = power_spectrum(traj, spec.params["settle"])
    summary = {"V_min": span.V_min, "V_max": span.V_max, "span": span.span,
               "oscillating": span.oscillating, "peak_omega": spec_.peak_omega,
               "max_purity": traj.max_purity}
    return [(artifacts.write_trajectory(out / "trajectory.csv", traj), summary),
            (artifacts.write_spectrum(out / "spectrum.csv", spec_), summary)]


def _run_spectrum(spec, dev, circ, out):
    traj = _integrate(spec, dev, circ, build_overlap_table(dev.geom))
    spec_ = power_spectrum(traj, spec.params["settle"])
    summary = {"peak_omega": spec_.peak_omega, "peak_power": spec_.peak_power,
               "noise_floor": spec_.noise_floor}
    return [(artifacts.write_spectrum(out / "spectrum.csv", spec_), summary)]


def _run_iv(spec, dev, circ, out):
    p = spec.params
    if p["n_points"] < 2 or not p["v_max"] > p["v_min"]:
        raise ConfigurationError("iv-curve needs v_max > v_min and n_points >= 2")
    v = np.linspace(p["v_min"], p["v_max"], p["n_points"])
    g, i = static_iv_curve(v, dev)
    return [(artifacts.write_iv(out / "iv_curve.csv", v, g, i), None)]


def _run_equilibria(spec, dev, circ, out):
    eqs = find_equilibria(dev, circ)
    return [(artifacts.write_equilibria(out / "equilibria.csv", circ.V_n, circ.R_n, eqs),
             {"count": len(eqs)})]


def _run_bifurcations(spec, dev, circ, out):
    p = spec.params
    cusps = find_cusp(dev)
    folds = find_saddle_nodes(dev, circ.R_n)
    hopfs = find_hopf(dev, circ.R_n, (p["hopf_min"], p["hopf_max"]), p["hopf_grid"])
    return [(artifacts.write_bifurcations(out / "bifurcations.csv", cusps, folds, hopfs), None)]


def _run_sweep(spec, dev, circ, out):
    p = spec.params
    path = updown_path(p["v_start"], p["v_turn"], p["step"])
    res = hysteresis_sweep(dev, circ.R_n, path, t_relax=p["t_relax"],
                           s0=spec.initial_state(), settle_fraction=p["settle"],
                           rel_tol=p["rtol"], abs_tol=p["atol"])
    summary = {"jumps_up": res.jumps("up"), "jumps_down": res.jumps("down"),
               "unsettled": [e.V_n for e in res.entries if not e.settled]}
    return [(artifacts.write_sweep(out / "sweep.csv", res), summary)]


def _run_amplitude(spec, dev, circ, out):
    p = spec.params
    axis = parse_axis(p["grid"])
    if axis.name not in ("V_n", "Z_T"):
        raise ConfigurationError(f"amplitude grid must vary Vn or ZT, got {axis.name}")
    curve = amplitude_sweep(dev, circ.R_n, axis.name, axis.values, v_n=circ.V_n,
                            t_end=p["t_end"], settle_fraction=p["settle"],
                            s0=spec.initial_state())
    fit = curve.fit
    summary = {"fit": None if fit is None else
               {"c": fit.c, "p0": fit.p0, "residual": fit.residual, "side": fit.side,
                "n_points": fit.n_points},
               "fit_error": curve.fit_error}
    return [(artifacts.write_amplitude(out / "amplitude.csv", curve), summary)]


def _run_scan(spec, dev, circ, out):
    p = spec.params
    gm = scan2d(dev, circ, parse_axis(p["ax1"]), parse_axis(p["ax2"]), t_end=p["t_end"],
                settle_fraction=p["settle"], s0=spec.initial_state())
    spans, flags = artifacts.write_gridmap(out / "scan.csv", gm)
    summary = {"oscillating_cells": int(gm.oscillating.sum()),
               "missing_cells": int(np.isnan(gm.spans).sum())}
    return [(spans, summary), (flags, summary)]


_DISPATCH = {
    "simulate": _run_simulate, "spectrum": _run_spectrum, "iv-curve": _run_iv,
    "equilibria": _run_equilibria, "bifurcations": _run_bifurcations, "sweep": _run_sweep,
    "amplitude": _run_amplitude, "scan": _run_scan,
}


def execute(spec: RunSpec) -> list[Path]:
    """Run the analysis and write artifacts; returns the written paths."""
    dev, circ = spec.device(), spec.circuit()
    if spec.command == "scan":
        # Varied parameters are validated per cell; check only the fixed ones.
        varied = {parse_axis(spec.params[k]).name for k in ("ax1", "ax2")}
        dev0, circ0 = DeviceParams(), CircuitParams()
        dev_fixed = dev.replace(**{k: getattr(dev0, k) for k in ("Gamma", "Z_T", "alpha")
                                   if k in varied})
        circ_fixed = CircuitParams(circ0.R_n if "R_n" in varied else circ.R_n,
                                   circ0.V_n if "V_n" in varied else circ.V_n)
        check(dev_fixed, circ_fixed)
    else:
        check(dev, circ)
    out = spec.out_dir
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigurationError(f"cannot create output directory {out}: {exc}") from exc
    written = []
    for path, summary in _DISPATCH[spec.command](spec, dev, circ, out):
        artifacts.write_sidecar(path, spec.command, spec.params, summary)
        written.append(path)
    return written


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qmem", description=__doc__.split("\n\n")[0])
    ap.add_argument("command", nargs="?", choices=COMMANDS)
    ap.add_argument("--config", type=Path, help="key = value configuration file")
    ap.add_argument("--replay", type=Path, help="rerun from a *.meta.json sidecar")
    ap.add_argument("--out", type=Path, default=None, help="output directory (default .)")
    ap.add_argument("-v", "--verbose", action="store_true")
    grp = ap.add_argument_group("parameters")
    for key, (_, default, help_) in KEYS.items():
        grp.add_argument(f"--{key}", dest=key, default=None, metavar="VALUE",
                         help=f"{help_} (default {default})")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.replay:
            spec = spec_from_sidecar(args.replay, args.out)
        else:
            text = args.config.read_text(encoding="utf-8") if args.config else ""
            overrides = {k: getattr(args, k) for k in KEYS}
            spec = parse_config(text, overrides, args.command, args.out or Path("."))
        for path in execute(spec):
            print(path)
    except OSError as exc:
        print(f"qmem: error: {exc}", file=sys.stderr)
        return 2
    except ParseError as exc:
        print(f"qmem: configuration error: {exc}", file=sys.stderr)
        return 2
    except QmemError as exc:
        print(f"qmem: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
