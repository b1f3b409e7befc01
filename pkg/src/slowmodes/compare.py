"""Quantitative comparison of run outputs (ROM vs direct, or like vs like).

A "run" is an output directory written by the CLI: its ``run.meta.json``
declares the kind (``slowflow`` or ``direct``) and wall-clock time, and the
CSV files carry either a continuous envelope (slowflow) or discrete per-cycle
peaks (direct).
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .errors import ConfigError, IncompatibleArtifactsError

__all__ = ["load_run", "compare_runs"]


class RunData:
    def __init__(self, kind, wallclock, meta, path):
        self.kind = kind
        self.wallclock = wallclock
        self.meta = meta
        self.path = Path(path)
        self.peaks = {}          # dof -> (t, value) arrays, upper side
        self.envelope = {}       # dof -> (t, upper) continuous


def _read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(x) for x in row] for row in reader if row]
    data = np.array(rows) if rows else np.zeros((0, len(header)))
    return header, data


def load_run(path):
    """Load the comparable series of one run directory."""
    path = Path(path)
    meta_file = path / "run.meta.json"
    if not meta_file.exists():
        raise IncompatibleArtifactsError(f"{path} has no run.meta.json")
    meta = json.loads(meta_file.read_text(encoding="utf-8"))
    kind = meta.get("command")
    run = RunData(kind, float(meta.get("wallclock_s", 0.0)), meta, path)
    if kind == "slowflow":
        header, data = _read_csv(path / "slowflow.csv")
        t = data[:, header.index("t")]
        for name in header:
            if name.startswith("env_upper_d"):
                dof = int(name.split("env_upper_d")[1])
                run.envelope[dof] = (t, data[:, header.index(name)])
    elif kind == "direct":
        for env_file in sorted(path.glob("envelope_d*.csv")):
            dof = int(env_file.stem.split("envelope_d")[1])
            header, data = _read_csv(env_file)
            if data.size == 0:
                run.peaks[dof] = (np.array([]), np.array([]))
                continue
            is_peak = data[:, header.index("is_peak")].astype(bool)
            run.peaks[dof] = (
                data[is_peak, header.index("t")],
                data[is_peak, header.index("value")],
            )
    else:
        raise IncompatibleArtifactsError(
            f"run kind {kind!r} in {path} cannot be compared"
        )
    return run


def _upper_series(run, dof):
    if dof in run.peaks:
        return run.peaks[dof]
    if dof in run.envelope:
        return run.envelope[dof]
    raise ConfigError(f"run {run.path} has no envelope data for DOF {dof}")


def _match(run_a, run_b, dof):
    """Pairs of envelope values over the common time span.

    Discrete peak series are matched by nearest time; a continuous envelope
    is interpolated at the partner's times.
    """
    ta, va = _upper_series(run_a, dof)
    tb, vb = _upper_series(run_b, dof)
    if ta.size == 0 or tb.size == 0:
        raise ConfigError("one of the runs has an empty envelope")
    lo = max(ta[0], tb[0])
    hi = min(ta[-1], tb[-1])
    if lo >= hi:
        raise ConfigError("runs do not share a common time span")
    a_discrete = dof in run_a.peaks
    b_discrete = dof in run_b.peaks
    if a_discrete and b_discrete:
        keep = (ta >= lo) & (ta <= hi)
        times = ta[keep]
        av = va[keep]
        idx = np.searchsorted(tb, times)
        idx = np.clip(idx, 1, tb.size - 1)
        nearer = np.where(
            np.abs(tb[idx] - times) < np.abs(tb[idx - 1] - times), idx, idx - 1
        )
        bv = vb[nearer]
    elif b_discrete:
        keep = (tb >= lo) & (tb <= hi)
        times = tb[keep]
        bv = vb[keep]
        av = np.interp(times, ta, va)
    else:
        keep = (ta >= lo) & (ta <= hi)
        times = ta[keep]
        av = va[keep]
        bv = np.interp(times, tb, vb)
    return times, av, bv


def compare_runs(run_a, run_b, dof, amplitude_floor=0.0):
    """Envelope agreement metrics between two runs.

    ``run_b`` acts as the reference for relative errors.  Reports the
    relative L2 envelope error over matched points, the global peak amplitude
    and peak time errors, and the direct/ROM wall-clock speedup when the pair
    is mixed.
    """
    times, av, bv = _match(run_a, run_b, dof)
    if amplitude_floor > 0.0:
        keep = np.abs(bv) >= amplitude_floor
        times, av, bv = times[keep], av[keep], bv[keep]
    if times.size == 0:
        raise ConfigError("no matched envelope points above the floor")
    diff = av - bv
    denom = float(np.linalg.norm(bv))
    rms_rel = float(np.linalg.norm(diff) / denom) if denom > 0.0 else 0.0
    ia = int(np.argmax(av))
    ib = int(np.argmax(bv))
    peak_b = float(bv[ib])
    peak_rel = (abs(float(av[ia]) - peak_b) / abs(peak_b)) if peak_b else 0.0
    span = float(times[-1] - times[0])
    dt_peak = abs(float(times[ia] - times[ib]))
    metrics = {
        "n_matched": int(times.size),
        "envelope_rms_rel": rms_rel,
        "envelope_max_rel": float(np.max(np.abs(diff) / np.maximum(np.abs(bv), 1e-300))),
        "peak_amplitude_rel_error": peak_rel,
        "peak_time_error": dt_peak,
        "peak_time_error_rel_span": dt_peak / span if span > 0.0 else 0.0,
        "span": [float(times[0]), float(times[-1])],
    }
    kinds = {run_a.kind, run_b.kind}
    if kinds == {"slowflow", "direct"}:
        direct = run_a if run_a.kind == "direct" else run_b
        rom = run_a if run_a.kind == "slowflow" else run_b
        if rom.wallclock > 0.0:
            metrics["speedup"] = direct.wallclock / rom.wallclock
    elif run_b.wallclock > 0.0:
        metrics["wallclock_ratio"] = run_a.wallclock / run_b.wallclock
    return metrics
