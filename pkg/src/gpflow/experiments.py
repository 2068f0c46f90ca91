"""Experiment drivers: single solves, scheme comparisons, fixed-step and mesh studies.

Each driver takes a :class:`~gpflow.config.RunConfig` and an output folder,
writes its CSV/JSON files there and returns the summary it wrote.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, GPFlowError
from .flow import FixedStep, FlowConfig, GoldenSection, run_flow
from .grid import save_field
from .operators import Metric, check_admissibility
from .quotient import estimate_rate, rho_pair

__all__ = [
    "CONVERGED",
    "run_solve",
    "run_dissipation",
    "run_fixed_step",
    "run_mesh_study",
    "SnapshotRecorder",
    "first_within",
    "find_start_state",
    "measure_rates",
    "tail_ratios",
]

log = logging.getLogger(__name__)

CONVERGED = ("grad_tol", "energy_tol", "rho_tol")
SCHEMES = tuple(m.value for m in Metric)


def _write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _fmt(x):
    if x is None or (isinstance(x, float) and not math.isfinite(x)):
        return ""
    return repr(x) if isinstance(x, float) else x


def _grid_dict(grid):
    return {"nx": grid.nx, "ny": grid.ny, "xmin": grid.xmin, "xmax": grid.xmax, "ymin": grid.ymin, "ymax": grid.ymax}


def _setup(cfg, n=None):
    grid = cfg.grid(n)
    params = cfg.params(grid)
    adm = check_admissibility(grid, params)
    if not adm.ok:
        log.warning("admissibility check failed: K_max = %.6g", adm.k_max)
    return grid, params, adm


def run_solve(cfg, out_dir):
    """One flow run; writes the trace, the final field and a summary JSON."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    grid, params, adm = _setup(cfg)
    u0 = cfg.initial_state(grid)
    ref = cfg.reference(grid)
    report = run_flow(
        u0,
        params,
        cfg.flow_config(),
        cfg.solve_config(),
        reference=ref,
        trace_path=out / cfg.io.trace,
    )
    save_field(report.u, out / cfg.io.field)
    summary = {
        "command": "solve",
        "config": cfg.to_dict(),
        "grid": _grid_dict(grid),
        "admissibility": adm.to_dict(),
        "result": report.summary(),
        "converged": report.termination in CONVERGED,
        "timing": {"wall_s": report.wall_s},
    }
    _write_json(out / cfg.io.summary, summary)
    return report, summary


def run_dissipation(cfg, out_dir):
    """All three schemes with the golden-section policy from one initial state."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    grid, params, adm = _setup(cfg)
    u0 = cfg.initial_state(grid)
    ref = cfg.reference(grid)
    step = cfg.step_policy() if cfg.stepping.policy == "golden" else GoldenSection()
    reports = {}
    for scheme in SCHEMES:
        reports[scheme] = run_flow(
            u0,
            params,
            cfg.flow_config(scheme=scheme, step=step),
            cfg.solve_config(),
            reference=ref,
            trace_path=out / f"trace_{scheme}.csv",
        )
    e_ref = cfg.dissipation.reference_energy
    if e_ref is None:
        # best energy found by any of the runs
        finals = [r.energy.total for r in reports.values()]
        recorded = [r.trace.column("energy").min() for r in reports.values() if len(r.trace)]
        e_ref = float(min(finals + recorded))
    rows = []
    for scheme, rep in reports.items():
        for rec in rep.trace.records:
            rows.append(
                [
                    rec.n,
                    scheme,
                    repr(rec.energy.total),
                    repr(abs(rec.energy.total - e_ref)),
                    repr(rec.alpha),
                    repr(rec.grad_norm),
                    _fmt(rec.rho2),
                ]
            )
    _write_csv(
        out / "dissipation.csv",
        ["iteration", "scheme", "energy", "energy_error", "alpha", "grad_norm_X", "rho2"],
        rows,
    )
    per_scheme = {}
    for scheme, rep in reports.items():
        alphas = rep.trace.column("alpha")
        start = rep.plateaus[-1][1] + 1 if rep.plateaus else 0
        tail = alphas[start:]
        per_scheme[scheme] = {
            **rep.summary(),
            "energy_error": abs(rep.energy.total - e_ref),
            "median_alpha": float(np.median(tail)) if tail.size else None,
            "converged": rep.termination in CONVERGED,
        }
        save_field(rep.u, out / f"field_{scheme}.csv")
    summary = {
        "command": "dissipation",
        "config": cfg.to_dict(),
        "grid": _grid_dict(grid),
        "admissibility": adm.to_dict(),
        "reference_energy": e_ref,
        "schemes": per_scheme,
        "timing": {s: r.wall_s for s, r in reports.items()},
    }
    _write_json(out / cfg.io.summary, summary)
    return summary


def tail_ratios(errors, tail):
    """Successive error ratios over the last ``tail`` steps, or ``None`` if unusable."""
    e = np.asarray(errors, dtype=float)
    if e.size < tail + 1 or not np.all(np.isfinite(e[-tail - 1 :])) or np.any(e[-tail - 1 :] <= 0):
        return None
    return e[-tail:] / e[-tail - 1 : -1]


def run_fixed_step(cfg, out_dir):
    """Fixed-step flows over the configured (scheme, alpha) cross product.

    The initial state should already be close to the ground state given as
    ``io.reference``. A combination counts as converged when it reaches
    ``stopping.grad_tol``, or when its error ratios settle (standard deviation
    of the last ``tail`` ratios below 0.01) at a mean below 1. Anything else,
    including a numerical blow-up, is recorded as not converged.
    """
    if cfg.initial.kind != "file":
        raise ConfigError("initial.kind", "fixed-step runs start from a field file")
    if cfg.io.reference is None:
        raise ConfigError("io.reference", "fixed-step runs need a reference field")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    grid, params, adm = _setup(cfg)
    u0 = cfg.initial_state(grid)
    ref = cfg.reference(grid)
    fs = cfg.fixed_step
    start_rho = rho_pair(u0, ref)
    error_rows, results = [], []
    for scheme in fs.schemes:
        for alpha in fs.alphas:
            fc = cfg.flow_config(scheme=scheme, step=FixedStep(alpha), max_iter=fs.max_iter, record_every=1)
            t0 = time.perf_counter()
            try:
                rep = run_flow(u0, params, fc, cfg.solve_config(), reference=ref)
                errors = np.append(rep.trace.column("rho2"), rep.rho2)
                termination = rep.termination
            except GPFlowError as exc:
                log.warning("%s with alpha=%g failed: %s", scheme, alpha, exc)
                errors, termination, rep = np.array([start_rho[1]]), "diverged", None
            ratios = np.full(errors.shape, np.nan)
            with np.errstate(divide="ignore", invalid="ignore"):
                ratios[1:] = errors[1:] / errors[:-1]
            for k, (e, r) in enumerate(zip(errors, ratios)):
                error_rows.append([scheme, repr(alpha), k, _fmt(float(e)), _fmt(float(r))])
            tr = tail_ratios(errors, fs.tail)
            rate = std = None
            if tr is not None:
                rate, std = float(np.exp(np.mean(np.log(tr)))), float(np.std(tr))
            settled = rate is not None and std < 0.01 and rate < 1.0 and errors[-1] < errors[0]
            converged = termination in CONVERGED or settled
            results.append(
                {
                    "scheme": scheme,
                    "alpha": alpha,
                    "termination": termination,
                    "iterations": 0 if rep is None else rep.iterations,
                    "rate": rate,
                    "ratio_std": std,
                    "final_rho2": float(errors[-1]) if np.isfinite(errors[-1]) else None,
                    "final_energy": None if rep is None else rep.energy.total,
                    "converged": bool(converged),
                    "wall_s": time.perf_counter() - t0,
                }
            )
            log.info("fixed step %s alpha=%g: %s, rate %s", scheme, alpha, termination, rate)
    _write_csv(out / "fixed_step_errors.csv", ["scheme", "alpha", "n", "rho2", "ratio"], error_rows)
    _write_csv(
        out / "fixed_step_rates.csv",
        ["scheme", "alpha", "converged", "termination", "iterations", "rate", "ratio_std", "final_rho2"],
        [
            [r["scheme"], repr(r["alpha"]), r["converged"], r["termination"], r["iterations"]]
            + [_fmt(r["rate"]), _fmt(r["ratio_std"]), _fmt(r["final_rho2"])]
            for r in results
        ],
    )
    summary = {
        "command": "fixed-step",
        "config": cfg.to_dict(),
        "grid": _grid_dict(grid),
        "admissibility": adm.to_dict(),
        "start_rho": list(start_rho),
        "runs": results,
    }
    _write_json(out / cfg.io.summary, summary)
    return summary


class SnapshotRecorder:
    """``run_flow`` callback keeping every ``every``-th state, keyed by iteration plus ``offset``."""

    def __init__(self, every=50, offset=0):
        self.every = every
        self.offset = offset
        self.states = {}

    def __call__(self, n, u):
        if n % self.every == 0:
            self.states[self.offset + n] = u


def first_within(states, reference, params, flow_cfg, solve_cfg, start_rho):
    """First iterate of a recorded trajectory with rho2 to ``reference`` at most ``start_rho``.

    ``states`` maps iteration numbers to recorded states of one trajectory
    produced with ``flow_cfg``. The stretch between the last recorded state
    above the threshold and the first one below is recomputed.
    Returns ``(state, iteration)``.
    """
    keys = sorted(states)
    prev = None
    for k in keys:
        if rho_pair(states[k], reference)[1] <= start_rho:
            break
        prev = k
    else:
        raise GPFlowError(f"trajectory never came within rho2 <= {start_rho:g} of the reference")
    if prev is None:
        return states[k], k
    leg = run_flow(
        states[prev],
        params,
        replace(flow_cfg, rho_tol=start_rho, grad_tol=0.0, energy_tol=0.0, stagnation_window=0, max_iter=k - prev),
        solve_cfg,
        reference=reference,
    )
    if leg.termination != "rho_tol":
        return states[k], k
    return leg.u, prev + leg.iterations


def find_start_state(u0, params, flow_cfg, solve_cfg, start_rho, snapshot_every=50):
    """Solve to a reference, then return ``(reference_report, start, start_iteration)``.

    ``start`` is the first iterate of the same trajectory whose rho2 distance
    to the reference is at most ``start_rho``.
    """
    rec = SnapshotRecorder(snapshot_every)
    ref = run_flow(u0, params, flow_cfg, solve_cfg, callback=rec)
    rec.states[ref.iterations] = ref.u
    start, it = first_within(rec.states, ref.u, params, flow_cfg, solve_cfg, start_rho)
    return ref, start, it


def _rate_errors(report, ref_energy, kind):
    if kind == "energy":
        e = np.append(report.trace.column("energy"), report.energy.total)
        return np.abs(e - ref_energy)
    col = "rho2" if kind == "rho2" else "rho1"
    return np.append(report.trace.column(col), getattr(report, col))


def measure_rates(start, params, reference, step, window, error="rho2", solve_cfg=None, schemes=SCHEMES):
    """Average error ratio of each scheme over ``window`` iterations from ``start``.

    ``reference`` is the :class:`SolveReport` of the limit state; ``error``
    selects the error sequence (rho2, rho1 or the energy error).
    """
    cells = []
    for scheme in schemes:
        fc = FlowConfig(scheme=scheme, step=step, grad_tol=0.0, max_iter=window, stagnation_window=0)
        rep = run_flow(start, params, fc, solve_cfg, reference=reference.u)
        errors = _rate_errors(rep, reference.energy.total, error)
        try:
            rate = estimate_rate(errors, window)
        except ValueError as exc:
            log.warning("%s: no rate (%s)", scheme, exc)
            rate = None
        cells.append(
            {
                "scheme": scheme,
                "rate": rate,
                "median_alpha": float(np.median(rep.trace.column("alpha"))),
                "start_error": float(errors[0]),
                "final_error": float(errors[-1]),
            }
        )
    return cells


def run_mesh_study(cfg, out_dir):
    """Average convergence rates per scheme and resolution.

    For each resolution the au scheme with golden-section steps is solved to
    ``mesh_study.reference_tol`` from the configured initial state; the first
    iterate within ``start_rho`` of that limit starts ``window`` golden-section
    iterations of every scheme, whose geometric-mean error ratio is the rate.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ms = cfg.mesh_study
    golden = cfg.step_policy() if cfg.stepping.policy == "golden" else GoldenSection()
    if cfg.initial.kind == "file":
        raise ConfigError("initial.kind", "mesh studies build their initial state on every grid")
    rows, cells = [], []
    for n in ms.resolutions:
        grid, params, adm = _setup(cfg, n)
        u0 = cfg.initial_state(grid)
        ref_cfg = cfg.flow_config(
            scheme="au", step=golden, grad_tol=ms.reference_tol, max_iter=ms.reference_max_iter, energy_tol=0.0
        )
        t0 = time.perf_counter()
        ref, start, start_it = find_start_state(u0, params, ref_cfg, cfg.solve_config(), ms.start_rho)
        save_field(ref.u, out / f"reference_{n}.csv")
        log.info(
            "mesh %d: reference %s after %d iterations (E=%.10g), start at iteration %d",
            n,
            ref.termination,
            ref.iterations,
            ref.energy.total,
            start_it,
        )
        for cell in measure_rates(start, params, ref, golden, ms.window, ms.error, cfg.solve_config()):
            cells.append({"resolution": n, **cell})
        rows.append(
            {
                "resolution": n,
                "reference_energy": ref.energy.total,
                "reference_rayleigh": ref.rayleigh,
                "reference_termination": ref.termination,
                "reference_iterations": ref.iterations,
                "reference_grad_norm": ref.grad_norm,
                "start_iteration": start_it,
                "k_max": adm.k_max,
                "wall_s": time.perf_counter() - t0,
            }
        )
    table = {s: {c["resolution"]: c["rate"] for c in cells if c["scheme"] == s} for s in SCHEMES}
    _write_csv(
        out / "rates.csv",
        ["scheme"] + [f"{n}x{n}" for n in ms.resolutions],
        [[s] + [_fmt(table[s][n]) for n in ms.resolutions] for s in SCHEMES],
    )
    _write_csv(
        out / "rates_long.csv",
        ["resolution", "scheme", "rate", "median_alpha", "start_error", "final_error"],
        [[c["resolution"], c["scheme"], _fmt(c["rate"]), repr(c["median_alpha"])]
         + [repr(c["start_error"]), repr(c["final_error"])] for c in cells],
    )
    summary = {
        "command": "mesh-study",
        "config": cfg.to_dict(),
        "error": ms.error,
        "references": rows,
        "rates": {s: {str(n): r for n, r in t.items()} for s, t in table.items()},
        "cells": cells,
    }
    _write_json(out / cfg.io.summary, summary)
    return summary
