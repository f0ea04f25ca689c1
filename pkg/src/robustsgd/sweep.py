"""Grid sweeps with best-of selection.

A sweep file is an ordinary run config plus sweep.* keys declaring grids
over gamma0, momentum, T, B^2 and kappa. Cells are enumerated in canonical
axis order (kappa, B_sq, gamma0, momentum, T — each grid in file order) and
each cell derives its seed from (master seed, cell index), so results do not
depend on execution order or worker-pool size. A failed cell is recorded and
the sweep continues.
"""

from __future__ import annotations

import itertools
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace as dc_replace
from typing import Optional

import numpy as np

from .configfile import _REGISTRY, _SWEEP_REGISTRY, materialize, parse_config_text, resolve
from .core import ConfigurationError, RunConfig
from .trainer import run

AXES = ("kappa", "B_sq", "gamma0", "momentum", "T")
METRICS = ("floor_estimate", "final_f_gap")
WORKERS_ENV = "ROBUSTSGD_WORKERS"


def _parse_momentum_token(tok: str):
    parts = tok.split(":")
    kind = parts[0]
    if kind == "zero" and len(parts) == 1:
        return ("zero", None)
    if kind == "constant" and len(parts) == 2:
        return ("constant", float(parts[1]))
    if kind == "tied":
        if len(parts) == 1:
            return ("tied", 36.0)
        if len(parts) == 2:
            return ("tied", float(parts[1]))
    raise ConfigurationError(
        f"sweep momentum token {tok!r}: expected zero | constant:<beta> | tied[:<c_beta>]"
    )


@dataclass(frozen=True)
class SweepSpec:
    """Base config plus grids. An absent axis is the singleton (None,),
    meaning 'keep the base value' — every grid is therefore nonempty."""

    base_kv: dict
    metric: str = "floor_estimate"
    kappa_grid: tuple = (None,)
    B_sq_grid: tuple = (None,)
    gamma0_grid: tuple = (None,)
    momentum_grid: tuple = (None,)
    T_grid: tuple = (None,)
    seed: int = 0

    def __post_init__(self):
        if self.metric not in METRICS:
            raise ConfigurationError(
                f"sweep metric must be one of {METRICS}, got {self.metric!r}"
            )
        for name in AXES:
            grid = getattr(self, f"{name}_grid")
            if not grid:
                object.__setattr__(self, f"{name}_grid", (None,))
        if (
            self.base_kv.get("schedule.stepsize") == "pl_piecewise"
            and any(v is not None for v in self.gamma0_grid)
        ):
            raise ConfigurationError(
                "a gamma0 grid cannot be combined with the pl_piecewise stepsize "
                "(gamma0 is derived as 2/(alpha1*s0))"
            )
        for tok in self.momentum_grid:
            if tok is not None:
                _parse_momentum_token(tok)

    @property
    def n_cells(self) -> int:
        return int(np.prod([len(getattr(self, f"{a}_grid")) for a in AXES]))

    def cell_params(self):
        """All cells in canonical order as (index, {axis: value})."""
        grids = [getattr(self, f"{a}_grid") for a in AXES]
        for index, combo in enumerate(itertools.product(*grids)):
            yield index, dict(zip(AXES, combo))


def load_sweep(path: str) -> SweepSpec:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigurationError(f"cannot read sweep file {path}: {exc}") from None
    kv = resolve(parse_config_text(text, allow_sweep_keys=True), allow_sweep_keys=True)
    base_kv = {k: kv[k] for k in _REGISTRY}
    materialize(base_kv)  # surface base-config errors before any cell runs

    def grid(key):
        vals = kv.get(key)
        return tuple(vals) if vals else (None,)

    seed = kv.get("sweep.seed")
    if seed is None:
        seed = base_kv["run.seed"]
    return SweepSpec(
        base_kv=base_kv,
        metric=kv["sweep.metric"],
        kappa_grid=grid("sweep.kappa"),
        B_sq_grid=grid("sweep.B_sq"),
        gamma0_grid=grid("sweep.gamma0"),
        momentum_grid=grid("sweep.momentum"),
        T_grid=grid("sweep.T"),
        seed=seed,
    )


@dataclass
class SweepCell:
    index: int
    params: dict
    seed: int
    status: str = "pending"      # ok | failed
    metric: Optional[float] = None
    error: Optional[str] = None


@dataclass
class SweepResult:
    spec: SweepSpec
    cells: list

    @property
    def ok_cells(self):
        return [c for c in self.cells if c.status == "ok"]

    def best_by_group(self) -> dict:
        """(kappa, B_sq) -> best completed cell (smallest metric; ties go to
        the lowest cell index)."""
        best: dict = {}
        for cell in self.ok_cells:
            key = (cell.params["kappa"], cell.params["B_sq"])
            cur = best.get(key)
            if cur is None or cell.metric < cur.metric:
                best[key] = cell
        return best

    def cells_csv(self, path) -> None:
        cols = ("index", "kappa", "B_sq", "gamma0", "momentum", "T",
                "seed", "status", "metric", "error")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(",".join(cols) + "\n")
            for c in self.cells:
                fh.write(",".join([
                    str(c.index),
                    _fmt(c.params["kappa"]),
                    _fmt(c.params["B_sq"]),
                    _fmt(c.params["gamma0"]),
                    c.params["momentum"] or "",
                    _fmt(c.params["T"]),
                    str(c.seed),
                    c.status,
                    _fmt(c.metric),
                    (c.error or "").replace(",", ";").replace("\n", " "),
                ]) + "\n")

    def best_csv(self, path) -> None:
        cols = ("kappa", "B_sq", "best_index", "metric", "gamma0", "momentum", "T")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(",".join(cols) + "\n")
            for (kappa, b_sq), c in sorted(
                self.best_by_group().items(),
                key=lambda kv: (_sort_key(kv[0][0]), _sort_key(kv[0][1])),
            ):
                fh.write(",".join([
                    _fmt(kappa), _fmt(b_sq), str(c.index), _fmt(c.metric),
                    _fmt(c.params["gamma0"]), c.params["momentum"] or "",
                    _fmt(c.params["T"]),
                ]) + "\n")


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def _sort_key(v):
    return (v is not None, v if v is not None else 0.0)


def cell_kv(spec: SweepSpec, params: dict) -> dict:
    """Base config with one cell's overrides applied."""
    kv = dict(spec.base_kv)
    if params["kappa"] is not None:
        kv["aggregator.kappa"] = params["kappa"]
        kv["problem.kappa"] = params["kappa"]
    if params["B_sq"] is not None:
        if params["B_sq"] < 0:
            raise ConfigurationError("B_sq grid values must be >= 0")
        kv["problem.B"] = math.sqrt(params["B_sq"])
    if params["gamma0"] is not None:
        kv["schedule.gamma0"] = params["gamma0"]
    if params["momentum"] is not None:
        kind, value = _parse_momentum_token(params["momentum"])
        kv["schedule.momentum"] = kind
        if kind == "constant":
            kv["schedule.beta"] = value
        elif kind == "tied":
            kv["schedule.c_beta"] = value
    if params["T"] is not None:
        kv["run.T"] = int(params["T"])
    return kv


def cell_seed(master_seed: int, index: int) -> int:
    return int(np.random.SeedSequence([master_seed, index]).generate_state(1)[0])


def _metric_of(config: RunConfig, metric: str) -> float:
    reps = config.replicates
    vals = []
    for r in range(reps):
        cfg = config if reps == 1 else dc_replace(
            config, seed=int(np.random.SeedSequence([config.seed, r]).generate_state(1)[0])
        )
        record = run(cfg)
        if metric == "floor_estimate":
            vals.append(record.floor_estimate())
        else:
            v = float(record.f_gap[-1])
            if not math.isfinite(v):
                raise ConfigurationError(
                    "final_f_gap is undefined on this instance (no known minimizer); "
                    "use the floor_estimate metric"
                )
            vals.append(v)
    return float(np.mean(vals))


def run_cell(spec: SweepSpec, index: int, params: dict) -> SweepCell:
    seed = cell_seed(spec.seed, index)
    cell = SweepCell(index=index, params=params, seed=seed)
    try:
        kv = cell_kv(spec, params)
        kv["run.seed"] = seed
        loaded = materialize(kv)
        cell.metric = _metric_of(loaded.config, spec.metric)
        cell.status = "ok"
    except Exception as exc:  # a failed cell must not poison the sweep
        cell.status = "failed"
        cell.error = f"{type(exc).__name__}: {exc}"
    return cell


def run_sweep(spec: SweepSpec, max_workers: Optional[int] = None) -> SweepResult:
    """Execute every cell (in a bounded thread pool) and collect results in
    canonical order. Pool size: `max_workers`, else the ROBUSTSGD_WORKERS
    environment variable, else 1."""
    if max_workers is None:
        max_workers = int(os.environ.get(WORKERS_ENV, "1"))
    if max_workers < 1:
        raise ConfigurationError("worker pool size must be >= 1")
    jobs = list(spec.cell_params())
    if max_workers == 1:
        cells = [run_cell(spec, i, p) for i, p in jobs]
    else:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            futures = [pool.submit(run_cell, spec, i, p) for i, p in jobs]
            cells = [f.result() for f in futures]
    cells.sort(key=lambda c: c.index)
    return SweepResult(spec=spec, cells=cells)
