"""Batch front end: ``lambda-mem <task> --config <file> [--out <dir>]``.

The config is flat ``key = value`` text; lists are written ``[a, b, c]`` or
``a, b, c``; ``#`` starts a comment.  Every sweep writes ``summary.json`` (the
full config echo plus one record per sweep point) and CSV mode grids.  Exit
status is 0 on success and 2 on an invalid config or when any sweep point
failed (the failure is recorded and the sweep continues).

The worker count for sweeps is read from ``LAMBDA_MEM_WORKERS`` (default 1).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from . import dynamics as dy
from . import memory_opt as mo
from . import mode_analysis as ma
from . import retrieval_opt as ro
from .ensemble import Density, EnsembleParams, build_medium
from .fields import LightMode, SpinWave
from .grids import freq_grid, z_grid

__all__ = ["ConfigError", "RunConfig", "load_mode_csv", "main", "parse_config", "run", "write_mode_csv"]

SUMMARY_VERSION = "lambda-mem-summary/1"
CSV_HEADER = "# columns: rho_or_z_or_t, mode_index, re, im, abs2"
TASKS = ("retrieval", "memory", "oracle", "analyze")


class ConfigError(ValueError):
    """Invalid configuration (unknown key, bad value, inconsistent task)."""


@dataclass
class RunConfig:
    task: str = "memory"
    direction: str = "forward"
    directions: list = field(default_factory=lambda: ["forward", "backward"])
    picture: str = "omega"
    m: list = field(default_factory=lambda: [0])
    d0: list = field(default_factory=lambda: [10.0])
    F: list = field(default_factory=lambda: [1.0])
    density: str = "gaussian"
    weighting: str = "amplitude"
    detuning: float = 0.0
    k: int = 4
    n_max: int | None = None
    R: float | None = None
    N_z: int | None = None
    N_nu: int | None = None
    N_u: int | None = None
    u_max: float | None = None
    N_t: int = 48
    T: float | None = None
    refine: bool = True
    save_modes: int = 1
    omega: float = 1.0
    fit_window: list = field(default_factory=lambda: [0.5, 6.0])
    free_amplitude: bool = True
    mode_files: list = field(default_factory=list)
    formats: list = field(default_factory=lambda: ["json", "csv"])

    def validate(self):
        if self.task not in TASKS:
            raise ConfigError(f"task must be one of {TASKS}")
        for d in [self.direction] + list(self.directions):
            if d not in ("forward", "backward", "storage"):
                raise ConfigError(f"unknown direction {d!r}")
        if self.picture not in ("omega", "u"):
            raise ConfigError("picture must be 'omega' or 'u'")
        if self.density not in ("gaussian", "uniform"):
            raise ConfigError("density must be 'gaussian' or 'uniform'")
        for name in ("d0", "F"):
            vals = getattr(self, name)
            if not vals or any(v <= 0 for v in vals):
                raise ConfigError(f"{name} entries must be positive")
        if any(int(v) != v for v in self.m):
            raise ConfigError("m entries must be integers")
        self.m = [int(v) for v in self.m]
        for name in ("k", "n_max", "N_z", "N_nu", "N_u", "N_t", "save_modes"):
            v = getattr(self, name)
            if v is not None and (int(v) != v or v < 0 or (v == 0 and name != "save_modes")):
                raise ConfigError(f"{name} must be a positive integer")
        for name in ("R", "u_max", "T", "omega"):
            v = getattr(self, name)
            if v is not None and v <= 0:
                raise ConfigError(f"{name} must be positive")
        if len(self.fit_window) != 2 or self.fit_window[0] >= self.fit_window[1]:
            raise ConfigError("fit_window must be [low, high]")
        if set(self.formats) - {"json", "csv"}:
            raise ConfigError("formats may contain 'json' and 'csv'")
        return self


_LIST_KEYS = {f.name for f in fields(RunConfig) if f.name in
              ("directions", "m", "d0", "F", "fit_window", "mode_files", "formats")}
_ALIASES = {"m_list": "m", "d0_list": "d0", "F_list": "F"}


def _scalar(text: str):
    t = text.strip().strip('"').strip("'")
    low = t.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    if low in ("none", "null", "auto"):
        return None
    for conv in (int, float):
        try:
            return conv(t)
        except ValueError:
            pass
    return t


def parse_config(text: str) -> RunConfig:
    """Parse ``key = value`` lines into a validated :class:`RunConfig`."""
    known = {f.name for f in fields(RunConfig)}
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        key = _ALIASES.get(key, key)
        if key not in known:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        if key in _LIST_KEYS:
            body = val.strip()
            if body.startswith("[") and body.endswith("]"):
                body = body[1:-1]
            items = [_scalar(s) for s in body.split(",") if s.strip()]
            values[key] = items
        else:
            if val.startswith("["):
                raise ConfigError(f"line {lineno}: {key!r} takes a single value")
            values[key] = _scalar(val)
    try:
        cfg = RunConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    for name in ("d0", "F", "fit_window"):
        vals = getattr(cfg, name)
        if any(not isinstance(v, (int, float)) or isinstance(v, bool) for v in vals):
            raise ConfigError(f"{name} entries must be numbers")
        setattr(cfg, name, [float(v) for v in vals])
    return cfg.validate()


# ------------------------------------------------------------ mode files

def write_mode_csv(path: Path, mode: LightMode | SpinWave, coordinate: str) -> None:
    """One row per (grid point, radial mode); quadrature weights in a comment line."""
    lines = [CSV_HEADER,
             f"# coordinate: {coordinate}",
             f"# m: {mode.m}",
             "# weights: " + " ".join(repr(float(w)) for w in mode.weights)]
    for j, x in enumerate(mode.points):
        for i in range(mode.values.shape[0]):
            v = mode.values[i, j]
            lines.append(f"{float(x)!r},{i + 1},{float(v.real)!r},{float(v.imag)!r},{float(abs(v) ** 2)!r}")
    path.write_text("\n".join(lines) + "\n")


def load_mode_csv(path) -> LightMode | SpinWave:
    """Inverse of :func:`write_mode_csv`."""
    coord, m, weights, rows = None, 0, None, []
    for line in Path(path).read_text().splitlines():
        if line.startswith("# coordinate:"):
            coord = line.split(":", 1)[1].strip()
        elif line.startswith("# m:"):
            m = int(line.split(":", 1)[1])
        elif line.startswith("# weights:"):
            weights = np.array([float(s) for s in line.split(":", 1)[1].split()])
        elif line and not line.startswith("#"):
            x, i, re, im, _ = line.split(",")
            rows.append((float(x), int(i), float(re), float(im)))
    if weights is None or not rows:
        raise ValueError(f"{path} is not a mode grid file")
    n = max(r[1] for r in rows)
    pts = np.array(sorted({r[0] for r in rows}))
    idx = {x: j for j, x in enumerate(pts)}
    vals = np.zeros((n, len(pts)), dtype=complex)
    for x, i, re, im in rows:
        vals[i - 1, idx[x]] = re + 1j * im
    if coord == "z":
        return SpinWave(vals, pts, weights, m)
    return LightMode(vals, pts, weights, m, domain="freq" if coord == "nu" else "time")


# ------------------------------------------------------------ sweep points

def _grid(cfg: RunConfig, d0: float, F: float, scale: float = 1.0) -> dict:
    g = mo.auto_grid(d0, F)
    for key in ("n_max", "R", "N_z", "N_nu"):
        if getattr(cfg, key) is not None:
            g[key] = getattr(cfg, key)
    if scale != 1.0:
        g = dict(g, n_max=int(np.ceil(g["n_max"] * 1.5)), N_z=2 * g["N_z"], N_nu=2 * g["N_nu"])
    return g


def _medium(cfg: RunConfig, m: int, d0: float, F: float, g: dict, density: str | None = None):
    params = EnsembleParams(d0, F, cfg.detuning, Density(density or cfg.density), cfg.weighting)
    return build_medium(params, m, g["n_max"], g["R"])


def _spec(cfg: RunConfig, direction: str, g: dict) -> mo.KernelSpec:
    du = None
    if cfg.N_u is not None and cfg.u_max is not None:
        du = 2 * cfg.u_max / (cfg.N_u - 1)
    return mo.KernelSpec(direction, cfg.picture, N_z=g["N_z"], N_nu=g["N_nu"], u_max=cfg.u_max,
                         du=du or 1.0, N_t=cfg.N_t, T=cfg.T)


def _memory_eta(cfg, direction, m, d0, F, g, density=None):
    med = _medium(cfg, m, d0, F, g, density)
    kernel = mo.build_kernel(_spec(cfg, direction, g), med)
    return med, kernel, mo.optimize_memory(kernel, k=cfg.k)


def _point_memory(cfg: RunConfig, m: int, d0: float, F: float) -> dict:
    g = _grid(cfg, d0, F)
    med, kernel, res = _memory_eta(cfg, cfg.direction, m, d0, F, g)
    rec = {"grid": g, "efficiencies": res.efficiencies.tolist(), "eta_max": res.eta_max}
    if cfg.refine:
        gr = _grid(cfg, d0, F, scale=2.0)
        _, _, rr = _memory_eta(cfg, cfg.direction, m, d0, F, gr)
        rec["refined"] = {"grid": gr, "eta_max": rr.eta_max, "delta": abs(rr.eta_max - res.eta_max)}
    a_in = mo.input_mode(res, 0)
    rec["purity_input"] = ma.purity(a_in)
    if cfg.direction != "storage":
        a_out = mo.output_mode(res, 0)
        rec["purity_output"] = ma.purity(a_out)
        rec["time_reversal_overlap"] = ma.time_reversal_overlap(a_in, a_out)
    if m == 0:
        fit = ma.gaussian_fit(ma.schmidt_decompose(a_in).dominant_transverse, med.basis, F)
        rec["gaussian_fit"] = {"w0": fit.w0, "w0_scaled": fit.w0_scaled, "z_f": fit.z_f,
                               "overlap": fit.overlap, "status": fit.status}
    coord = "nu" if a_in.domain == "freq" else "t"
    modes = []
    for i in range(min(cfg.save_modes, len(res.modes))):
        modes.append(("input", i, mo.input_mode(res, i), coord))
        if cfg.direction == "storage":
            S = SpinWave(res.metadata["outputs"][i], res.metadata["z"], res.metadata["z_weights"], m)
            modes.append(("spinwave", i, S, "z"))
        else:
            modes.append(("output", i, mo.output_mode(res, i), coord))
    return rec, modes


def _point_retrieval(cfg: RunConfig, m: int, d0: float, F: float) -> dict:
    g = _grid(cfg, d0, F)

    def solve(gg):
        med = _medium(cfg, m, d0, F, gg)
        if cfg.picture == "u":
            return ro.retrieval_u(med, u_max=cfg.u_max, zgrid=z_grid(gg["N_z"]), k=cfg.k)
        return ro.optimize_retrieval_freq(med, z_grid(gg["N_z"]), freq_grid(gg["N_nu"]), k=cfg.k)

    res = solve(g)
    rec = {"grid": g, "efficiencies": res.efficiencies.tolist(), "eta_max": res.eta_max}
    if cfg.refine:
        gr = _grid(cfg, d0, F, scale=2.0)
        rr = solve(gr)
        rec["refined"] = {"grid": gr, "eta_max": rr.eta_max, "delta": abs(rr.eta_max - res.eta_max)}
    z, wz = res.metadata["z"], res.metadata["z_weights"]
    S = SpinWave(res.modes[0], z, wz, m)
    rec["purity_spinwave"] = ma.purity(S)
    rec["degenerate_top"] = res.degenerate_top()
    modes = [("spinwave", i, SpinWave(res.modes[i], z, wz, m), "z")
             for i in range(min(cfg.save_modes, len(res.modes)))]
    return rec, modes


def _point_oracle(cfg: RunConfig, m: int, d0: float, F: float) -> dict:
    g = _grid(cfg, d0, F)
    spec = mo.KernelSpec(cfg.direction, "omega", N_z=g["N_z"], N_nu=g["N_nu"])
    med = _medium(cfg, m, d0, F, g)
    kernel = mo.build_kernel(spec, med)
    res = mo.optimize_memory(kernel, k=1)
    ctl = dy.ControlField.constant(cfg.omega)
    zg = kernel.zgrid
    src = SpinWave(res.metadata["source_spinwaves"][0], zg.points, zg.weights, m)
    a_in, span = dy.input_from_spinwave(src, ctl, med)
    st = dy.integrate_storage(a_in, ctl, med, t_span=span, zgrid=zg)
    rec = {"grid": g, "omega": cfg.omega, "kernel_eta": res.eta_max,
           "stored": st.efficiency, "storage_budget_residual": st.budget_residual}
    if cfg.direction == "storage":
        rec["oracle_eta"] = st.efficiency
    else:
        rr = dy.integrate_retrieval(st.spinwave, ctl, med, direction=cfg.direction)
        rec.update({"oracle_eta": rr.eta, "retrieval_budget_residual": rr.budget_residual,
                    "retrieval_status": rr.status})
    rec["relative_difference"] = rec["oracle_eta"] / rec["kernel_eta"] - 1.0
    return rec, [("spinwave", 0, st.spinwave, "z")]


def _analyze_scaling(cfg: RunConfig, m: int, d0: float) -> dict:
    rec = {"F": list(cfg.F), "directions": {}}
    g1 = _grid(cfg, d0, max(cfg.F))
    g1 = dict(g1, n_max=1)
    for direction in cfg.directions:
        etas = []
        for F in cfg.F:
            _, _, r = _memory_eta(cfg, direction, m, d0, F, _grid(cfg, d0, F))
            etas.append(r.eta_max)
        _, _, r1 = _memory_eta(cfg, direction, 0, d0, max(cfg.F), g1, density="uniform")
        entry = {"eta": etas, "eta_1d": r1.eta_max}
        if direction != "storage":
            try:
                fit = ma.fit_inefficiency_scaling(cfg.F, etas, r1.eta_max, tuple(cfg.fit_window),
                                                  cfg.free_amplitude)
                entry["fit"] = asdict(fit)
            except (ValueError, RuntimeError) as exc:
                entry["fit_error"] = str(exc)
        rec["directions"][direction] = entry
    dirs = rec["directions"]
    if "forward" in dirs and "backward" in dirs:
        diff = np.array(dirs["forward"]["eta"]) - np.array(dirs["backward"]["eta"])
        rec["sign_changes"] = int(np.count_nonzero(np.diff(np.sign(diff)) != 0))
    return rec, []


def _analyze_files(cfg: RunConfig) -> dict:
    out = []
    for path in cfg.mode_files:
        mode = load_mode_csv(path)
        out.append({"file": str(path), "purity": ma.purity(mode)})
    return {"mode_files": out}, []


def _run_point(args):
    cfg, task, m, d0, F = args
    t0 = time.perf_counter()
    rec = {"m": m, "d0": d0}
    if F is not None:
        rec["F"] = F
    try:
        if task == "memory":
            body, modes = _point_memory(cfg, m, d0, F)
        elif task == "retrieval":
            body, modes = _point_retrieval(cfg, m, d0, F)
        elif task == "oracle":
            body, modes = _point_oracle(cfg, m, d0, F)
        else:
            body, modes = _analyze_scaling(cfg, m, d0)
        rec.update(body)
        rec["status"] = "ok"
    except Exception as exc:          # per-point failure is recorded, the sweep continues
        rec.update({"status": "failed", "error": f"{type(exc).__name__}: {exc}"})
        modes = []
    rec["wall_time"] = time.perf_counter() - t0
    return rec, modes


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return repr(obj)
    return obj


def run(cfg: RunConfig, out: Path | str | None = None) -> tuple[list, bool]:
    """Execute a config; returns (records, all_ok) and writes artifacts to ``out``."""
    cfg.validate()
    if cfg.task == "analyze" and cfg.mode_files:
        body, _ = _analyze_files(cfg)
        records = [dict(body, status="ok")]
        jobs = []
    elif cfg.task == "analyze":
        jobs = [(cfg, cfg.task, m, d0, None) for m in cfg.m for d0 in cfg.d0]
    else:
        jobs = [(cfg, cfg.task, m, d0, F) for m in cfg.m for d0 in cfg.d0 for F in cfg.F]
    if jobs:
        workers = int(os.environ.get("LAMBDA_MEM_WORKERS", "1"))
        if workers > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(workers) as pool:
                results = list(pool.map(_run_point, jobs))
        else:
            results = [_run_point(j) for j in jobs]
        records = [r for r, _ in results]
    else:
        results = []
    ok = all(r.get("status") == "ok" for r in records)
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        if "csv" in cfg.formats:
            for rec, modes in results:
                tag = f"{cfg.task}_{cfg.direction if cfg.task in ('memory', 'oracle') else 'r'}" \
                      f"_m{rec['m']}_d{rec['d0']:g}" + (f"_F{rec['F']:g}" if "F" in rec else "")
                files = []
                for kind, i, mode, coord in modes:
                    name = f"{tag}_{kind}{i}.csv"
                    write_mode_csv(out / name, mode, coord)
                    files.append(name)
                if files:
                    rec["mode_files"] = files
        if "json" in cfg.formats:
            summary = {"version": SUMMARY_VERSION, "package_version": __version__, "task": cfg.task,
                       "config": asdict(cfg), "records": records, "success": ok}
            (out / "summary.json").write_text(json.dumps(_clean(summary), indent=2, sort_keys=True) + "\n")
    return records, ok


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="lambda-mem", description="Optimal Lambda-memory kernels and sweeps")
    ap.add_argument("task", choices=TASKS)
    ap.add_argument("--config", required=True, help="key = value config file")
    ap.add_argument("--out", default="lambda_mem_out", help="output directory")
    args = ap.parse_args(argv)
    try:
        text = Path(args.config).read_text()
        cfg = parse_config(text)
        if "task" in {ln.split("=")[0].strip() for ln in text.splitlines() if "=" in ln} \
                and cfg.task != args.task:
            raise ConfigError(f"config task {cfg.task!r} does not match command {args.task!r}")
        cfg.task = args.task
        cfg.validate()
    except (OSError, ConfigError) as exc:
        print(json.dumps({"error": "invalid_config", "detail": str(exc)}), file=sys.stderr)
        return 2
    records, ok = run(cfg, args.out)
    for r in records:
        eta = r.get("eta_max", r.get("oracle_eta"))
        label = " ".join(f"{k}={r[k]:g}" for k in ("m", "d0", "F") if k in r)
        print(f"{label} status={r['status']}" + (f" eta_max={eta:.6f}" if eta is not None else ""))
    return 0 if ok else 2


if __name__ == "__main__":
    sys.exit(main())
