"""Monte-Carlo power sweeps and convergence runs over the three schemes.

Outputs of one run (all stamped with eta):

* ``detail.csv``: one row per (power, seed, scheme), deterministic.
* ``timing.csv``: wall-clock time of the same rows, kept apart so that
  ``detail.csv`` is byte-identical across reruns.
* ``summary.csv``: per (power, scheme) feasible probability, mean rate over
  feasible draws and mean rate with infeasible draws counted as zero.
* ``traces/<seed>_<scheme>.json``: outer-iteration rate traces.
"""
import csv
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .ao import AoOptions, solve_ao, solve_random_phase, solve_without_ris
from .channel import FadingParams, Geometry, realization_seed, sample_channels
from .phase_opt import PbagmOptions
from .system import SystemParams, check_feasible

log = logging.getLogger(__name__)

SCHEMES = ("proposed", "random_phase", "without_ris")
DETAIL_COLUMNS = ["power_dbm", "seed", "scheme", "feasible", "rate_u1", "outer_iters", "status",
                  "eta"]
SUMMARY_COLUMNS = ["power_dbm", "scheme", "eta", "realizations", "feasible_count",
                   "feasible_prob", "mean_rate_feasible", "mean_rate_zero_filled"]


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    N: int = 4
    M: int = 40
    noise_dbm: float = -50.0
    eta: float = 0.8
    gamma2: float = 0.5
    power_grid_dbm: list = field(default_factory=lambda: [10.0, 15.0, 20.0, 25.0, 30.0, 35.0])
    realizations: int = 100
    schemes: list = field(default_factory=lambda: list(SCHEMES))
    base_seed: int = 2024
    output_dir: str = "results"
    workers: int = 1
    ap_pos: list = field(default_factory=lambda: [0.0, 2.0, 0.0])
    ris_pos: list = field(default_factory=lambda: [11.0, 2.0, 0.0])
    u1_pos: list = field(default_factory=lambda: [8.0, 0.0, 0.0])
    u2_pos: list = field(default_factory=lambda: [12.0, 2.0, 0.0])
    alpha_direct_ap_u1: float = 3.5
    alpha_u1_u2: float = 3.5
    alpha_ap_u2: float = 4.0
    alpha_ris: float = 2.0
    rician_k: float = 2.0
    pl_ref_db: float = -30.0
    ao_max_outer: int = 20
    ao_tol: float = 1e-4
    ao_init_mode: str = "random"
    pbagm_c0_rel: float = 1e-3
    pbagm_rho: float = 3.0
    pbagm_eps: float = 1e-4
    pbagm_max_iter: int = 30

    def __post_init__(self):
        if not self.power_grid_dbm:
            raise ConfigError("power_grid_dbm must not be empty")
        if int(self.realizations) < 1:
            raise ConfigError("realizations must be >= 1")
        bad = [s for s in self.schemes if s not in SCHEMES]
        if bad or not self.schemes:
            raise ConfigError(f"schemes must be a non-empty subset of {SCHEMES}, got {bad}")
        if self.ao_init_mode not in ("random", "zero"):
            raise ConfigError("ao_init_mode must be 'random' or 'zero'")
        if int(self.workers) < 1:
            raise ConfigError("workers must be >= 1")
        try:
            self.geometry()
            self.fading()
            self.system(1.0)
        except ValueError as err:
            raise ConfigError(str(err)) from err

    # --------------------------------------------------------------- builders
    def geometry(self):
        return Geometry(tuple(self.ap_pos), tuple(self.ris_pos), tuple(self.u1_pos),
                        tuple(self.u2_pos))

    def fading(self):
        return FadingParams(self.alpha_direct_ap_u1, self.alpha_u1_u2, self.alpha_ap_u2,
                            self.alpha_ris, self.rician_k, self.pl_ref_db)

    def system(self, P_s):
        noise = dbm_to_watt(self.noise_dbm)
        return SystemParams(N=int(self.N), M=int(self.M), P_s=P_s, sigma1_sq=noise,
                            sigma2_sq=noise, eta=self.eta, gamma2=self.gamma2)

    def ao_options(self, seed):
        return AoOptions(max_outer=int(self.ao_max_outer), tol=self.ao_tol,
                         init_mode=self.ao_init_mode, seed=int(seed),
                         pbagm=PbagmOptions(c0_rel=self.pbagm_c0_rel, rho=self.pbagm_rho,
                                            eps=self.pbagm_eps,
                                            max_iter=int(self.pbagm_max_iter)))

    def seeds(self):
        return [realization_seed(self.base_seed, i) for i in range(int(self.realizations))]


def dbm_to_watt(dbm):
    return 10.0 ** (dbm / 10.0) / 1000.0


# ------------------------------------------------------------------ config IO
_LISTS = {"power_grid_dbm": float, "schemes": str, "ap_pos": float, "ris_pos": float,
          "u1_pos": float, "u2_pos": float}


def _coerce(name, value, default):
    if name in _LISTS:
        if isinstance(value, str):
            value = [v for v in value.replace(";", ",").split(",") if v.strip()]
        return [_LISTS[name](v.strip() if isinstance(v, str) else v) for v in value]
    if isinstance(default, bool):
        return str(value).lower() in ("1", "true", "yes")
    if isinstance(default, int):
        return int(value)
    if isinstance(default, float):
        return float(value)
    return str(value)


def config_from_dict(d):
    known = {f.name: f for f in fields(ExperimentConfig)}
    defaults = ExperimentConfig()
    kw = {}
    for k, v in d.items():
        if k not in known:
            raise ConfigError(f"unknown config key {k!r}")
        try:
            kw[k] = _coerce(k, v, getattr(defaults, k))
        except (TypeError, ValueError) as err:
            raise ConfigError(f"bad value for {k!r}: {v!r}") from err
    return ExperimentConfig(**kw)


def parse_config_text(text):
    """JSON object, or ``key = value`` lines with ``#`` comments."""
    stripped = text.strip()
    if stripped.startswith("{"):
        try:
            d = json.loads(stripped)
        except json.JSONDecodeError as err:
            raise ConfigError(f"invalid JSON config: {err}") from err
        if not isinstance(d, dict):
            raise ConfigError("JSON config must be an object")
        return config_from_dict(d)
    d = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        k, v = (s.strip() for s in line.split("=", 1))
        d[k] = v
    return config_from_dict(d)


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        return parse_config_text(fh.read())


# ------------------------------------------------------------------- running
def run_one(cfg, power_dbm, seed, scheme):
    """One (power, seed, scheme) run; solver failures become an infeasible row."""
    p = cfg.system(dbm_to_watt(power_dbm))
    ch = sample_channels(cfg.geometry(), cfg.fading(), p, seed)
    t0 = time.perf_counter()
    try:
        if scheme == "proposed":
            res = solve_ao(ch, p, cfg.ao_options(seed))
        elif scheme == "random_phase":
            res = solve_random_phase(ch, p, seed)
        else:
            res = solve_without_ris(ch, p, seed)
        feasible = bool(res.feasible)
        if feasible:
            chk = ch.without_ris() if scheme == "without_ris" else ch
            feasible = check_feasible(chk, res.design, p)["feasible"]
        row = {"feasible": feasible, "rate_u1": res.rate if feasible else None,
               "outer_iters": res.iterations, "status": res.status.value,
               "trace": list(res.objective_trace), "retries": res.info.get("retries", 0),
               "design": res.design.to_dict() if feasible else None,
               "phase_traces": res.info.get("phase_traces", [])}
    except Exception as err:    # recorded, never aborts the sweep
        log.warning("run failed (power %s, seed %s, %s): %r", power_dbm, seed, scheme, err)
        row = {"feasible": False, "rate_u1": None, "outer_iters": 0,
               "status": f"Error:{type(err).__name__}", "trace": [], "retries": 0,
               "design": None, "phase_traces": []}
    row.update({"power_dbm": float(power_dbm), "seed": int(seed), "scheme": scheme,
                "eta": cfg.eta, "wall_ms": 1e3 * (time.perf_counter() - t0)})
    return row


def _task(args):
    return run_one(*args)


@dataclass
class SweepResult:
    rows: list
    summary: list
    out_dir: str


def _run_tasks(cfg, tasks):
    if int(cfg.workers) > 1:
        with ProcessPoolExecutor(max_workers=int(cfg.workers)) as ex:
            rows = list(ex.map(_task, [(cfg,) + t for t in tasks]))
    else:
        rows = [run_one(cfg, *t) for t in tasks]
    order = {s: i for i, s in enumerate(SCHEMES)}
    rows.sort(key=lambda r: (r["power_dbm"], r["seed"], order[r["scheme"]]))
    return rows


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def summarize(rows):
    """Per (power, scheme) statistics; recomputable from ``detail.csv``."""
    groups = {}
    for r in rows:
        groups.setdefault((r["power_dbm"], r["scheme"]), []).append(r)
    order = {s: i for i, s in enumerate(SCHEMES)}
    out = []
    for (pw, sc) in sorted(groups, key=lambda k: (k[0], order[k[1]])):
        g = groups[(pw, sc)]
        rates = [r["rate_u1"] for r in g if r["feasible"]]
        n = len(g)
        out.append({
            "power_dbm": pw, "scheme": sc, "eta": g[0]["eta"], "realizations": n,
            "feasible_count": len(rates), "feasible_prob": len(rates) / n,
            "mean_rate_feasible": float(np.mean(rates)) if rates else None,
            "mean_rate_zero_filled": float(np.sum(rates)) / n,
        })
    return out


def _write_csv(path, columns, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in columns])


def _write_traces(out_dir, rows):
    tdir = os.path.join(out_dir, "traces")
    os.makedirs(tdir, exist_ok=True)
    by_key = {}
    for r in rows:
        by_key.setdefault((r["seed"], r["scheme"]), []).append(
            {"power_dbm": r["power_dbm"], "status": r["status"], "feasible": r["feasible"],
             "outer_iters": r["outer_iters"], "retries": r["retries"], "trace": r["trace"],
             "design": r["design"], "phase_traces": r["phase_traces"]})
    for (seed, scheme), runs in by_key.items():
        with open(os.path.join(tdir, f"{seed}_{scheme}.json"), "w", encoding="utf-8") as fh:
            json.dump({"seed": seed, "scheme": scheme, "eta": rows[0]["eta"], "runs": runs},
                      fh, sort_keys=True)


def write_outputs(cfg, rows, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    summary = summarize(rows)
    _write_csv(os.path.join(out_dir, "detail.csv"), DETAIL_COLUMNS, rows)
    _write_csv(os.path.join(out_dir, "timing.csv"),
               ["power_dbm", "seed", "scheme", "wall_ms"], rows)
    _write_csv(os.path.join(out_dir, "summary.csv"), SUMMARY_COLUMNS, summary)
    _write_traces(out_dir, rows)
    with open(os.path.join(out_dir, "config.json"), "w", encoding="utf-8") as fh:
        json.dump(asdict(cfg), fh, indent=1, sort_keys=True)
    return summary


def run_sweep(cfg, out_dir=None):
    """Every (power, realization, scheme) of ``cfg``; files go to ``out_dir``."""
    out_dir = out_dir or cfg.output_dir
    os.makedirs(out_dir, exist_ok=True)     # fail early on an unwritable path
    tasks = [(pw, s, sc) for pw in cfg.power_grid_dbm for s in cfg.seeds()
             for sc in cfg.schemes]
    rows = _run_tasks(cfg, tasks)
    summary = write_outputs(cfg, rows, out_dir)
    return SweepResult(rows=rows, summary=summary, out_dir=out_dir)


def run_convergence(cfg, power_dbm=30.0, out_dir=None):
    """All schemes at one power on shared seeds; writes per-iteration traces."""
    out_dir = out_dir or cfg.output_dir
    os.makedirs(out_dir, exist_ok=True)
    tasks = [(float(power_dbm), s, sc) for s in cfg.seeds() for sc in cfg.schemes]
    rows = _run_tasks(cfg, tasks)
    summary = write_outputs(cfg, rows, out_dir)
    with open(os.path.join(out_dir, "convergence.csv"), "w", newline="",
              encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["power_dbm", "seed", "scheme", "iteration", "rate_u1", "eta"])
        for r in rows:
            for k, rate in enumerate(r["trace"], 1):
                w.writerow([_fmt(r["power_dbm"]), r["seed"], r["scheme"], k, _fmt(float(rate)),
                            _fmt(r["eta"])])
    return SweepResult(rows=rows, summary=summary, out_dir=out_dir)
