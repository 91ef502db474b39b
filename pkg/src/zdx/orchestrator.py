"""Experiment configuration, execution and result manifests."""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import asdict, dataclass, field
from importlib import metadata
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from . import criteria
from . import driver as drv
from .lattice import Observable, as_point, make_fp

KINDS = ("spectral", "kernel", "excursion", "gk", "limit", "mlgm", "suite")
SUITES = ("paper-identities", "acceptance")
FIXTURE_NAMES = {
    "lazy_1d": drv.lazy_1d,
    "lazy_2d": drv.lazy_2d,
    "pm1_walk": drv.pm1_walk,
    "markov_3state": drv.markov_3state,
    "cyclic_2": lambda: drv.cyclic_chain(2),
    "cyclic_3": lambda: drv.cyclic_chain(3),
}


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


# parameter schema per experiment: name -> (type, default); default None means required
SCHEMA: dict[str, dict[str, tuple]] = {
    "spectral": {"grid_size": (int, 64), "gap": (float, 0.05), "llt_n": (list, [])},
    "kernel": {"points": (list, None), "method": (str, "both"), "tol": (float, 1e-8), "grid_size": (int, 0)},
    "excursion": {"p": (list, None), "samples": (int, 10**6), "cap": (int, 10**9), "exp_law": (bool, False),
                  "conditioned": (int, 10**5), "dp": (bool, False), "tol": (float, 1e-3), "moments": (list, [1, 2, 3]),
                  "engine": (str, "auto")},
    "gk": {"mode": (str, "extension"), "tol": (float, 1e-6), "n_excursions": (int, 10**6), "n_steps": (int, 0),
           "k_max": (int, 64), "block_period": (int, 0), "obs_on_states": (list, [])},
    "limit": {"n": (list, [256, 1024, 4096, 16384]), "traj": (int, 10**5), "exact_second_moment": (bool, True)},
    "mlgm": {"gamma": (float, None), "samples": (int, 10**6)},
    "suite": {"name": (str, "paper-identities"), "scale": (float, 1.0), "criteria": (list, [])},
}
NEEDS_DRIVER = {"spectral", "kernel", "excursion", "gk", "limit"}
NEEDS_OBS = {"limit"}
ENUMS = {("kernel", "method"): ("series", "fourier", "both", "asymptotic"),
         ("gk", "mode"): ("extension", "induced", "invariance"),
         ("excursion", "engine"): ("auto", "reduced", "direct"),
         ("suite", "name"): SUITES}


@dataclass
class ExperimentConfig:
    kind: str
    driver: dict | None
    observable: dict | None
    params: dict
    seed: int = 0
    workers: int = 1
    out: str | None = None

    def driver_obj(self):
        return drv.driver_from_json(self.driver) if self.driver is not None else None

    def observable_obj(self) -> Observable | None:
        return Observable.from_json(self.observable) if self.observable is not None else None

    def to_json(self) -> dict:
        return asdict(self)


@dataclass
class ResultManifest:
    config: dict
    outputs: dict
    assertions: dict
    provenance: dict
    tables: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.assertions.values())

    def to_json(self) -> dict:
        return {"config": self.config, "outputs": self.outputs, "assertions": self.assertions,
                "passed": self.passed, "provenance": self.provenance}


def _load_ref(ref, path: str, base: Path):
    if isinstance(ref, Mapping):
        return dict(ref)
    if isinstance(ref, str):
        f = (base / ref) if not Path(ref).is_absolute() else Path(ref)
        if not f.exists():
            raise ConfigError(path, f"file {ref!r} does not exist")
        try:
            return json.loads(f.read_text())
        except json.JSONDecodeError as e:
            raise ConfigError(path, f"invalid JSON in {ref!r}: {e}") from None
    raise ConfigError(path, "expected an object, a fixture name or a file path")


def resolve_driver(ref, path: str = "driver", base: Path = Path(".")) -> dict:
    """Driver JSON from a fixture name, a file path or an inline object (validated)."""
    if isinstance(ref, str) and ref in FIXTURE_NAMES:
        return FIXTURE_NAMES[ref]().to_json()
    data = _load_ref(ref, path, base)
    kind = data.get("kind")
    if kind not in ("iid", "markov"):
        raise ConfigError(f"{path}.kind", f"unknown driver kind {kind!r} (expected 'iid' or 'markov')")
    required = ("d", "atoms") if kind == "iid" else ("transition", "step")
    for key in required:
        if key not in data:
            raise ConfigError(f"{path}.{key}", "missing")
    try:
        return drv.driver_from_json(data).to_json()
    except (ValueError, TypeError, KeyError) as e:
        raise ConfigError(path, str(e)) from None


def resolve_observable(ref, path: str = "observable", base: Path = Path(".")) -> dict:
    if isinstance(ref, list):
        ref = {"d": len(as_point(ref)), "fp": ref}
    data = _load_ref(ref, path, base)
    if "fp" in data:
        return make_fp(as_point(data["fp"])).to_json()
    if "d" not in data:
        raise ConfigError(f"{path}.d", "missing")
    if "support" not in data:
        raise ConfigError(f"{path}.support", "missing")
    try:
        return Observable.from_json(data).to_json()
    except (ValueError, TypeError) as e:
        raise ConfigError(f"{path}.support", str(e)) from None


def _coerce(value, typ, path: str):
    if typ is bool:
        if isinstance(value, bool):
            return value
        raise ConfigError(path, f"expected a boolean, got {value!r}")
    if typ is int:
        if isinstance(value, bool):
            raise ConfigError(path, f"expected an integer, got {value!r}")
        if isinstance(value, (int, np.integer)):
            return int(value)
        if isinstance(value, float) and value.is_integer():
            return int(value)
        if isinstance(value, str):
            try:
                f = float(value)
            except ValueError:
                raise ConfigError(path, f"expected an integer, got {value!r}") from None
            if f.is_integer():
                return int(f)
        raise ConfigError(path, f"expected an integer, got {value!r}")
    if typ is float:
        if isinstance(value, bool) or not isinstance(value, (int, float, str)):
            raise ConfigError(path, f"expected a number, got {value!r}")
        try:
            return float(value)
        except ValueError:
            raise ConfigError(path, f"expected a number, got {value!r}") from None
    if typ is list:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(path, f"expected a list, got {value!r}")
        return list(value)
    if typ is str:
        if not isinstance(value, str):
            raise ConfigError(path, f"expected a string, got {value!r}")
        return value
    return value


def validate_config(data: Mapping, base: Path | str = ".") -> ExperimentConfig:
    """Check a raw config mapping; errors name the offending field path."""
    base = Path(base)
    if not isinstance(data, Mapping):
        raise ConfigError("<root>", "config must be a JSON object")
    known = {"kind", "driver", "observable", "params", "seed", "workers", "out"}
    for key in data:
        if key not in known:
            raise ConfigError(key, "unknown field")
    kind = data.get("kind")
    if kind not in KINDS:
        raise ConfigError("kind", f"unknown experiment kind {kind!r} (expected one of {', '.join(KINDS)})")
    seed = _coerce(data.get("seed", 0), int, "seed")
    workers = _coerce(data.get("workers", 1), int, "workers")
    if workers < 1:
        raise ConfigError("workers", "must be at least 1")
    raw = data.get("params", {}) or {}
    if not isinstance(raw, Mapping):
        raise ConfigError("params", "expected an object")
    schema = SCHEMA[kind]
    params = {}
    for key in raw:
        if key not in schema:
            raise ConfigError(f"params.{key}", f"unknown parameter for {kind}")
    for key, (typ, default) in schema.items():
        if key in raw:
            params[key] = _coerce(raw[key], typ, f"params.{key}")
        elif default is None:
            raise ConfigError(f"params.{key}", "missing")
        else:
            params[key] = default
        allowed = ENUMS.get((kind, key))
        if allowed and params[key] not in allowed:
            raise ConfigError(f"params.{key}", f"{params[key]!r} not in {allowed}")
    driver = None
    if kind in NEEDS_DRIVER:
        if "driver" not in data:
            raise ConfigError("driver", "missing")
        driver = resolve_driver(data["driver"], "driver", base)
    elif "driver" in data:
        driver = resolve_driver(data["driver"], "driver", base)
    obs = None
    if "observable" in data:
        obs = resolve_observable(data["observable"], "observable", base)
    elif kind in NEEDS_OBS or (kind == "gk" and params["mode"] != "invariance"):
        raise ConfigError("observable", "missing")
    if driver is not None and obs is not None and obs["d"] != drv.driver_from_json(driver).d:
        raise ConfigError("observable.d", "dimension does not match the driver")
    if kind == "gk" and params["mode"] == "invariance":
        if driver["kind"] != "markov":
            raise ConfigError("driver.kind", "invariance mode needs a Markov driver")
        if params["block_period"] < 1:
            raise ConfigError("params.block_period", "must be a positive integer")
        if len(params["obs_on_states"]) != len(driver["transition"]):
            raise ConfigError("params.obs_on_states", "needs one value per state")
    if kind == "mlgm" and not 0.0 <= params["gamma"] <= 1.0:
        raise ConfigError("params.gamma", "must lie in [0, 1]")
    if kind == "suite":
        for i, k in enumerate(params["criteria"]):
            if k not in criteria.CRITERIA:
                raise ConfigError(f"params.criteria[{i}]", f"no criterion {k!r}")
    return ExperimentConfig(kind, driver, obs, params, seed, workers, data.get("out"))


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError("<file>", f"{path} does not exist")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError("<file>", f"invalid JSON: {e}") from None
    return validate_config(data, path.parent)


# runners: each returns (outputs, assertions, tables)

def _run_spectral(cfg: ExperimentConfig):
    from .spectral import decompose, llt_check

    d = cfg.driver_obj()
    sd = decompose(d, cfg.params["grid_size"], cfg.params["gap"], fit=True)
    res = sd.hypothesis_residuals()
    out = {"spectral": sd.report(), "residuals": res}
    rows = []
    for n in cfg.params["llt_n"]:
        r = llt_check(d, int(n), params=sd.params)
        rows.append(r)
    out["llt"] = rows
    asserts = {"decomposition_residual": max(res.values()) < 1e-8,
               "aperiodicity_agrees_with_lattice": bool(sd.aperiodic) == bool(sd.lattice.aperiodic)}
    return out, asserts, {"llt": rows} if rows else {}


def _run_kernel(cfg: ExperimentConfig):
    from .kernel import g_asymptotic, g_fourier_many, g_series_many

    d = cfg.driver_obj()
    pts = [as_point(p, d.d) for p in cfg.params["points"]]
    method = cfg.params["method"]
    rows = {p: {"p": " ".join(map(str, p))} for p in pts}
    asserts = {}
    if method in ("series", "both"):
        for e in g_series_many(d, pts, cfg.params["tol"]):
            rows[e.p].update(g_series=e.value, series_error=e.error_bound, series_converged=e.converged)
    if method in ("fourier", "both"):
        for e in g_fourier_many(d, pts, cfg.params["grid_size"] or None):
            rows[e.p].update(g_fourier=e.value, fourier_error=e.error_bound, fourier_converged=e.converged)
    if method == "both":
        asserts["series_vs_fourier"] = all(
            abs(r["g_series"] - r["g_fourier"]) <= r["series_error"] + r["fourier_error"] for r in rows.values())
    if method == "asymptotic":
        from .mlgm import limit_params

        params = limit_params(d)
        for p in pts:
            rows[p]["g_asymptotic"] = g_asymptotic(params, None, p).value
    table = list(rows.values())
    return {"kernel": table}, asserts, {"kernel": table}


def _run_excursion(cfg: ExperimentConfig):
    from .excursion import alpha_dp, conditioned_samples, exp_law_test, hit_stats

    d = cfg.driver_obj()
    P = cfg.params
    p = as_point(P["p"], d.d)
    hs = hit_stats(d, p, P["samples"], cfg.seed, P["moments"], P["engine"], cfg.workers, P["cap"])
    out = {"hit_stats": hs.to_json()}
    asserts = {"censoring_below_flag": hs.reliable,
               "kac_mean_within_3se": abs(hs.kac_mean - 1) <= 3 * hs.kac_se}
    tables = {}
    if P["exp_law"]:
        rep = exp_law_test(d, p, P["conditioned"], cfg.seed, cfg.workers, with_dp=d.kind == "iid")
        out["exp_law"] = rep
        asserts["tail_kappa_positive"] = rep["tail_fit"][1] > 0
        batch, _ = conditioned_samples(d, p, P["conditioned"], cfg.seed, cfg.workers)
        tables["conditioned_Np"] = [{"N_p": int(v)} for v in batch.counts(p)]
    if P["dp"]:
        br = alpha_dp(d, p, tol=P["tol"])
        out["alpha_dp"] = {"lo": br.lo, "hi": br.hi, "box_radius": br.box_radius, "method": br.method,
                           "converged": br.converged}
        lo, hi = hs.alpha_ci
        asserts["alpha_ci_meets_dp_bracket"] = (1 / hi <= br.hi) and (1 / lo >= br.lo) if hi < math.inf else True
    return out, asserts, tables


def _run_gk(cfg: ExperimentConfig):
    from .greenkubo import gk_extension, gk_induced, gk_subset_invariance

    d = cfg.driver_obj()
    P = cfg.params
    if P["mode"] == "invariance":
        r = gk_subset_invariance(d, P["block_period"], P["obs_on_states"])
        return {"invariance": r}, {"equality_1e-8": abs(r["difference"]) <= 1e-8}, {}
    obs = cfg.observable_obj()
    if P["mode"] == "extension":
        r = gk_extension(d, obs, P["tol"])
        table = [{"k": k, "inner_sum": float(v)} for k, v in enumerate(r.per_k_terms)]
        return {"gk": r.to_json()}, {"converged": r.converged}, {"gk_terms": table}
    r = gk_induced(d, obs, P["n_excursions"], P["k_max"], cfg.seed, cfg.workers, n_steps=P["n_steps"] or None)
    ext = gk_extension(d, obs, P["tol"])
    out = {"gk_induced": r.to_json(), "gk_extension": ext.value}
    return out, {"induced_within_3ci": abs(r.value - ext.value) <= 3 * r.ci + ext.truncation_bound}, {}


def _run_limit(cfg: ExperimentConfig):
    from .mlgm import clt_experiment, exact_second_moment

    d = cfg.driver_obj()
    obs = cfg.observable_obj()
    P = cfg.params
    rep = clt_experiment(d, obs, [int(n) for n in P["n"]], P["traj"], cfg.seed, cfg.workers)
    rows = rep["rows"]
    if P["exact_second_moment"] and d.kind == "iid":
        for row in rows:
            if d.d == 1 or row["n"] <= 512:
                e2 = exact_second_moment(d, obs, row["n"])
                row["exact_m2_ratio"] = e2 / (row["normalizer"] ** 2 * rep["sigma_gk2"])
    m3 = [abs(r["m3"]) for r in rows]
    return rep, {"third_moment_decreasing": all(a > b for a, b in zip(m3, m3[1:]))}, {"limit": rows}


def _run_mlgm(cfg: ExperimentConfig):
    from .mlgm import sampler_report

    r = sampler_report(cfg.params["gamma"], cfg.params["samples"], cfg.seed)
    rows = [{"m": m, **v} for m, v in r["moments"].items()]
    asserts = {f"m{m}_within_2pct": abs(v["relative_error"]) <= 0.02
               for m, v in r["moments"].items() if v["relative_error"] is not None}
    return r, asserts, {"mlgm": rows}


def _run_suite(cfg: ExperimentConfig):
    P = cfg.params
    if P["name"] == "paper-identities":
        results = criteria.paper_identities(cfg.seed, P["scale"], cfg.workers)
    else:
        results = criteria.run_all(cfg.seed, P["scale"], cfg.workers, P["criteria"] or None)
    out = {"criteria": [r.to_json() for r in results]}
    asserts = {f"criterion_{r.number}": r.passed for r in results}
    table = [{"criterion": r.number, "check": c.name, "passed": c.passed, "target": c.target}
             for r in results for c in r.checks]
    return out, asserts, {"suite": table}


RUNNERS = {"spectral": _run_spectral, "kernel": _run_kernel, "excursion": _run_excursion, "gk": _run_gk,
           "limit": _run_limit, "mlgm": _run_mlgm, "suite": _run_suite}


def to_jsonable(obj: Any):
    if isinstance(obj, Mapping):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    return obj


def table_csv(rows: list) -> str:
    """CSV text with a header from the union of keys (first-seen order); floats in repr form."""
    cols: list = []
    for r in rows:
        for k in r:
            if k not in cols:
                cols.append(k)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([_cell(r.get(k, "")) for k in cols])
    return buf.getvalue()


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (list, tuple)):
        return " ".join(_cell(x) for x in v)
    return v


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def run(cfg: ExperimentConfig, out_dir: str | Path | None = None) -> ResultManifest:
    """Execute the configured experiment; write manifest.json and CSV tables when ``out_dir`` is given."""
    t0 = time.perf_counter()
    outputs, asserts, tables = RUNNERS[cfg.kind](cfg)
    wall = time.perf_counter() - t0
    man = ResultManifest(
        config=to_jsonable(cfg.to_json()),
        outputs=to_jsonable(outputs),
        assertions={k: bool(v) for k, v in asserts.items()},
        provenance={"version": _version(), "seed": cfg.seed, "workers": cfg.workers, "wall_time_s": wall,
                    "reduction_order_sensitive": ["outputs"] if cfg.workers > 1 else []},
        tables=tables,
    )
    target = out_dir or cfg.out
    if target:
        write_manifest(man, target)
    return man


def write_manifest(man: ResultManifest, out_dir: str | Path) -> list:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = [out / "manifest.json"]
    files[0].write_text(json.dumps(man.to_json(), indent=2, sort_keys=True) + "\n")
    for name, rows in man.tables.items():
        f = out / f"{name}.csv"
        f.write_text(table_csv(rows))
        files.append(f)
    return files
