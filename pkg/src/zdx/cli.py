"""Command line interface: ``zdx <experiment> ...``."""

from __future__ import annotations

import argparse
import json
import sys

from .orchestrator import ConfigError, load_config, run, validate_config


def _num(s: str) -> int:
    f = float(s)
    if not f.is_integer():
        raise argparse.ArgumentTypeError(f"expected an integer count, got {s}")
    return int(f)


def _int_list(s: str) -> list:
    return [_num(x) for x in s.split(",") if x]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="master seed")
    common.add_argument("--workers", type=int, default=1, help="number of independent worker streams")
    common.add_argument("--out", help="output directory for manifest.json and CSV tables")
    common.add_argument("--config", help="JSON experiment config (overrides the other options)")

    ap = argparse.ArgumentParser(prog="zdx", description="Numerical experiments for Z^d-extensions and random walks.")
    sub = ap.add_subparsers(dest="kind", required=True)

    s = sub.add_parser("spectral", parents=[common], help="twisted operator decomposition")
    s.add_argument("--driver", help="driver JSON file or fixture name")
    s.add_argument("--grid", type=int, default=64)
    s.add_argument("--gap", type=float, default=0.05)
    s.add_argument("--llt", type=_int_list, default=[], help="comma-separated horizons for the LLT check")

    k = sub.add_parser("kernel", parents=[common], help="potential kernel g(p)")
    k.add_argument("--driver")
    k.add_argument("--p", type=int, nargs="+", action="append", help="a lattice point (repeatable)")
    k.add_argument("--method", default="both", choices=["series", "fourier", "both", "asymptotic"])
    k.add_argument("--tol", type=float, default=1e-8)

    e = sub.add_parser("excursion", parents=[common], help="local times and hitting laws")
    e.add_argument("--driver")
    e.add_argument("--p", type=int, nargs="+")
    e.add_argument("--samples", type=_num, default=10**6)
    e.add_argument("--cap", type=_num, default=10**9)
    e.add_argument("--exp-law", action="store_true")
    e.add_argument("--conditioned", type=_num, default=10**5)
    e.add_argument("--dp", action="store_true")
    e.add_argument("--tol", type=float, default=1e-3)
    e.add_argument("--engine", default="auto", choices=["auto", "reduced", "direct"])

    g = sub.add_parser("gk", parents=[common], help="Green-Kubo variances")
    g.add_argument("--driver")
    g.add_argument("--obs", help="observable JSON file")
    g.add_argument("--mode", default="extension", choices=["extension", "induced", "invariance"])
    g.add_argument("--tol", type=float, default=1e-6)
    g.add_argument("--excursions", type=_num, default=10**6)
    g.add_argument("--steps", type=_num, default=0)
    g.add_argument("--k-max", type=int, default=64)
    g.add_argument("--period", type=int, default=0)
    g.add_argument("--state-obs", type=float, nargs="+", default=[])

    li = sub.add_parser("limit", parents=[common], help="generalized CLT experiment")
    li.add_argument("--driver")
    li.add_argument("--obs")
    li.add_argument("--n", type=_int_list, default=[256, 1024, 4096, 16384])
    li.add_argument("--traj", type=_num, default=10**5)

    m = sub.add_parser("mlgm", parents=[common], help="MLGM sampler vs moment formula")
    m.add_argument("--gamma", type=float)
    m.add_argument("--samples", type=_num, default=10**6)

    su = sub.add_parser("suite", parents=[common], help="bundled checks")
    su.add_argument("name", nargs="?", default="paper-identities", choices=["paper-identities", "acceptance"])
    su.add_argument("--scale", type=float, default=1.0, help="sample-size multiplier")
    su.add_argument("--criteria", type=_int_list, default=[])
    return ap


def config_from_args(a: argparse.Namespace) -> dict:
    cfg: dict = {"kind": a.kind, "seed": a.seed, "workers": a.workers}
    if getattr(a, "driver", None):
        cfg["driver"] = a.driver
    if getattr(a, "obs", None):
        cfg["observable"] = a.obs
    if a.kind == "spectral":
        cfg["params"] = {"grid_size": a.grid, "gap": a.gap, "llt_n": a.llt}
    elif a.kind == "kernel":
        cfg["params"] = {"points": a.p or [], "method": a.method, "tol": a.tol}
    elif a.kind == "excursion":
        cfg["params"] = {"p": a.p or [], "samples": a.samples, "cap": a.cap, "exp_law": a.exp_law,
                         "conditioned": a.conditioned, "dp": a.dp, "tol": a.tol, "engine": a.engine}
    elif a.kind == "gk":
        cfg["params"] = {"mode": a.mode, "tol": a.tol, "n_excursions": a.excursions, "n_steps": a.steps,
                         "k_max": a.k_max, "block_period": a.period, "obs_on_states": a.state_obs}
    elif a.kind == "limit":
        cfg["params"] = {"n": a.n, "traj": a.traj}
    elif a.kind == "mlgm":
        cfg["params"] = {"samples": a.samples}
        if a.gamma is not None:
            cfg["params"]["gamma"] = a.gamma
    elif a.kind == "suite":
        cfg["params"] = {"name": a.name, "scale": a.scale, "criteria": a.criteria}
    return cfg


def main(argv=None) -> int:
    a = build_parser().parse_args(argv)
    try:
        cfg = load_config(a.config) if a.config else validate_config(config_from_args(a))
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    man = run(cfg, a.out)
    if cfg.kind == "suite":
        for c in man.outputs["criteria"]:
            status = "PASS" if c["passed"] else "FAIL"
            print(f"criterion {c['number']:2d} {status}: {c['title']}", file=sys.stderr)
    if not a.out and not cfg.out:
        print(json.dumps(man.to_json(), indent=2, sort_keys=True))
    else:
        print(json.dumps({"assertions": man.assertions, "passed": man.passed}, sort_keys=True))
    return 0 if man.passed else 1


if __name__ == "__main__":
    sys.exit(main())
