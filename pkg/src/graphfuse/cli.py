"""Command-line entry point: ``graphfuse hetero-demo|opm-demo|phase-demo|fit|render``.

Configuration is a flat set of ``section.key = value`` entries. Defaults come
from the command's config dataclass, then an optional ``--config`` file, then
``--set key=value`` pairs and the dedicated flags. Unknown keys are rejected.
Every run writes the fully resolved configuration to ``config_resolved.txt``
in its output directory.

Input formats for ``fit``:
  long-form dataset  CSV ``node,row,y,x_1..x_m`` (one row per observation)
  shared design      directory with ``responses.csv`` (n x d) and ``design.csv`` (d x m), no headers
  graph              edge list CSV ``i,j`` or layout CSV ``id,x,y[,z]`` plus k-NN settings

Exit codes: 0 success, 2 configuration error, 3 numerical failure, 4 I/O or input-file error.
"""
from __future__ import annotations

import argparse
import logging
import math
import sys
from dataclasses import dataclass, field, fields, is_dataclass
from pathlib import Path

import numpy as np

from . import io, render
from .errors import (ConfigError, GraphFuseError, NumericalError, ParseError, SingularDesignError,
                     SolverError)
from .experiments import (ChainSettings, HeteroConfig, OpmConfig, PhaseConfig, run_hetero_demo,
                          run_opm_demo, run_phase_demo)
from .gibbs import run_chain, summarize
from .graph import FIRST_DIFFERENCE, build_knn_graph, build_operator
from .model import Hyperparams
from .sparse import SolverOptions

logger = logging.getLogger("graphfuse")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4


@dataclass
class FitConfig:
    data: str = ""
    shared_dir: str = ""
    edges: str = ""
    layout: str = ""
    k: int = 1
    radius: float = math.inf
    operator: str = FIRST_DIFFERENCE
    store_draws: bool = False
    hyper: Hyperparams = field(default_factory=Hyperparams)
    chain: ChainSettings = field(default_factory=ChainSettings)
    seed: int = 0
    threads: int = 1


@dataclass
class RenderConfig:
    values: str = ""
    column: str = ""
    kind: str = render.SCALAR
    height: int = 0
    width: int = 0
    layout: str = ""
    output: str = "map.png"
    scale: int = 1
    seed: int = 0
    threads: int = 1


COMMANDS = {
    "hetero-demo": ("hetero", HeteroConfig),
    "opm-demo": ("opm", OpmConfig),
    "phase-demo": ("phase", PhaseConfig),
    "fit": ("fit", FitConfig),
    "render": ("render", RenderConfig),
}

# nested dataclass fields and the section they live in
_NESTED = {"hyper": "hyper", "chain": "sampler", "solver": "solver"}
_RUN_KEYS = {"seed", "threads"}

FULL_SCALE = {
    "hetero": {"sampler.iterations": 15000, "sampler.burn_in": 5000},
    "opm": {"opm.height": 710, "opm.width": 710, "sampler.iterations": 10500, "sampler.burn_in": 500},
    "phase": {"sampler.iterations": 10500, "sampler.burn_in": 500},
}


# -- flat configuration ----------------------------------------------------------------------------


def _flatten(obj, section: str, out: dict, types: dict):
    for f in fields(obj):
        value = getattr(obj, f.name)
        if f.name in _NESTED and is_dataclass(value):
            _flatten(value, _NESTED[f.name], out, types)
            continue
        key = f"run.{f.name}" if f.name in _RUN_KEYS else f"{section}.{f.name}"
        out[key] = value
        types[key] = str(f.type)


def _build(cls, section: str, flat: dict):
    kwargs = {}
    for f in fields(cls):
        if f.name in _NESTED:
            sub_cls = {"hyper": Hyperparams, "chain": ChainSettings, "solver": SolverOptions}[f.name]
            kwargs[f.name] = _build(sub_cls, _NESTED[f.name], flat)
            continue
        key = f"run.{f.name}" if f.name in _RUN_KEYS else f"{section}.{f.name}"
        if key in flat:
            kwargs[f.name] = flat[key]
    return cls(**kwargs)


def defaults_for(command: str):
    section, cls = COMMANDS[command]
    flat, types = {}, {}
    _flatten(cls(), section, flat, types)
    flat["run.out"] = "out"
    types["run.out"] = "str"
    flat["run.seed"] = None
    types["run.seed"] = "int | None"
    return flat, types


def _coerce(key: str, raw, typ: str):
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    if text.lower() in ("none", "null", "") and ("None" in typ or typ == "str"):
        return None if "None" in typ else ""
    try:
        if typ.startswith("tuple"):
            parts = [p.strip() for p in text.strip("()[]").split(",") if p.strip()]
            return tuple(_scalar(p) for p in parts)
        if "bool" in typ:
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if "int" in typ and "float" not in typ:
            return int(text)
        if "float" in typ:
            return float(text)
        return text
    except ValueError:
        raise ConfigError(f"invalid value {raw!r} for {key} (expected {typ})") from None


def _scalar(text: str):
    for kind in (int, float):
        try:
            return kind(text)
        except ValueError:
            pass
    return text


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """Parse flat ``section.key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'section.key = value', got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if "." not in key:
            raise ConfigError(f"{source}:{lineno}: key {key!r} must have the form section.key")
        out[key] = value
    return out


def resolve_config(command: str, file_values: dict, overrides: dict):
    flat, types = defaults_for(command)
    section = COMMANDS[command][0]
    if overrides.pop("__full_scale__", False):
        for k, v in FULL_SCALE.get(section, {}).items():
            flat[k] = v
    for source in (file_values, overrides):
        for key, raw in source.items():
            if key not in flat:
                raise ConfigError(f"unknown configuration key {key!r} for command {command!r}")
            flat[key] = _coerce(key, raw, types[key])
    return flat


def format_config(flat: dict) -> str:
    def show(v):
        if v is None:
            return "none"
        if isinstance(v, tuple):
            return ", ".join(show(x) for x in v)
        if isinstance(v, bool):
            return "true" if v else "false"
        if isinstance(v, float):
            return repr(v)
        return str(v)

    return "".join(f"{k} = {show(flat[k])}\n" for k in sorted(flat))


# -- commands ------------------------------------------------------------------------------------------


def _require_file(path: str, what: str):
    if not path:
        return None
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"{what} not found: {p}")
    return p


def _load_fit_inputs(cfg: FitConfig):
    if bool(cfg.data) == bool(cfg.shared_dir):
        raise ConfigError("fit needs exactly one of fit.data (long-form CSV) or fit.shared_dir")
    if bool(cfg.edges) == bool(cfg.layout):
        raise ConfigError("fit needs exactly one of fit.edges or fit.layout")
    if cfg.data:
        data = io.read_dataset_long(_require_file(cfg.data, "dataset"))
    else:
        d = Path(cfg.shared_dir)
        _require_file(str(d / "responses.csv"), "responses")
        _require_file(str(d / "design.csv"), "design")
        data = io.read_dataset_shared(d)
    if cfg.edges:
        graph = io.read_edges(_require_file(cfg.edges, "edge list"), data.n)
    else:
        loc = io.read_layout(_require_file(cfg.layout, "layout"))
        if loc.shape[0] != data.n:
            raise ConfigError(f"layout has {loc.shape[0]} nodes but dataset has {data.n}")
        graph = build_knn_graph(loc, cfg.k, cfg.radius)
    return data, graph


def cmd_fit(cfg: FitConfig, out: Path):
    data, graph = _load_fit_inputs(cfg)
    op = build_operator(graph, cfg.operator)
    sc = cfg.chain.config(cfg.seed, 0, store_draws=cfg.store_draws)
    output = run_chain(data, op, cfg.hyper, sc)
    s = summarize(output)
    io.write_summary(out / "summary.csv", s)
    io.write_traces(out / "traces.csv", output)
    if op.kind == FIRST_DIFFERENCE:
        io.write_edge_table(out / "tau.csv", graph, {"tau2_mean": s.tau2_mean})
    else:
        io.write_node_table(out / "tau.csv", {"tau2_mean": s.tau2_mean})
    io._write(out / "estimates.csv", ["quantity", "mean", "sd"],
              [["sigma", io._fmt(s.sigma_mean), io._fmt(s.sigma_sd)],
               ["lambda", io._fmt(s.lambda_mean), io._fmt(s.lambda_sd)]])
    if cfg.store_draws:
        io.write_draws(out / "draws.bin", output.draws)
    logger.info("fit: n=%d m=%d p=%d sigma=%.4g lambda=%.4g", data.n, data.m, op.p, s.sigma_mean, s.lambda_mean)


def cmd_render(cfg: RenderConfig, out: Path):
    table = io.read_node_table(_require_file(cfg.values, "values table"))
    if cfg.column not in table:
        raise ConfigError(f"column {cfg.column!r} not in {cfg.values} (have {sorted(table)})")
    values = table[cfg.column]
    target = out / cfg.output
    if cfg.layout:
        loc = io.read_layout(_require_file(cfg.layout, "layout"))
        render.render_scatter(values, loc, target, cfg.kind)
    else:
        if cfg.height * cfg.width != values.size:
            raise ConfigError(f"render.height x render.width must equal {values.size}")
        render.render_lattice(values, cfg.height, cfg.width, target, cfg.kind, cfg.scale)
    logger.info("wrote %s", target)


def _run_command(command: str, cfg, out: Path):
    if command == "hetero-demo":
        res = run_hetero_demo(cfg, out)
        for mode in cfg.noise_modes:
            logger.info("%s: median rmse robust=%.4f bnl=%.4f", mode, res.median("robust", mode),
                        res.median("bnl", mode))
    elif command == "opm-demo":
        res = run_opm_demo(cfg, out)
        s = res.summary
        logger.info("angular error (deg): %s", ", ".join(f"{k}={v:.3f}" for k, v in res.errors.items()))
        logger.info("sigma = %.4f +- %.4f, lambda = %.3f +- %.3f, gamma = %.3g",
                    s.sigma_mean, s.sigma_sd, s.lambda_mean, s.lambda_sd, res.gamma)
    elif command == "phase-demo":
        res = run_phase_demo(cfg, out)
        r0 = res.replications[0]
        logger.info("raw error %.2f deg; test errors: %s", r0.raw_error,
                    ", ".join(f"{k}={v:.2f}" for k, v in r0.test_error.items()))
    elif command == "fit":
        cmd_fit(cfg, out)
    elif command == "render":
        cmd_render(cfg, out)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="graphfuse", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, formatter_class=argparse.RawDescriptionHelpFormatter)
        p.add_argument("--config", help="flat 'section.key = value' config file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override any configuration key (repeatable)")
        p.add_argument("--seed", help="random seed (u64); drawn from entropy and logged when absent")
        p.add_argument("--out", help="output directory")
        p.add_argument("--threads", help="worker processes for replications (1 = fully deterministic order)")
        p.add_argument("--iterations", help="total sweeps including burn-in")
        p.add_argument("--burn-in", dest="burn_in")
        p.add_argument("--thin")
        p.add_argument("--fix-lambda", dest="fix_lambda")
        p.add_argument("--fix-nu", dest="fix_nu", help="pin every nu_i (1 gives the Bayesian network lasso)")
        p.add_argument("--empirical-bayes", action="store_true", help="EM/Gibbs update for lambda")
        p.add_argument("--solver", choices=["direct", "cg"])
        p.add_argument("--cg-tol", dest="cg_tol")
        p.add_argument("--cg-maxit", dest="cg_maxit")
        p.add_argument("--full-scale", action="store_true",
                       help="full-size maps and chain lengths instead of desk-scale defaults")
        p.add_argument("-v", "--verbose", action="store_true")
        if name == "fit":
            p.add_argument("--data", help="long-form dataset CSV node,row,y,x_1..x_m")
            p.add_argument("--shared-dir", dest="shared_dir", help="directory with responses.csv and design.csv")
            p.add_argument("--edges", help="edge list CSV i,j")
            p.add_argument("--layout", help="layout CSV id,x,y[,z] for a whitened k-NN graph")
            p.add_argument("--k")
            p.add_argument("--radius")
            p.add_argument("--operator", choices=["first-difference", "trend", "laplacian"])
        if name == "render":
            p.add_argument("--values", help="node-keyed CSV")
            p.add_argument("--column")
            p.add_argument("--kind", choices=list(render.KINDS))
            p.add_argument("--height")
            p.add_argument("--width")
            p.add_argument("--layout")
            p.add_argument("--output")
    return parser


_FLAG_KEYS = {
    "seed": "run.seed", "out": "run.out", "threads": "run.threads", "iterations": "sampler.iterations",
    "burn_in": "sampler.burn_in", "thin": "sampler.thin", "fix_lambda": "sampler.fix_lambda",
    "fix_nu": "sampler.fix_nu", "solver": "solver.method", "cg_tol": "solver.tol", "cg_maxit": "solver.maxiter",
}
_COMMAND_FLAGS = {
    "fit": ["data", "shared_dir", "edges", "layout", "k", "radius", "operator"],
    "render": ["values", "column", "kind", "height", "width", "layout", "output"],
}


def _overrides(args) -> dict:
    section = COMMANDS[args.command][0]
    out = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    for attr, key in _FLAG_KEYS.items():
        value = getattr(args, attr, None)
        if value is not None:
            out[key] = value
    if args.empirical_bayes:
        out["sampler.empirical_bayes"] = "true"
    for attr in _COMMAND_FLAGS.get(args.command, []):
        value = getattr(args, attr, None)
        if value is not None:
            out[f"{section}.{attr}"] = value
    if args.full_scale:
        out["__full_scale__"] = True
    return out


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        file_values = {}
        if args.config:
            path = Path(args.config)
            if not path.exists():
                raise ConfigError(f"config file not found: {path}")
            file_values = parse_config_text(path.read_text(), str(path))
        flat = resolve_config(args.command, file_values, _overrides(args))
        if flat["run.seed"] is None:
            flat["run.seed"] = int(np.random.SeedSequence().entropy % (1 << 63))
            logger.info("no seed given; using seed %d", flat["run.seed"])
        section, cls = COMMANDS[args.command]
        try:
            cfg = _build(cls, section, flat)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        out = Path(flat["run.out"])
        out.mkdir(parents=True, exist_ok=True)
        (out / "config_resolved.txt").write_text(format_config(flat))
        _run_command(args.command, cfg, out)
    except ConfigError as exc:
        logger.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except (SolverError, NumericalError, SingularDesignError) as exc:
        logger.error("numerical failure: %s", exc)
        return EXIT_NUMERICAL
    except (ParseError, OSError) as exc:
        logger.error("input/output error: %s", exc)
        return EXIT_IO
    except GraphFuseError as exc:
        logger.error("configuration error: %s", exc)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
