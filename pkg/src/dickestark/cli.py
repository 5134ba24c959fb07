"""Command-line driver for parameter sweeps that emit CSV figure data.

Every subcommand writes one CSV with a ``#`` metadata block, a header row
and one row per grid point in deterministic grid order.  A point that
fails gets an explicit error row and the process exits nonzero.

Configuration precedence: built-in defaults < ``--config`` YAML file <
command-line flags.  Config keys are the flag names with dashes replaced by
underscores.
"""

from __future__ import annotations

import argparse
import itertools
import json
import os
import sys
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import yaml

from . import __version__
from .cache import CacheCorruptionError, DecompositionCache, ENV_VAR
from .core import ModelParams, NumericalRangeError
from .dynamics import (DissipatorSpec, build_dressed_dissipator, closed_photon_dynamics, evolve_master,
                       restricted_gibbs, steady_state, trace_distance)
from .meanfield import critical_coupling, critical_coupling_thermal, order_parameter
from .observables import (g2_zero, ground_mean_photon, negativity, product_density_matrix,
                          reduced_atomic_state, spin_squeezing, thermal_decomposition)
from .spectrum import STATS, SpectrumError, converged_spectrum, dcs_decomposition, eigendecompose
from .hamiltonian import build_dfs_hamiltonian

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CONVERGENCE = 3
EXIT_CACHE = 4
EXIT_NUMERICAL = 5

DEFAULTS = {
    "omega": 1.0,
    "delta": 1.0,
    "k_trunc": 50,
    "alpha": 0.001,
    "cutoff": 10.0,
    "weight_cut": 1e-12,
    "threads": 1,
    "n_atoms": [8],
    "lam": [0.5],
    "stark_u": [0.0],
    "temperature": [0.1],
    "n_levels": 1,
    "rel_tol": 1e-4,
    "dfs_truncations": [],
    "times": "0:20:201",
    "levels": None,
    "observables": ["negativity", "squeezing"],
    "allow_large": False,
    "strict_cache": False,
}

PHASE_DIAGRAM_DEFAULTS = {"lam": "0:1:60", "stark_u": "-1.5:1.5:60", "n_atoms": [32]}

GRID_KEYS = ("n_atoms", "lam", "stark_u", "temperature", "dfs_truncations")


class ConfigError(ValueError):
    pass


def parse_grid(value, integer: bool = False) -> list:
    """Grid from a list, a scalar, ``"a,b,c"`` or ``"start:stop:num"`` (inclusive linspace)."""
    if isinstance(value, (list, tuple)):
        items = list(value)
    elif isinstance(value, str) and ":" in value:
        parts = value.split(":")
        if len(parts) != 3:
            raise ConfigError(f"grid {value!r} must be start:stop:num")
        items = np.linspace(float(parts[0]), float(parts[1]), int(parts[2])).tolist()
    elif isinstance(value, str):
        items = [v for v in value.split(",") if v.strip()]
    else:
        items = [value]
    try:
        return [int(v) for v in items] if integer else [float(v) for v in items]
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad grid entry in {value!r}") from exc


@dataclass
class SweepSpec:
    """Resolved sweep configuration."""

    kind: str
    settings: dict
    out: str | None = None
    cache_dir: str | None = None
    grids: dict = field(default_factory=dict)

    def __post_init__(self):
        for key in GRID_KEYS:
            self.grids[key] = parse_grid(self.settings[key], integer=key in ("n_atoms", "dfs_truncations"))
        for key in ("n_atoms", "lam", "stark_u", "temperature"):
            if not self.grids[key]:
                raise ConfigError(f"grid {key} is empty")
        if any(t < 0 for t in self.grids["temperature"]):
            raise ConfigError("temperatures must be >= 0")
        for n, lam, u in itertools.product(self.grids["n_atoms"], self.grids["lam"], self.grids["stark_u"]):
            self.params(n, lam, u)
        if self.kind == "phase-diagram" and max(self.grids["n_atoms"]) > 32 and not self.settings["allow_large"]:
            raise ConfigError("phase diagrams above N=32 need --allow-large")

    def params(self, n_atoms, lam, stark_u) -> ModelParams:
        try:
            return ModelParams(int(n_atoms), float(lam), float(stark_u),
                               omega=float(self.settings["omega"]), delta=float(self.settings["delta"]))
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from exc


def fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".15g")
    return str(x)


# ---------------------------------------------------------------- point tasks

def _meanfield_rows(spec, cache):
    rows = []
    lam_given = "lam" in spec.settings.get("_explicit", ())
    for u, T in itertools.product(spec.grids["stark_u"], spec.grids["temperature"]):
        base = spec.params(1, 0.0, u)
        cp = critical_coupling(base) if T == 0 else critical_coupling_thermal(base, T)
        if not lam_given:
            rows.append(lambda u=u, T=T, cp=cp: [u, T, cp.lambda_c, cp.defined])
            continue
        for lam in spec.grids["lam"]:
            def task(u=u, T=T, lam=lam, cp=cp):
                alpha = order_parameter(base.replace(lam=lam), T) if T > 0 else None
                return [u, T, lam, cp.lambda_c, cp.defined, alpha]
            rows.append(task)
    cols = ["stark_u", "temperature", "lambda_c", "defined"]
    if lam_given:
        cols = ["stark_u", "temperature", "lam", "lambda_c", "defined", "order_parameter"]
    return cols, rows


def _spectrum_rows(spec, cache):
    s = spec.settings
    n_levels = int(s["n_levels"])
    cols = ["basis", "truncation", "n_atoms", "stark_u", "lam", "level", "energy", "rel_change"]
    tasks, keys = [], []
    for n, u, lam in itertools.product(spec.grids["n_atoms"], spec.grids["stark_u"], spec.grids["lam"]):
        p = spec.params(n, lam, u)

        def dcs(p=p):
            if s.get("_fixed_k"):
                d = dcs_decomposition(p, int(s["k_trunc"]), n_levels=n_levels, cache=cache)
                err = None
            else:
                d = converged_spectrum(p, n_levels=n_levels, rel_tol=float(s["rel_tol"]),
                                       keep_levels=n_levels, cache=cache)
                err = d.achieved_rel_error
            return [["dcs", d.truncation, p.n_atoms, p.stark_u, p.lam, i, e, err]
                    for i, e in enumerate(d.eigenvalues[:n_levels])]
        tasks.append(dcs)
        keys.append(["dcs", None, n, u, lam])
        for ntr in spec.grids["dfs_truncations"]:
            def dfs(p=p, ntr=ntr):
                d = eigendecompose(build_dfs_hamiltonian(p, ntr), n_levels=n_levels)
                return [["dfs", ntr, p.n_atoms, p.stark_u, p.lam, i, e, None]
                        for i, e in enumerate(d.eigenvalues[:n_levels])]
            tasks.append(dfs)
            keys.append(["dfs", ntr, n, u, lam])
    return cols, tasks, keys


def _photon_rows(spec, cache):
    s = spec.settings
    cols = ["n_atoms", "stark_u", "lam", "photon_per_atom", "ground_energy", "k_trunc", "energy_rel_change",
            "photon_change"]
    tasks = []
    for n, u, lam in itertools.product(spec.grids["n_atoms"], spec.grids["stark_u"], spec.grids["lam"]):
        p = spec.params(n, lam, u)

        def task(p=p):
            v, cert = ground_mean_photon(p, rel_tol=float(s["rel_tol"]), cache=cache, details=True)
            return [p.n_atoms, p.stark_u, p.lam, v, cert["ground_energy"], cert["k_trunc"],
                    cert["energy_rel_change"], cert["photon_change"]]
        tasks.append(task)
    return cols, tasks


def _dynamics_rows(spec, cache):
    s = spec.settings
    times = parse_grid(s["times"])
    cols = ["n_atoms", "stark_u", "lam", "time", "photon_per_atom", "norm_deficit"]
    tasks, keys = [], []
    for n, u, lam in itertools.product(spec.grids["n_atoms"], spec.grids["stark_u"], spec.grids["lam"]):
        p = spec.params(n, lam, u)

        def task(p=p):
            d = dcs_decomposition(p, int(s["k_trunc"]), cache=cache)
            res = closed_photon_dynamics(p, times, decomp=d)
            return [[p.n_atoms, p.stark_u, p.lam, t, v, res.deficit] for t, v in zip(times, res.photon)]
        tasks.append(task)
        keys.append([n, u, lam])
    return cols, tasks, keys, len(times)


def _thermal_points(spec):
    return itertools.product(spec.grids["n_atoms"], spec.grids["stark_u"], spec.grids["temperature"],
                             spec.grids["lam"])


def _g2_rows(spec, cache):
    s = spec.settings
    cols = ["n_atoms", "stark_u", "temperature", "lam", "g2", "levels", "certificate_levels", "relative_change"]
    tasks = []
    for n, u, T, lam in _thermal_points(spec):
        p = spec.params(n, lam, u)

        def task(p=p, T=T):
            d = thermal_decomposition(p, T, int(s["k_trunc"]), float(s["weight_cut"]), cache=cache)
            v, cert = g2_zero(d, p, T, level_cut=s["levels"], weight_cut=float(s["weight_cut"]), details=True)
            return [p.n_atoms, p.stark_u, T, p.lam, v, cert["levels"], cert["certificate_levels"],
                    cert["relative_change"]]
        tasks.append(task)
    return cols, tasks


def _stats_rows(spec, cache):
    s = spec.settings
    obs = s["observables"]
    obs = obs.split(",") if isinstance(obs, str) else list(obs)
    unknown = set(obs) - {"negativity", "squeezing"}
    if unknown:
        raise ConfigError(f"unknown observables {sorted(unknown)}")
    cols = ["n_atoms", "stark_u", "temperature", "lam", "negativity", "xi2", "retained_levels", "n_trunc"]
    tasks = []
    for n, u, T, lam in _thermal_points(spec):
        p = spec.params(n, lam, u)

        def task(p=p, T=T):
            wc = float(s["weight_cut"])
            d = thermal_decomposition(p, T, int(s["k_trunc"]), wc, cache=cache)
            neg = xi2 = None
            meta = {}
            if "negativity" in obs:
                rho = product_density_matrix(d, p, T, wc)
                neg = negativity(rho)
                meta = rho.meta
            if "squeezing" in obs:
                rho_a = reduced_atomic_state(d, p, T, wc)
                xi2 = spin_squeezing(rho_a, p.n_atoms)
                meta = meta or rho_a.meta
            return [p.n_atoms, p.stark_u, T, p.lam, neg, xi2, meta["retained_levels"], meta["n_trunc"]]
        tasks.append(task)
    return cols, tasks


def _relax_rows(spec, cache):
    s = spec.settings
    times = parse_grid(s["times"])
    cols = ["n_atoms", "stark_u", "temperature", "lam", "time", "trace_distance_to_gibbs", "trace",
            "min_eigenvalue", "steady_state_distance"]
    tasks, keys = [], []
    for n, u, T, lam in _thermal_points(spec):
        p = spec.params(n, lam, u)

        def task(p=p, T=T):
            d = dcs_decomposition(p, int(s["k_trunc"]), cache=cache)
            diss: DissipatorSpec = build_dressed_dissipator(d, p, T, alpha=float(s["alpha"]),
                                                           cutoff=float(s["cutoff"]), n_levels=s["levels"])
            gibbs = restricted_gibbs(diss, T)
            ss_dist = trace_distance(steady_state(diss), gibbs)
            rho0 = np.zeros((diss.n_levels, diss.n_levels))
            rho0[0, 0] = 1.0
            traj = evolve_master(rho0, diss, times)
            return [[p.n_atoms, p.stark_u, T, p.lam, t, trace_distance(r, gibbs), float(np.trace(r).real),
                     float(np.linalg.eigvalsh(r).min()), ss_dist] for t, r in zip(times, traj.states)]
        tasks.append(task)
        keys.append([n, u, T, lam])
    return cols, tasks, keys, len(times)


# ---------------------------------------------------------------- driver

def _classify(exc) -> int:
    if isinstance(exc, CacheCorruptionError):
        return EXIT_CACHE
    if isinstance(exc, (SpectrumError,)) or type(exc).__name__ in ("TruncationError", "BracketError"):
        return EXIT_CONVERGENCE
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    return EXIT_NUMERICAL


def _run_tasks(tasks, threads):
    def guarded(task):
        try:
            return task(), None
        except Exception as exc:  # reported as an error row, never dropped
            return None, exc
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(guarded, tasks))
    return [guarded(t) for t in tasks]


def execute(spec: SweepSpec, cache=None):
    """Run a sweep; returns ``(columns, rows, first_exception)``.

    Rows are lists of values; an error row carries the point's key values
    followed by empty cells and an ``error:<Type>`` status.
    """
    kind = spec.kind
    multi = False
    if kind == "meanfield":
        cols, tasks = _meanfield_rows(spec, cache)
        keys = None
    elif kind == "spectrum":
        cols, tasks, keys = _spectrum_rows(spec, cache)
        multi = True
    elif kind in ("photon-sweep", "phase-diagram"):
        cols, tasks = _photon_rows(spec, cache)
        keys = None
    elif kind == "dynamics":
        cols, tasks, keys, _ = _dynamics_rows(spec, cache)
        multi = True
    elif kind == "g2-sweep":
        cols, tasks = _g2_rows(spec, cache)
        keys = None
    elif kind == "stats-sweep":
        cols, tasks = _stats_rows(spec, cache)
        keys = None
    elif kind == "relax":
        cols, tasks, keys, _ = _relax_rows(spec, cache)
        multi = True
    else:
        raise ConfigError(f"unknown subcommand {kind}")

    rows, first_error = [], None
    for i, (result, exc) in enumerate(_run_tasks(tasks, int(spec.settings["threads"]))):
        if exc is None:
            for row in (result if multi else [result]):
                rows.append(list(row) + ["ok"])
            continue
        first_error = first_error or exc
        if keys is not None:
            key = keys[i]
        else:
            key = _point_key(spec, i)
        rows.append(key + [None] * (len(cols) - len(key)) + [f"error:{type(exc).__name__}"])
    return cols + ["status"], rows, first_error


def _point_key(spec, index):
    g = spec.grids
    if spec.kind == "meanfield":
        pts = list(itertools.product(g["stark_u"], g["temperature"]))
        if "lam" in spec.settings.get("_explicit", ()):
            pts = [(u, T, lam) for u, T in pts for lam in g["lam"]]
        return list(pts[index])
    if spec.kind in ("photon-sweep", "phase-diagram"):
        return list(list(itertools.product(g["n_atoms"], g["stark_u"], g["lam"]))[index])
    return list(list(_thermal_points(spec))[index])


def write_csv(stream, spec: SweepSpec, cols, rows, timestamp: str | None = None):
    settings = {k: v for k, v in spec.settings.items() if not k.startswith("_")}
    settings.pop("threads", None)
    stream.write(f"# dickestark {__version__} {spec.kind}\n")
    stream.write(f"# config: {json.dumps(settings, sort_keys=True, default=str)}\n")
    stream.write(f"# grids: {json.dumps(spec.grids, sort_keys=True)}\n")
    stream.write(f"# timestamp: {timestamp or time.strftime('%Y-%m-%dT%H:%M:%S%z')}\n")
    stream.write(",".join(cols) + "\n")
    for row in rows:
        stream.write(",".join(fmt(x) for x in row) + "\n")


SUBCOMMANDS = {
    "spectrum": "lowest eigenvalues, DCS (converged or fixed K) and optional DFS truncations",
    "photon-sweep": "ground-state <a^dag a>/N over (N, U, lambda)",
    "phase-diagram": "ground-state <a^dag a>/N on a lambda x U grid (default 60x60, N=32)",
    "dynamics": "closed-system <a^dag a>(t)/N from |j,-j>|0>",
    "g2-sweep": "thermal G2(0) over (N, U, T, lambda)",
    "stats-sweep": "thermal negativity and spin squeezing over (N, U, T, lambda)",
    "relax": "dressed master-equation relaxation from the ground state towards the Gibbs state",
    "meanfield": "mean-field critical couplings (and order parameter when --lam is given)",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dickestark", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in SUBCOMMANDS.items():
        p = sub.add_parser(name, help=help_text, argument_default=argparse.SUPPRESS)
        p.add_argument("--config", help="YAML file with any of the keys below (flags win)")
        p.add_argument("--out", help="output CSV path (stdout if omitted)")
        p.add_argument("--cache", help=f"cache directory (default ${ENV_VAR} if set)")
        p.add_argument("--strict-cache", action="store_true", help="fail on a corrupted cache entry")
        p.add_argument("--threads", type=int, help="worker threads over grid points (default 1)")
        p.add_argument("--omega", type=float, help="field frequency (default 1)")
        p.add_argument("--delta", type=float, help="atomic splitting (default 1)")
        p.add_argument("--n-atoms", help="atom-number grid (default 8; 32 for phase-diagram)")
        p.add_argument("--lam", help="coupling grid: list a,b or start:stop:num")
        p.add_argument("--stark-u", help="Stark-strength grid (default 0)")
        p.add_argument("--temperature", help="temperature grid (default 0.1)")
        p.add_argument("--k-trunc", type=int, help="DCS truncation (default 50)")
        p.add_argument("--rel-tol", type=float, help="eigenvalue convergence tolerance (default 1e-4)")
        p.add_argument("--weight-cut", type=float, help="Gibbs cumulative-weight cut (default 1e-12)")
        if name == "spectrum":
            p.add_argument("--n-levels", type=int, help="levels to report (default 1)")
            p.add_argument("--dfs-truncations", help="also diagonalize in the plain Fock basis at these N_tr")
        if name in ("dynamics", "relax"):
            p.add_argument("--times", help="time grid (default 0:20:201)")
        if name in ("g2-sweep", "relax"):
            p.add_argument("--levels", type=int, help="eigenstate truncation M (default: by Boltzmann weight)")
        if name == "relax":
            p.add_argument("--alpha", type=float, help="Ohmic bath coupling (default 0.001)")
            p.add_argument("--cutoff", type=float, help="bath cutoff in units of omega (default 10)")
        if name == "stats-sweep":
            p.add_argument("--observables", help="negativity,squeezing (default both)")
        if name == "phase-diagram":
            p.add_argument("--allow-large", action="store_true", help="permit N > 32")
    return parser


def resolve(args: argparse.Namespace) -> SweepSpec:
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "config", "out", "cache")}
    settings = dict(DEFAULTS)
    if args.command == "phase-diagram":
        settings.update(PHASE_DIAGRAM_DEFAULTS)
    explicit = set()
    config_path = getattr(args, "config", None)
    if config_path:
        try:
            with open(config_path) as fh:
                loaded = yaml.safe_load(fh) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {config_path}: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError("config file must be a mapping")
        loaded = {k.replace("-", "_"): v for k, v in loaded.items()}
        unknown = set(loaded) - set(DEFAULTS) - {"out", "cache"}
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        for key in ("out", "cache"):
            if key in loaded and getattr(args, key, None) is None:
                setattr(args, key, loaded.pop(key))
            loaded.pop(key, None)
        settings.update(loaded)
        explicit |= set(loaded)
    settings.update(flags)
    explicit |= set(flags)
    settings["_explicit"] = sorted(explicit)
    settings["_fixed_k"] = "k_trunc" in explicit
    return SweepSpec(args.command, settings, getattr(args, "out", None), getattr(args, "cache", None))


def error_line(code: int, exc: Exception) -> str:
    message = str(exc).replace("\n", " ").replace(",", ";")
    return f"error,{code},{type(exc).__name__},{message}"


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        spec = resolve(args)
    except ConfigError as exc:
        print(error_line(EXIT_CONFIG, exc), file=sys.stderr)
        return EXIT_CONFIG

    cache = None
    if spec.cache_dir or os.environ.get(ENV_VAR):
        with warnings.catch_warnings():
            warnings.simplefilter("always")
            cache = DecompositionCache(spec.cache_dir, strict=bool(spec.settings["strict_cache"]))

    before = STATS["eigendecompositions"]
    try:
        cols, rows, exc = execute(spec, cache)
    except (ConfigError, NumericalRangeError) as err:
        code = EXIT_CONFIG if isinstance(err, ConfigError) else EXIT_NUMERICAL
        print(error_line(code, err), file=sys.stderr)
        return code

    if spec.out:
        with open(spec.out, "w", newline="") as fh:
            write_csv(fh, spec, cols, rows)
    else:
        write_csv(sys.stdout, spec, cols, rows)
    print(f"# eigendecompositions: {STATS['eigendecompositions'] - before}", file=sys.stderr)
    if exc is not None:
        code = _classify(exc)
        print(error_line(code, exc), file=sys.stderr)
        return code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
