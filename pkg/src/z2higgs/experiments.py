"""Config-driven experiments with bit-stable CSV/JSON output.

A config is a plain key=value file (``#`` starts a comment, lists are
comma separated). Every run writes its table plus a ``.meta.json``
sidecar holding the resolved config, its sha256, the seed and build id.
"""

import hashlib
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .montecarlo import CSV_COLUMNS, ConfigError, RunConfig

EXIT_OK, EXIT_CONFIG, EXIT_DOMAIN = 0, 2, 3

KINDS = ("verify", "constants", "exact", "mc", "scan", "cluster", "free-report")

def _int(s):
    return int(s)


def _float(s):
    return float(s)


def _bool(s):
    s = s.strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _pairs(s, conv=float, sep=":"):
    """'0.5:1.5, 0.2:0.3' -> [(0.5, 1.5), (0.2, 0.3)]"""
    out = []
    for item in s.split(","):
        item = item.strip()
        if not item:
            continue
        a, b = item.split(sep)
        out.append((conv(a), conv(b)))
    return out


def _sizes(s):
    return _pairs(s, int, "x")


def _trunc(s):
    return _pairs(s, int, ":")


def _str(s):
    return s.strip()


# key -> (parser, default)
KEYS = {
    "kind": (_str, None),
    "m": (_int, 3),
    "N": (_int, 4),
    "grid": (_pairs, None),
    "beta": (_float, None),
    "kappa": (_float, None),
    "sizes": (_sizes, [(1, 1), (2, 2)]),
    "sweeps": (_int, 2000),
    "burn_in": (_int, None),
    "measure_every": (_int, 1),
    "bins": (_int, 50),
    "chains": (_int, 1),
    "update": (_str, "heatbath"),
    "start": (_str, "cold"),
    "gauge_moves": (_bool, True),
    "seed": (_int, 0),
    "threads": (_int, 1),
    "lattice": (_str, "cube2"),
    "gamma": (_str, None),
    "mode": (_str, "logwilson"),
    "phase": (_str, "higgs"),
    "truncations": (_trunc, [(1, 1), (2, 3), (3, 6)]),
    "eps": (_float, 0.4),
    "alpha": (_float, 0.5),
    "R": (_int, 1),
    "T": (_int, 1),
    "L_max": (_int, None),
    "exact": (_bool, False),
}


@dataclass
class ExperimentConfig:
    values: dict = field(default_factory=dict)

    def __getattr__(self, key):
        try:
            return self.values[key]
        except KeyError:
            raise AttributeError(key) from None

    def resolved(self):
        """Plain-text rendering of every key, in sorted order."""
        out = {}
        for k in sorted(self.values):
            v = self.values[k]
            if isinstance(v, list):
                v = [list(x) if isinstance(x, tuple) else x for x in v]
            out[k] = v
        return out

    def sha256(self):
        blob = json.dumps(self.resolved(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def grid(self):
        if self.values.get("grid"):
            return list(self.values["grid"])
        if self.values.get("beta") is not None and self.values.get("kappa") is not None:
            return [(self.values["beta"], self.values["kappa"])]
        raise ConfigError("need grid=beta:kappa,... or beta= and kappa=")

    def run_config(self):
        return RunConfig(sweeps=self.sweeps, burn_in=self.burn_in, measure_every=self.measure_every,
                         bins=self.bins, seed=self.seed, update=self.update, chains=self.chains,
                         start=self.start, gauge_moves=self.gauge_moves)


def parse_config(text, overrides=None, kind=None):
    """Parse key=value lines; unknown keys and malformed values raise ConfigError."""
    raw = {}
    lines = text.splitlines() if text else []
    for i, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {i}: expected key=value")
        k, v = (x.strip() for x in line.split("=", 1))
        raw[k] = v
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override {item!r}: expected key=value")
        k, v = (x.strip() for x in item.split("=", 1))
        raw[k] = v
    unknown = sorted(set(raw) - set(KEYS))
    if unknown:
        raise ConfigError(f"unknown keys: {', '.join(unknown)}")
    vals = {k: d for k, (_, d) in KEYS.items()}
    for k, v in raw.items():
        try:
            vals[k] = KEYS[k][0](v)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"bad value for {k}: {v!r} ({exc})") from None
    if kind is not None:
        if raw.get("kind") not in (None, kind):
            raise ConfigError(f"config kind {raw['kind']!r} does not match subcommand {kind!r}")
        vals["kind"] = kind
    if vals["kind"] not in KINDS:
        raise ConfigError(f"unknown kind {vals['kind']!r}")
    if vals["m"] < 2:
        raise ConfigError("m must be >= 2")
    return ExperimentConfig(vals)


# ---- formatting -------------------------------------------------------------

def fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return f"{x:.17g}"
    if x is None:
        return ""
    return str(x)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        return fmt(x) if not math.isfinite(float(x)) else float(fmt(x))
    if hasattr(x, "__float__") and not isinstance(x, str):
        return float(fmt(float(x)))
    return x


def csv_text(columns, rows):
    if not rows:
        raise ValueError("no results to emit")
    buf = io.StringIO(newline="")
    buf.write(",".join(columns) + "\n")
    for r in rows:
        if len(r) != len(columns):
            raise ValueError("row width does not match the header")
        buf.write(",".join(fmt(x) for x in r) + "\n")
    return buf.getvalue()


def json_text(obj):
    if not obj:
        raise ValueError("no results to emit")
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def read_csv(path):
    """Header and rows, numbers parsed back to float where possible."""
    lines = Path(path).read_text().splitlines()
    cols = lines[0].split(",")
    rows = []
    for ln in lines[1:]:
        row = []
        for s in ln.split(","):
            try:
                row.append(float(s))
            except ValueError:
                row.append(s)
        rows.append(row)
    return cols, rows


@dataclass
class Result:
    kind: str
    columns: list = None
    rows: list = None
    report: dict = None

    def text(self):
        if self.report is not None:
            return json_text(self.report)
        return csv_text(self.columns, self.rows)

    @property
    def suffix(self):
        return ".json" if self.report is not None else ".csv"


def sidecar(cfg):
    return {"kind": cfg.kind, "seed": cfg.seed, "build_id": f"z2higgs-{__version__}",
            "config_sha256": cfg.sha256(), "config": cfg.resolved()}


def emit_report(result, cfg, out):
    """Write the table (or JSON report) and its sidecar. Returns the paths."""
    text = result.text()
    out = Path(out)
    if out.suffix in (".csv", ".json"):
        out = out.with_suffix("")
    out.parent.mkdir(parents=True, exist_ok=True)
    main = out.with_name(out.name + result.suffix)
    meta = out.with_name(out.name + ".meta.json")
    main.write_bytes(text.encode())
    meta.write_bytes(json_text(sidecar(cfg)).encode())
    return main, meta


# ---- experiments ------------------------------------------------------------

def tiny_lattice(name, m=3):
    from .exact import TinyLattice
    from .lattice import LatticeGeometry
    if name == "edge":
        return TinyLattice.single_edge(m)
    if name == "plaquette":
        return TinyLattice.single_plaquette(m)
    if name.startswith("cube"):
        # cubeN has N vertices per side
        n = int(name[4:] or 2)
        if n < 2:
            raise ConfigError("cubeN needs N >= 2")
        return TinyLattice.cube(n - 1, m)
    if name == "slab":
        # holds build_line_pair(1, 1)
        return TinyLattice(LatticeGeometry.from_ranges([(0, 1), (-1, 1)] + [(0, 1)] * (m - 2)))
    raise ConfigError(f"unknown lattice {name!r}")


def named_path(name, geom):
    """edge | path2 | plaquette | line1 | line2 | loop on the low corner of geom."""
    from .lattice import PathChain, build_line_pair
    lo = tuple(int(x) for x in geom.lo)

    def shift(*d):
        return tuple(a + b for a, b in zip(lo, d + (0,) * (geom.m - len(d))))
    if name == "edge":
        return PathChain.from_vertices([shift(0), shift(1)])
    if name == "path2":
        return PathChain.from_vertices([shift(0), shift(1), shift(1, 1)])
    if name == "plaquette":
        return PathChain.from_vertices([shift(0), shift(1), shift(1, 1), shift(0, 1), shift(0)])
    if name in ("line1", "line2", "loop"):
        g1, g2 = build_line_pair(1, 1, geom)
        return {"line1": g1, "line2": g2, "loop": g1 + g2}[name]
    raise ConfigError(f"unknown gamma {name!r}")


def run_verify(cfg):
    from .exact import calibrate_hat_z_convention, verify_identity
    from .model import ModelParams
    lat = tiny_lattice(cfg.lattice, cfg.m)
    rows = []
    n, _ = calibrate_hat_z_convention()
    gammas = [g.strip() for g in (cfg.gamma or "plaquette").split(",")]
    for beta, kappa in cfg.grid():
        p = ModelParams(beta, kappa)
        for gname in gammas:
            try:
                gamma = named_path(gname, lat.geom)
            except (KeyError, ValueError):
                continue
            closed = not gamma.boundary().mod2().coeffs
            for kind in ("unitary", "conf", "free"):
                if kind == "conf" and not closed:
                    continue
                d = verify_identity(kind, lat, p, gamma)
                rows.append([kind, cfg.lattice, gname, beta, kappa, d, d <= 1e-10])
    return Result("verify", ["identity", "lattice", "gamma", "beta", "kappa", "discrepancy", "pass"], rows)


def run_constants(cfg):
    from .cluster import compute_constants
    c = compute_constants(cfg.m)
    rows = [[k, getattr(c, k)] for k in ("m", "M0", "M1", "M2", "M3", "D0", "alpha_higgs",
                                         "kappa0_higgs", "beta0_conf")]
    return Result("constants", ["name", "value"], rows)


def run_exact(cfg):
    from .exact import exact_expectations
    from .model import ModelParams
    lat = tiny_lattice(cfg.lattice, cfg.m)
    names = [g.strip() for g in (cfg.gamma or "edge").split(",")]
    gammas = [named_path(g, lat.geom) for g in names]
    rows = []
    for beta, kappa in cfg.grid():
        res, vals = exact_expectations(lat, ModelParams(beta, kappa), gammas)
        for g, v in zip(names, vals):
            rows.append([cfg.lattice, g, beta, kappa, v, res.log_value, res.terms])
    return Result("exact", ["lattice", "gamma", "beta", "kappa", "wilson", "log_z", "states"], rows)


def run_scan(cfg, threads=1):
    from .lattice import LatticeGeometry
    from .model import ModelParams
    from .montecarlo import scan
    geom = LatticeGeometry.box(cfg.m, cfg.N)
    grid = [ModelParams(b, k) for b, k in cfg.grid()]
    if cfg.kind == "mc" and len(grid) != 1:
        raise ConfigError("mc runs a single (beta, kappa); use scan for grids")
    rows = scan(geom, grid, cfg.sizes, cfg.run_config(), threads=threads)
    return Result(cfg.kind, list(CSV_COLUMNS), rows)


def run_cluster(cfg):
    import mpmath
    from .cluster import truncated_series
    from .exact import exact_expectations, exact_mf_ratio
    from .model import ModelParams
    lat = tiny_lattice(cfg.lattice, cfg.m)
    geom = lat.geom
    mode = cfg.mode.lower()
    if mode == "logrho":
        gammas = [named_path("line1", geom), named_path("line2", geom)]
    elif mode == "logz":
        gammas = []
    else:
        gammas = [named_path(cfg.gamma or "edge", geom)]
    rows = []
    for beta, kappa in cfg.grid():
        p = ModelParams(beta, kappa)
        ref = float("nan")
        if cfg.exact:
            if mode == "logwilson":
                _, vals, _ = exact_expectations(lat, p, gammas, precise=True)
                ref = float(-mpmath.log(vals[0]))
            elif mode == "logrho":
                ref = float(mpmath.log(exact_mf_ratio(lat, p, *gammas, precise=True)))
            elif mode == "logz":
                res, _, lz = exact_expectations(lat, p, [], precise=True)
                ref = float(lz - 2 * p.beta * lat.n_plaquettes - 2 * p.kappa * lat.n_edges)
        for n_max, size_max in cfg.truncations:
            r = truncated_series(mode, p, gammas, n_max, size_max, geom, phase=cfg.phase, eps=cfg.eps)
            v = float(r.value)
            rows.append([cfg.phase, mode, beta, kappa, n_max, size_max, v, r.tail, ref,
                         abs(v - ref) if cfg.exact else float("nan"), r.n_clusters])
    return Result("cluster", ["phase", "mode", "beta", "kappa", "n_max", "size_max", "value", "tail",
                              "exact", "residual", "clusters"], rows)


def run_free_report(cfg):
    from .free import mf_ratio_free_report
    from .lattice import LatticeGeometry
    from .model import ModelParams
    grid = cfg.grid()
    if len(grid) != 1:
        raise ConfigError("free-report takes a single (beta, kappa)")
    beta, kappa = grid[0]
    p = ModelParams(beta, kappa)
    lat = None
    if cfg.exact:
        lat = tiny_lattice("slab", cfg.m)
        geom = lat.geom
    else:
        geom = LatticeGeometry.box(cfg.m, cfg.N)
    rep = mf_ratio_free_report(p, cfg.R, cfg.T, geom, L_max=cfg.L_max, alpha=cfg.alpha, eps=cfg.eps, lat=lat)
    return Result("free-report", report=rep.to_dict())


def run(cfg, threads=1):
    kind = cfg.kind
    if kind == "verify":
        return run_verify(cfg)
    if kind == "constants":
        return run_constants(cfg)
    if kind == "exact":
        return run_exact(cfg)
    if kind in ("mc", "scan"):
        return run_scan(cfg, threads)
    if kind == "cluster":
        return run_cluster(cfg)
    if kind == "free-report":
        return run_free_report(cfg)
    raise ConfigError(f"unknown kind {kind!r}")
