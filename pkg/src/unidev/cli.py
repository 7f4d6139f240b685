"""Command line front end: validated JSON configs, reproducible CSV reports and a run manifest.

Exit status is 0 when every checked property holds, 1 when one fails and 2
for configuration errors.
"""
from __future__ import annotations

import argparse
import copy
import csv
import datetime as _dt
import hashlib
import json
import math
import sys
import tempfile
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
from jsonschema import Draft202012Validator

from . import __version__, acceptance, bounds, capacity, chaining, entropy, kernel, simulate
from .core import ContinuousLine, ExplicitMatrix, FiniteSpace, Intervals, Normalizer, Ramps, Thresholds, replicate_rng
from .errors import ConfigError, UnidevError

SUBCOMMAND_KIND = {"kernel-verify": "kernel"}

# ---------------------------------------------------------------------------
# schema
# ---------------------------------------------------------------------------

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_int1 = {"type": "integer", "minimum": 1}
_odd = {"type": "integer", "minimum": 1, "not": {"multipleOf": 2}}
_seed = {"type": "integer", "minimum": 0, "maximum": 2**64 - 1}
_grid = {"type": "array", "items": _num, "minItems": 1}
_pos_grid = {"type": "array", "items": _pos, "minItems": 1}
_int_grid = {"type": "array", "items": _int1, "minItems": 1}


def _obj(props, required=()):
    return {"type": "object", "properties": props, "required": list(required), "additionalProperties": False}


DISTRIBUTION = _obj({
    "kind": {"enum": ["uniform", "piecewise"]},
    "breaks": _grid,
    "densities": {"type": "array", "items": {"type": "number", "minimum": 0}},
}, ["kind"])

SPACE = _obj({"atoms": {"type": "array"}, "probs": _pos_grid}, ["probs"])

CLASS = _obj({
    "name": {"enum": ["thresholds", "intervals", "ramps", "explicit"]},
    "distribution": DISTRIBUTION,
    "widths": _pos_grid,
    "space": SPACE,
    "table": {"type": "array", "items": _grid},
    "csv": {"type": "string"},
}, ["name"])

ENVELOPE = _obj({
    "kind": {"enum": list(capacity.ENVELOPE_KINDS) + ["threshold-brackets"]},
    "c": _num, "gamma": _num, "d": {"type": "integer"},
    "table": {"type": "array", "items": {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}},
    "measures": {"type": "string"},
}, ["kind"])

NORMALIZER = _obj({"kind": {"enum": list(Normalizer.KINDS)}, "value": _pos, "envelope": ENVELOPE}, ["kind"])

CONSTANTS = _obj({"K": _pos, "L": _pos, "M": {"type": "number", "minimum": 0}})

COMMON = {"kind": {"type": "string"}, "out": {"type": "string"}, "seed": _seed}

SCHEMAS = {
    "capacity": _obj({**COMMON,
        "sets": {"oneOf": [{"enum": ["half-lines", "intervals"]},
                           {"type": "array", "items": {"type": "array", "items": {"enum": [0, 1]}}}]},
        "positions": _grid,
        "n_max": _int1,
        "convention": {"enum": ["standard", "first-unshattered"]},
        "packing": _obj({"points": {"type": "array", "items": _grid}, "u_grid": _pos_grid}, ["points", "u_grid"]),
    }, ["sets"]),
    "entropy": _obj({**COMMON,
        "envelope": ENVELOPE, "n": _int1, "p_grid": _pos_grid,
        "rate": _obj({"c": {"type": "number", "minimum": 0}, "gamma": _pos, "u": {"type": "number", "minimum": 0},
                      "window_fraction": {"type": "number", "minimum": 0, "maximum": 1}, "n_grid": _int_grid},
                     ["c", "gamma"]),
    }, ["envelope"]),
    "chain": _obj({**COMMON,
        "class": CLASS, "random_members": {"type": "integer", "minimum": 1, "maximum": 4096},
        "n": _int1, "j_max": _int1, "resolution": _pos, "envelope": ENVELOPE,
    }, ["seed"]),
    "kernel": _obj({**COMMON,
        "space": SPACE, "n": _int1, "alpha": _pos_grid,
        "max_exhaustive_bits": _int1, "samples": _int1, "gap_tol": _pos, "tol": _pos,
    }, ["space", "n"]),
    "bound": _obj({**COMMON,
        "bound": {"enum": ["vc", "vc-dim", "subgraph", "li-compare", "corollary1", "corollary2", "thm2", "inf-delta"]},
        "d": _int1, "delta": _pos, "n": _int1, "n_grid": _int_grid, "nu": _pos, "u": _pos, "u_grid": _pos_grid,
        "Pf": _pos, "pf_grid": _pos_grid, "S2n": {"type": "number", "minimum": 1}, "envelope": ENVELOPE,
        "constants": CONSTANTS, "log_term": {"enum": ["n", "inv_pf"]}, "phi_f": _pos,
        "nPf": {"type": "number", "minimum": 0}, "Lu": {"type": "number", "minimum": 0},
    }, ["bound"]),
    "simulate": _obj({**COMMON,
        "experiment": {"enum": ["median", "tail", "corollary", "symmetrization", "stability", "h-check",
                                "rademacher", "chebyshev"]},
        "class": CLASS, "n": _int1, "R": _int1, "median_R": _odd, "median_seed": _seed, "tail_seed": _seed,
        "u_grid": _pos_grid, "n_grid": _int_grid, "resolution": _pos, "normalizer": NORMALIZER,
        "envelope": ENVELOPE, "constants": CONSTANTS, "refine": {"type": "boolean"},
        "laws": _int1, "atoms": _int1, "members": _int1, "band": _pos,
    }, ["experiment", "seed"]),
    "verify-all": _obj({**COMMON,
        "scale": {"enum": list(acceptance.SCALES)},
        "criteria": {"type": "array", "items": {"type": "integer", "minimum": 1, "maximum": 12}, "minItems": 1,
                     "uniqueItems": True},
        "determinism_scale": {"enum": list(acceptance.SCALES)},
    }, ["seed"]),
}
# median-type runs need an odd replicate count
SCHEMAS["simulate"]["allOf"] = [{
    "if": {"properties": {"experiment": {"enum": ["median", "stability"]}}, "required": ["experiment"]},
    "then": {"properties": {"R": _odd}},
}]

DEFAULTS = {
    "capacity": {"positions": [0.1, 0.3, 0.5, 0.7, 0.9], "n_max": 6, "convention": "standard"},
    "entropy": {"n": 100, "p_grid": [0.001, 0.01, 0.05, 0.1, 0.25, 0.5, 1.0]},
    "chain": {"n": 64, "j_max": chaining.DEFAULT_J_MAX, "resolution": 1 / 64},
    "kernel": {"alpha": [1.0], "max_exhaustive_bits": 16, "samples": 512, "gap_tol": kernel.GAP_TOL, "tol": 1e-6},
    "bound": {"delta": 0.05, "d": 1},
    "simulate": {"class": {"name": "thresholds"}, "n": 200, "R": 2001, "median_R": 2001, "u_grid": [0.5, 1, 2, 3],
                 "resolution": 1 / 1024, "normalizer": {"kind": "sqrt-mean"}, "refine": True, "laws": 100,
                 "atoms": 10, "members": 16, "band": 1.5},
    "verify-all": {"scale": "full", "criteria": list(range(1, 13)), "determinism_scale": "full"},
}


@dataclass
class Config:
    """A validated experiment configuration with defaults filled in."""

    kind: str
    data: dict

    def __eq__(self, other):
        return isinstance(other, Config) and self.canonical_json() == other.canonical_json()

    @classmethod
    def from_dict(cls, raw: dict, kind: str | None = None) -> "Config":
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        kind = SUBCOMMAND_KIND.get(kind, kind)
        declared = raw.get("kind")
        declared = SUBCOMMAND_KIND.get(declared, declared)
        if kind and declared and declared != kind:
            raise ConfigError(f"field kind: config declares {declared!r} but the command is {kind!r}")
        kind = kind or declared
        if kind not in SCHEMAS:
            raise ConfigError(f"field kind: unknown experiment kind {kind!r}")
        data = copy.deepcopy(raw)
        data["kind"] = kind
        errors = sorted(Draft202012Validator(SCHEMAS[kind]).iter_errors(data), key=lambda e: list(e.absolute_path))
        if errors:
            lines = [f"field {'.'.join(map(str, e.absolute_path)) or '<root>'}: {_message(e)}" for e in errors]
            raise ConfigError("; ".join(lines))
        full = copy.deepcopy(DEFAULTS[kind])
        full.update(data)
        return cls(kind, full)

    @classmethod
    def from_file(cls, path, kind: str | None = None) -> "Config":
        text = Path(path).read_text(encoding="utf-8")
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
        return cls.from_dict(raw, kind)

    def canonical_json(self) -> str:
        return json.dumps(self.data, sort_keys=True, separators=(",", ":"), ensure_ascii=False)

    def hash(self) -> str:
        # the output directory is not part of the experiment
        semantic = {k: v for k, v in self.data.items() if k != "out"}
        blob = json.dumps(semantic, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def __getitem__(self, key):
        return self.data[key]

    def get(self, key, default=None):
        return self.data.get(key, default)


def _message(err) -> str:
    if err.validator == "not" and err.validator_value == {"multipleOf": 2}:
        return f"{err.instance} must be odd (median runs use the central order statistic)"
    return err.message


def bundled_config(kind: str) -> dict:
    name = kind.replace("-", "_") + ".json"
    return json.loads(resources.files("unidev").joinpath("data", name).read_text(encoding="utf-8"))


# ---------------------------------------------------------------------------
# builders from config fragments
# ---------------------------------------------------------------------------

def build_distribution(spec):
    if not spec or spec["kind"] == "uniform":
        return ContinuousLine.uniform()
    try:
        return ContinuousLine(spec["breaks"], spec["densities"])
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"field distribution: {exc}") from None


def build_space(spec) -> FiniteSpace:
    probs = spec["probs"]
    atoms = spec.get("atoms", list(range(len(probs))))
    try:
        return FiniteSpace(tuple(atoms), tuple(probs))
    except ValueError as exc:
        raise ConfigError(f"field space: {exc}") from None


def build_class(spec, base: Path | None = None):
    name = spec["name"]
    if name == "explicit":
        if "space" not in spec:
            raise ConfigError("field class.space: explicit classes need a finite space")
        space = build_space(spec["space"])
        try:
            if "csv" in spec:
                p = Path(spec["csv"])
                return ExplicitMatrix.from_csv(space, p if p.is_absolute() or base is None else base / p)
            return ExplicitMatrix(space, spec["table"])
        except (KeyError, ValueError, OSError) as exc:
            raise ConfigError(f"field class: {exc}") from None
    dist = build_distribution(spec.get("distribution"))
    if name == "thresholds":
        return Thresholds(dist)
    if name == "intervals":
        return Intervals(dist)
    return Ramps(dist, spec.get("widths", (0.125, 0.25, 0.5, 1.0)))


def build_envelope(spec, distribution=None) -> capacity.EntropyEnvelope:
    try:
        if spec["kind"] == "threshold-brackets":
            return capacity.bracket_table_envelope(distribution or ContinuousLine.uniform())
        return capacity.EntropyEnvelope.from_json(spec)
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"field envelope: {exc}") from None


def build_normalizer(spec, distribution=None) -> Normalizer:
    env = build_envelope(spec["envelope"], distribution) if "envelope" in spec else None
    try:
        return Normalizer(spec["kind"], spec.get("value", 1.0), env)
    except ValueError as exc:
        raise ConfigError(f"field normalizer: {exc}") from None


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------

def format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return f"{v:.17g}"
    if v is None:
        return ""
    if isinstance(v, (tuple, list)):
        return " ".join(format_value(x) for x in v)
    return str(v)


def write_csv(path, rows, header=None) -> Path:
    """UTF-8, LF line endings, 17 significant digits for floats."""
    path = Path(path)
    rows = list(rows)
    if header is None:
        header = list(rows[0].keys()) if rows else []
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            vals = [r[h] for h in header] if isinstance(r, dict) else list(r)
            w.writerow([format_value(v) for v in vals])
    return path


def emit_plot_data(report, out_dir, prefix: str = "") -> list[Path]:
    """Tidy CSVs (one observation per row) for the curve-like parts of a report."""
    out_dir = Path(out_dir)
    pre = f"{prefix}_" if prefix else ""
    if isinstance(report, simulate.TailReport):
        rows = [{k: r[k] for k in ("u", "frequency", "stderr", "budget")} for r in report.rows]
        return [write_csv(out_dir / f"{pre}tail_plot.csv", rows, ["u", "frequency", "stderr", "budget"])]
    if isinstance(report, simulate.StabilityScan):
        rows = [{k: r[k] for k in ("n", "M_hat", "q25", "q75")} for r in report.rows()]
        return [write_csv(out_dir / f"{pre}median_scan_plot.csv", rows, ["n", "M_hat", "q25", "q75"])]
    if isinstance(report, simulate.SymmetrizationReport):
        return [write_csv(out_dir / f"{pre}symmetrization_plot.csv", report.rows, ["u", "lhs", "rhs", "stderr"])]
    if isinstance(report, bounds.BoundCurve):
        return [write_csv(out_dir / f"{pre}curve.csv", report.rows, report.header())]
    if isinstance(report, list) and report and isinstance(report[0], dict) and "eq12_value" in report[0]:
        return [write_csv(out_dir / f"{pre}comparison_plot.csv", report, ["Pf", "eq12_value", "eq13_value", "ratio"])]
    raise TypeError(f"no plot data layout for {type(report).__name__}")


@dataclass
class RunManifest:
    config_hash: str
    tool_version: str
    command: str
    seed: int | None
    threads: int
    timestamp: str = field(default_factory=lambda: _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"))
    constants: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)
    status: str = "running"

    def write(self, out_dir: Path):
        data = {
            "config_hash": self.config_hash, "tool_version": self.tool_version, "command": self.command,
            "seed": self.seed, "threads": self.threads, "timestamp": self.timestamp,
            "constants": self.constants, "outputs": sorted(self.outputs), "status": self.status,
        }
        (out_dir / "manifest.json").write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")


class Run:
    """Collects outputs of one command; the manifest is on disk before any data row."""

    def __init__(self, cfg: Config, out_dir: Path, threads: int):
        self.cfg = cfg
        self.out = Path(out_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.threads = threads
        self.manifest = RunManifest(cfg.hash(), __version__, cfg.kind, cfg.get("seed"), threads,
                                    constants={"L_1": kernel.solve_L(1.0)})
        self.manifest.write(self.out)
        (self.out / "config.json").write_text(cfg.canonical_json() + "\n", encoding="utf-8")
        self.manifest.outputs.append("config.json")

    def csv(self, name, rows, header=None):
        write_csv(self.out / name, rows, header)
        self.manifest.outputs.append(name)

    def plot(self, report, prefix=""):
        for p in emit_plot_data(report, self.out, prefix):
            self.manifest.outputs.append(p.name)

    def json(self, name, obj):
        (self.out / name).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n",
                                     encoding="utf-8")
        self.manifest.outputs.append(name)

    def finish(self, passed: bool) -> int:
        self.manifest.status = "pass" if passed else "fail"
        self.manifest.write(self.out)
        return 0 if passed else 1


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o).__name__)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_capacity(cfg: Config, run: Run) -> bool:
    pos = cfg["positions"]
    sets = cfg["sets"]
    if sets == "half-lines":
        table, d_expected = capacity.half_lines(pos), None
    elif sets == "intervals":
        table, d_expected = capacity.interval_sets(pos), None
    else:
        table = np.asarray(sets)
        d_expected = None
    vc = capacity.vc_dimension(table, cfg["convention"])
    d = int(capacity.vc_dimension(table, "standard"))
    rows, ok = [], True
    for n in range(1, cfg["n_max"] + 1):
        S = capacity.shatter_coefficient(table, n).count
        sb = capacity.sauer_bound(d, n) if d >= 1 and n >= d else None
        if sb is not None:
            ok &= S <= sb
        rows.append({"n": n, "S": S, "two_pow_n": 2**n, "sauer_bound": sb})
    run.csv("shatter.csv", rows)
    summary = {"vc_dimension": int(vc), "convention": cfg["convention"], "sauer_holds": ok}
    if "packing" in cfg.data:
        pts = np.asarray(cfg["packing"]["points"], dtype=float)
        prow = []
        for u in cfg["packing"]["u_grid"]:
            g, _ = capacity.greedy_packing(pts, u)
            b = capacity.brute_packing(pts, u) if len(pts) <= capacity.BRUTE_PACKING_GUARD else None
            if b is not None:
                ok &= g <= b
            prow.append({"u": u, "greedy": g, "brute": b})
        run.csv("packing.csv", prow)
    summary["passed"] = ok
    run.json("capacity.json", summary)
    return ok


def cmd_entropy(cfg: Config, run: Run) -> bool:
    env = build_envelope(cfg["envelope"])
    if float(env.D(1.0)) < 2 - 1e-12:
        raise ConfigError("field envelope: entropy normalizations need D(1) >= 2")
    spec = entropy.EntropyIntegralSpec(env, cfg["n"])
    rows = [{"p": p, "phi": v} for p, v in entropy.phi_curve(spec, cfg["p_grid"])]
    run.csv("phi.csv", rows)
    ok = all(math.isfinite(r["phi"]) and r["phi"] > 0 for r in rows)
    if "rate" in cfg.data:
        r = cfg["rate"]
        rs = entropy.RateSpec(r["c"], r["gamma"], r.get("u", 1.0), r.get("window_fraction"))
        curve = entropy.rate_curve(rs, r.get("n_grid", [10**k for k in range(2, 7)]))
        run.csv("rate.csv", curve)
        slope = entropy.loglog_slope([c["n"] for c in curve], [c["rate"] for c in curve])
        run.json("rate.json", {"slope": slope, "target": -2 / (2 + rs.gamma)})
    return ok


def _chain_vectors(cfg: Config):
    n = cfg["n"]
    seed = cfg["seed"]
    if "class" in cfg.data:
        cls = build_class(cfg["class"])
        members = cls.members(cfg["resolution"])
        z = np.asarray(cls.sample(replicate_rng(seed, 0), 2 * n))
        return cls.values(members, z)
    k = cfg.get("random_members", 64)
    rng = replicate_rng(seed, 0)
    return (rng.random((k, 2 * n)) < 0.5).astype(float)


def cmd_chain(cfg: Config, run: Run) -> bool:
    V = _chain_vectors(cfg)
    h = chaining.build_hierarchy(chaining.PointSet2n(V), cfg["j_max"])
    env = build_envelope(cfg["envelope"]) if "envelope" in cfg.data else chaining.default_envelope(h)
    fails = chaining.check_hierarchy(h, env)
    run.json("hierarchy.json", h.to_json())
    run.csv("chain_checks.csv", [{"check": k, "failures": v} for k, v in fails.items()])
    I = chaining.level_integrals(env, h.n, h.j_max)
    run.csv("level_integrals.csv", [{"j": j, "size": len(h.levels[j]), "I_j": float(I[j])} for j in range(h.j_max + 1)])
    return all(v == 0 for v in fails.values())


def cmd_kernel(cfg: Config, run: Run) -> bool:
    space = build_space(cfg["space"])
    n = cfg["n"]
    stochastic = space.m**n > cfg["max_exhaustive_bits"]
    if stochastic and "seed" not in cfg.data:
        raise ConfigError("field seed: sampled events need a seed")
    ok = True
    rows, summary = [], []
    for alpha in cfg["alpha"]:
        rep = kernel.verify_theorem1(space, n, alpha, tol=cfg["tol"], gap_tol=cfg["gap_tol"],
                                     max_exhaustive_bits=cfg["max_exhaustive_bits"], samples=cfg["samples"],
                                     seed=cfg.get("seed", 0))
        ok &= rep.passed
        rows += [{"alpha": alpha, "event_id": r.event_id, "prob_A": r.prob_A, "integral": r.integral,
                  "product": r.product, "max_gap": r.max_gap, "pass": r.passed} for r in rep.rows]
        summary.append({"alpha": alpha, "L": rep.L, "L_rounded": round(rep.L, 2), "events": len(rep.rows), "max_product": rep.max_product,
                        "argmax_event": rep.argmax_event, "exhaustive": not stochastic, "pass": rep.passed})
    run.csv("theorem1.csv", rows)
    run.csv("theorem1_summary.csv", summary)
    run.manifest.constants.update({f"L_{a}": kernel.solve_L(a) for a in cfg["alpha"]})
    return ok


def _need(cfg, *keys):
    missing = [k for k in keys if k not in cfg.data]
    if missing:
        raise ConfigError(f"field {missing[0]}: required for bound {cfg['bound']!r}")


def cmd_bound(cfg: Config, run: Run) -> bool:
    b = cfg["bound"]
    const = cfg.get("constants", {})
    K = const.get("K", 1.0)
    L = const.get("L", kernel.solve_L(1.0))
    d, delta = cfg["d"], cfg["delta"]
    try:
        if b in ("vc-dim", "vc"):
            _need(cfg, "n_grid")
            if b == "vc":
                _need(cfg, "S2n")
                curve = bounds.BoundCurve("n", ("log_S2n",))
                for n in cfg["n_grid"]:
                    curve.add(n, bounds.vc_bound(cfg["S2n"], n, delta), log_S2n=math.log(cfg["S2n"]))
            else:
                curve = bounds.vc_curve(d, delta, cfg["n_grid"])
        elif b == "subgraph":
            _need(cfg, "n_grid")
            curve = bounds.subgraph_curve(d, delta, K, cfg["n_grid"])
        elif b in ("corollary1", "corollary2"):
            _need(cfg, "n", "pf_grid", "envelope", "u")
            curve = bounds.corollary_curve(cfg["n"], build_envelope(cfg["envelope"]), cfg["u"], K, cfg["pf_grid"])
        elif b == "thm2":
            _need(cfg, "n", "Pf", "u_grid")
            M = const.get("M", 1.0)
            curve = bounds.thm2_curve(M, cfg["n"], cfg["Pf"], L, cfg["u_grid"], cfg.get("phi_f"))
        elif b == "li-compare":
            _need(cfg, "n", "nu", "pf_grid")
            rows = bounds.compare_subgraph_li(d, cfg["n"], cfg["nu"], delta, K, cfg["pf_grid"])
            run.csv("comparison.csv", rows)
            run.plot(rows)
            return all(math.isfinite(r["ratio"]) and r["ratio"] > 0 for r in rows)
        else:  # inf-delta
            _need(cfg, "nPf", "Lu")
            exact = bounds.thm2_inf_delta(cfg["nPf"], cfg["Lu"])
            grid = bounds.delta_grid_minimum(cfg["nPf"], cfg["Lu"])
            run.csv("inf_delta.csv", [{"nPf": cfg["nPf"], "Lu": cfg["Lu"], "closed_form": exact, "grid": grid}])
            return abs(exact - grid) <= 1e-9 * max(1.0, exact)
    except (ValueError, UnidevError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bound {b!r}: {exc}") from None
    run.plot(curve)
    run.manifest.constants.update({"K": K, "K_source": "config" if "K" in const else "default 1"})
    return True


def _experiment(cfg: Config, seed: int, n=None, R=None, phase=simulate.PHASE_MAIN):
    cls = build_class(cfg["class"])
    norm = build_normalizer(cfg["normalizer"], getattr(cls, "distribution", None))
    return simulate.Experiment(cls, n or cfg["n"], R or cfg["R"], seed, norm, tuple(cfg["u_grid"]),
                               cfg["resolution"], phase)


def _seeds(cfg: Config):
    ms = cfg.get("median_seed", cfg["seed"])
    ts = cfg.get("tail_seed", cfg["seed"] + 1)
    if ms == ts:
        raise ConfigError("fields median_seed/tail_seed: the two phases must use different seeds")
    return ms, ts


def cmd_simulate(cfg: Config, run: Run) -> bool:
    kind = cfg["experiment"]
    th = run.threads
    const = cfg.get("constants", {})
    if kind == "median":
        m = simulate.estimate_median(_experiment(cfg, cfg["seed"]), th)
        run.csv("median.csv", [acceptance._median_row(m)])
        return True
    if kind == "tail":
        ms, ts = _seeds(cfg)
        med = simulate.estimate_median(_experiment(cfg, ms, R=cfg["median_R"]), th)
        if "M" in const:
            med = simulate.MedianEstimate(**{**med.__dict__, "value": const["M"]})
        rep = simulate.tail_experiment(_experiment(cfg, ts), med, const.get("L"), threads=th, refine=cfg["refine"])
        run.csv("median.csv", [acceptance._median_row(med)])
        run.csv("tail_report.csv", rep.rows)
        run.plot(rep)
        return rep.passed
    if kind == "corollary":
        ms, ts = _seeds(cfg)
        u_grid = tuple(cfg["u_grid"])
        calib = _experiment(cfg, ms, R=cfg["median_R"])
        if "K" in const:
            K, source = const["K"], "config"
        else:
            K = simulate.calibrate_K(simulate.critical_K(calib, u_grid, th, cfg["refine"]), u_grid)
            source = f"calibrated at n={calib.n} on seed {ms}"
        run.manifest.constants.update({"K": K, "K_source": source})
        ok, rows = True, []
        for k, n in enumerate(cfg.get("n_grid", [cfg["n"]])):
            exp = _experiment(cfg, ts, n=n, phase=200 + k)
            rep = simulate.corollary_report(simulate.critical_K(exp, u_grid, th, cfg["refine"]), K, u_grid, ts, ms)
            ok &= rep.passed
            rows += [{"n": n, "K": K, **r} for r in rep.rows]
        run.csv("corollary_report.csv", rows)
        return ok
    if kind == "symmetrization":
        env = build_envelope(cfg["envelope"]) if "envelope" in cfg.data else None
        rep = simulate.symmetrization_experiment(_experiment(cfg, cfg["seed"]), envelope=env, threads=th)
        run.csv("symmetrization.csv", rep.rows)
        run.plot(rep)
        return rep.passed
    if kind == "stability":
        cls = build_class(cfg["class"])
        norm = build_normalizer(cfg["normalizer"], getattr(cls, "distribution", None))
        scan = simulate.median_stability_scan(cls, norm, cfg.get("n_grid", [50, 100, 200, 400, 800]), cfg["R"],
                                              cfg["seed"], cfg["resolution"], cfg["band"], th)
        run.csv("median_scan.csv", scan.rows())
        run.plot(scan)
        return scan.within_band()
    if kind == "h-check":
        reps = simulate.h_random_laws(cfg["laws"], cfg["atoms"], cfg["seed"])
        run.csv("h_check.csv", [{"law": k, "second_moment": r.second_moment, "monotone": r.monotone,
                                 "convex": r.convex, "endpoints": r.endpoints, "averaged": r.averaged}
                                for k, r in enumerate(reps)])
        return all(r.passed for r in reps)
    if kind == "rademacher":
        rng = replicate_rng(cfg["seed"], 0, phase=simulate.PHASE_MAIN)
        V = (rng.random((cfg["members"], 2 * cfg["n"])) < 0.5).astype(float)
        env = build_envelope(cfg["envelope"]) if "envelope" in cfg.data else capacity.constant_envelope(max(2, cfg["members"]))
        s = simulate.rademacher_sup(V, env, cfg["R"], cfg["seed"], threads=th)
        q = s.quantiles()
        run.csv("rademacher.csv", [{"u": s.u, "tail": s.tail, "q25": q[0.25], "q50": q[0.5], "q75": q[0.75]}])
        return s.tail < 0.5
    # chebyshev
    exp = _experiment(cfg, cfg["seed"])
    members = exp.members()
    pick = [members[int(i)] for i in np.linspace(0, len(members) - 1, cfg["members"]).round()]
    rows = simulate.chebyshev_check(exp, pick, th)
    run.csv("chebyshev.csv", rows)
    return all(r["pass"] for r in rows)


def cmd_verify_all(cfg: Config, run: Run) -> bool:
    numbers = sorted(cfg["criteria"])
    main_numbers = [k for k in numbers if k != 12]
    results = acceptance.run_suite(main_numbers, cfg["seed"], run.threads, cfg["scale"],
                                   progress=lambda r: print(r.line(), file=sys.stderr, flush=True))
    for r in results:
        for tname, rows in r.tables.items():
            if rows:
                run.csv(f"c{r.number:02d}_{tname}.csv", rows)
    summary = [{"criterion": r.number, "name": r.name, "passed": r.passed} for r in results]
    if 12 in numbers:
        r12 = determinism_check(cfg["seed"], cfg["determinism_scale"], main_numbers or list(range(1, 12)))
        print(r12.line(), file=sys.stderr, flush=True)
        results.append(r12)
        summary.append({"criterion": 12, "name": r12.name, "passed": r12.passed})
    run.csv("acceptance.csv", summary)
    run.csv("metrics.csv", [{"criterion": r.number, "metric": k, "value": v} for r in results for k, v in r.metrics.items()])
    k4 = next((r for r in results if r.number == 4), None)
    if k4:
        run.manifest.constants.update({"K": k4.metrics["K"], "K_source": "criterion 4 calibration at n=200"})
    return all(r.passed for r in results)


def determinism_check(seed: int, scale: str, criteria, threads=(1, 4)) -> "acceptance.CriterionResult":
    """Run the suite twice with different thread counts and compare every CSV byte for byte."""
    dirs = []
    with tempfile.TemporaryDirectory() as tmp:
        for k, t in enumerate(threads):
            out = Path(tmp) / f"run{k}"
            cfgp = Path(tmp) / f"cfg{k}.json"
            cfgp.write_text(json.dumps({"kind": "verify-all", "seed": seed, "scale": scale, "criteria": list(criteria)}))
            main(["verify-all", "--config", str(cfgp), "--out", str(out), "--threads", str(t)])
            dirs.append({p.name: p.read_bytes() for p in sorted(out.glob("*.csv"))})
        same = dirs[0].keys() == dirs[1].keys() and all(dirs[0][k] == dirs[1][k] for k in dirs[0])
        differing = sorted(k for k in dirs[0] if dirs[1].get(k) != dirs[0][k])
    return acceptance.CriterionResult(12, "determinism across runs and threads", bool(same and dirs[0]),
                                      {"csv_files": len(dirs[0]), "threads": "/".join(map(str, threads)),
                                       "differing": len(differing)})


HANDLERS = {"capacity": cmd_capacity, "entropy": cmd_entropy, "chain": cmd_chain, "kernel": cmd_kernel,
            "bound": cmd_bound, "simulate": cmd_simulate, "verify-all": cmd_verify_all}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="unidev", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"unidev {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("capacity", "entropy", "chain", "kernel-verify", "bound", "simulate", "verify-all"):
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config (defaults to the bundled example)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, help="overrides the config seed")
        p.add_argument("--threads", type=int, default=1, help="worker threads; results do not depend on it")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    kind = SUBCOMMAND_KIND.get(args.command, args.command)
    try:
        if args.threads < 1:
            raise ConfigError("flag --threads: must be at least 1")
        if args.config:
            raw_path = Path(args.config)
            try:
                text = raw_path.read_text(encoding="utf-8")
            except OSError as exc:
                raise ConfigError(f"{args.config}: {exc.strerror}") from None
            try:
                raw = json.loads(text)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{args.config}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
        else:
            raw = bundled_config(kind)
        if args.seed is not None:
            raw = {**raw, "seed": args.seed}
        cfg = Config.from_dict(raw, kind)
        out = Path(args.out or cfg.get("out") or f"unidev-{args.command}")
        run = Run(cfg, out, args.threads)
        passed = HANDLERS[kind](cfg, run)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (UnidevError, ValueError) as exc:
        # structural problems in an otherwise schema-valid config
        print(f"config error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    print(f"{args.command}: {'pass' if passed else 'FAIL'} -> {out}", file=sys.stderr)
    return run.finish(passed)


if __name__ == "__main__":
    sys.exit(main())
