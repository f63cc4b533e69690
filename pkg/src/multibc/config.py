"""Experiment configuration: schema, validation, canonical content hash.

A config is a single JSON document.  Validation happens before any
computation: every key is checked against the schema for its experiment
kind, unknown keys are rejected, and defaults are filled in.  The result
is the *effective* config, a fully materialized plain dict.  The content
hash is the sha256 of the effective config in canonical JSON form
(sorted keys, no whitespace), so two files that spell the same
experiment differently (key order, omitted defaults) share a hash, and a
seed override changes it.

Exact quantities (ball centers, radii-defining fractions) travel as
strings like ``"1/3"`` and are canonicalized through
:class:`fractions.Fraction`; plain ints are accepted too.  Floats are
allowed only where downstream code consumes floats.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Mapping, Optional

__all__ = [
    "SCHEMA_VERSION",
    "KINDS",
    "KIND_SUMMARIES",
    "ConfigError",
    "ExperimentConfig",
    "load_config",
    "validate_config",
    "config_hash",
    "parse_fraction",
]

SCHEMA_VERSION = 1

KINDS = (
    "multilog-hit",
    "multilog-return",
    "gibbs-lil",
    "poisson-hit",
    "mixed-poisson-return",
    "scaled-process",
    "evt",
    "indep-audit",
    "kg-scan",
    "rogers-audit",
)

KIND_SUMMARIES: dict[str, str] = {
    "multilog-hit": "running max of the r-th shrinking-ball hit statistic at dyadic checkpoints",
    "multilog-return": "same statistic for returns to each orbit's own starting point",
    "gibbs-lil": "transfer-operator thermodynamics, Green-Kubo variance, CLT block surrogate",
    "poisson-hit": "hit-count law in a ball of measure lambda/n vs the Poisson pmf",
    "mixed-poisson-return": "return counts for a conjugated map vs mixed-Poisson with random intensity",
    "scaled-process": "rescaled hit marks vs an independent-increment band law",
    "evt": "extreme-value law of the scaled minimum of an observable along the orbit",
    "indep-audit": "short-range/long-range independence ratios and exponential-mixing defects",
    "kg-scan": "solution counts of Diophantine inequalities: exact per-alpha scans or MC averages",
    "rogers-audit": "moment identities for lattice point counts under the Haar measure",
}


class ConfigError(ValueError):
    """Schema violation; ``path`` is the dotted location of the offense."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


def parse_fraction(value) -> Fraction:
    """Exact rational from an int or a 'p/q' / 'p' string."""
    if isinstance(value, bool):
        raise ValueError("boolean is not a fraction")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, str):
        return Fraction(value.strip())
    raise ValueError(f"expected int or 'p/q' string, got {type(value).__name__}")


# --- field schema ----------------------------------------------------------------


@dataclass(frozen=True)
class _Field:
    kind: str  # int | number | str | bool | fraction | enum | list | dict | filename
    required: bool = True
    default: Any = None
    choices: Optional[tuple] = None
    lo: Optional[float] = None
    hi: Optional[float] = None
    item: Optional["_Field"] = None
    sub: Optional[Mapping[str, "_Field"]] = None
    allow_null: bool = False
    length: Optional[tuple[int, int]] = None  # list length bounds


def _req(kind: str, **kw) -> _Field:
    return _Field(kind=kind, required=True, **kw)


def _opt(kind: str, default, **kw) -> _Field:
    return _Field(kind=kind, required=False, default=default, **kw)


def _canon_number(value, f: _Field, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a number, got {type(value).__name__}")
    x = float(value)
    if not math.isfinite(x):
        raise ConfigError(path, "must be finite")
    if f.lo is not None and x < f.lo:
        raise ConfigError(path, f"must be >= {f.lo}")
    if f.hi is not None and x > f.hi:
        raise ConfigError(path, f"must be <= {f.hi}")
    return x


def _canon_int(value, f: _Field, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(path, f"expected an integer, got {type(value).__name__}")
    if f.lo is not None and value < f.lo:
        raise ConfigError(path, f"must be >= {int(f.lo)}")
    if f.hi is not None and value > f.hi:
        raise ConfigError(path, f"must be <= {int(f.hi)}")
    return value


def _canon_value(value, f: _Field, path: str):
    if value is None:
        if f.allow_null:
            return None
        raise ConfigError(path, "must not be null")
    if f.kind == "int":
        return _canon_int(value, f, path)
    if f.kind == "number":
        return _canon_number(value, f, path)
    if f.kind == "bool":
        if not isinstance(value, bool):
            raise ConfigError(path, f"expected a boolean, got {type(value).__name__}")
        return value
    if f.kind == "str":
        if not isinstance(value, str) or not value:
            raise ConfigError(path, "expected a nonempty string")
        return value
    if f.kind == "enum":
        if value not in f.choices:
            raise ConfigError(path, f"must be one of {list(f.choices)}, got {value!r}")
        return value
    if f.kind == "fraction":
        try:
            q = parse_fraction(value)
        except (ValueError, ZeroDivisionError) as exc:
            raise ConfigError(path, f"not an exact fraction: {exc}") from None
        x = float(q)
        if f.lo is not None and x < f.lo:
            raise ConfigError(path, f"must be >= {f.lo}")
        if f.hi is not None and x > f.hi:
            raise ConfigError(path, f"must be <= {f.hi}")
        return str(q)
    if f.kind == "filename":
        if not isinstance(value, str) or not value:
            raise ConfigError(path, "expected a nonempty filename")
        if "/" in value or "\\" in value or value in (".", "..") or len(value) > 128:
            raise ConfigError(path, "must be a bare filename, no path separators")
        return value
    if f.kind == "list":
        if not isinstance(value, list):
            raise ConfigError(path, f"expected a list, got {type(value).__name__}")
        if f.length is not None:
            lo, hi = f.length
            if not lo <= len(value) <= hi:
                raise ConfigError(path, f"length must be in [{lo}, {hi}]")
        return [
            _canon_value(v, f.item, f"{path}[{i}]") for i, v in enumerate(value)
        ]
    if f.kind == "dict":
        return _canon_dict(value, f.sub, path)
    raise AssertionError(f"unhandled field kind {f.kind}")


def _canon_dict(value, schema: Mapping[str, _Field], path: str) -> dict:
    if not isinstance(value, dict):
        raise ConfigError(path, f"expected an object, got {type(value).__name__}")
    for key in value:
        if key not in schema:
            where = f"{path}.{key}" if path else str(key)
            raise ConfigError(where, "unknown key")
    out: dict[str, Any] = {}
    for key, f in schema.items():
        where = f"{path}.{key}" if path else str(key)
        if key in value:
            out[key] = _canon_value(value[key], f, where)
        elif f.required:
            raise ConfigError(where, "missing required key")
        elif f.kind == "dict":
            out[key] = _canon_dict(
                f.default if f.default is not None else {}, f.sub, where
            )
        else:
            out[key] = f.default
    return out


# --- per-kind schemas ------------------------------------------------------------

_PAIR = _req("list", item=_req("number", lo=0.0), length=(2, 2))

_OUTPUTS = _opt(
    "dict",
    {},
    sub={
        "summary": _opt("filename", "summary.csv"),
        "records": _opt("filename", "records.jsonl"),
        "curves": _opt("filename", "curves.json"),
    },
)

_PRECISION = _opt(
    "dict", {}, sub={"guard_bits": _opt("int", 64, lo=16, hi=4096)}
)

# The orbit fast path stores binary expansions, so the expanding-map kinds
# run the doubling map; branch counts other than 2 live only in gibbs-lil.
_DOUBLING_SYSTEM = _opt(
    "dict",
    {},
    sub={"kind": _opt("enum", "doubling", choices=("doubling",))},
)

_CONJUGATED_SYSTEM = _opt(
    "dict",
    {},
    sub={
        "kind": _opt("enum", "conjugated-doubling", choices=("conjugated-doubling",)),
        "amplitude": _opt("number", 0.8, lo=0.0, hi=0.99),
    },
)

_SCHEDULE = _opt(
    "dict",
    {},
    sub={
        "c": _opt("number", 1.0, lo=1e-9),
        "d_eff": _opt("number", 1.0, lo=1e-9),
        "s": _opt("number", 0.0, lo=0.0),
        "n_min": _opt("int", 3, lo=3),
    },
)


def _common(extra: Mapping[str, _Field]) -> dict[str, _Field]:
    base: dict[str, _Field] = {
        "schema_version": _req("int", lo=1, hi=SCHEMA_VERSION),
        "kind": _req("enum", choices=KINDS),
        "name": _req("str"),
        "seed": _req("int", lo=0, hi=2**64 - 1),
        "precision": _PRECISION,
        "outputs": _OUTPUTS,
    }
    base.update(extra)
    return base


_SCHEMAS: dict[str, dict[str, _Field]] = {
    "poisson-hit": _common(
        {
            "system": _DOUBLING_SYSTEM,
            "target": _req(
                "dict",
                sub={
                    "center": _req("fraction", lo=0.0, hi=1.0),
                    "lambda": _req("number", lo=1e-6, hi=64.0),
                },
            ),
            "run": _req(
                "dict",
                sub={
                    "samples": _req("int", lo=10_000, hi=4_000_000),
                    "n_steps": _req("int", lo=16, hi=1 << 26),
                    "r_max": _opt("int", 3, lo=1, hi=8),
                },
            ),
        }
    ),
    "mixed-poisson-return": _common(
        {
            "system": _CONJUGATED_SYSTEM,
            "target": _req(
                "dict",
                sub={
                    "taus": _req(
                        "list",
                        item=_req("number", lo=1e-6, hi=64.0),
                        length=(1, 16),
                    ),
                },
            ),
            "run": _req(
                "dict",
                sub={
                    "samples": _req("int", lo=10_000, hi=4_000_000),
                    "n_steps": _req("int", lo=16, hi=1 << 26),
                },
            ),
        }
    ),
    "multilog-hit": _common(
        {
            "system": _DOUBLING_SYSTEM,
            "target": _req(
                "dict", sub={"center": _req("fraction", lo=0.0, hi=1.0)}
            ),
            "run": _req(
                "dict",
                sub={
                    "samples": _req("int", lo=1, hi=100_000),
                    "log2_n_max": _req("int", lo=6, hi=26),
                    "log2_n_min": _opt("int", 4, lo=2, hi=24),
                    "r_values": _opt(
                        "list",
                        [1, 2],
                        item=_req("int", lo=1, hi=8),
                        length=(1, 4),
                    ),
                },
            ),
        }
    ),
    "multilog-return": _common(
        {
            "system": _DOUBLING_SYSTEM,
            "run": _req(
                "dict",
                sub={
                    "samples": _req("int", lo=1, hi=100_000),
                    "log2_n_max": _req("int", lo=6, hi=26),
                    "log2_n_min": _opt("int", 4, lo=2, hi=24),
                    "r_values": _opt(
                        "list",
                        [1, 2],
                        item=_req("int", lo=1, hi=8),
                        length=(1, 4),
                    ),
                },
            ),
        }
    ),
    "gibbs-lil": _common(
        {
            "potential": _req(
                "dict",
                sub={
                    "kind": _req("enum", choices=("weights", "conformal")),
                    "weights": _opt(
                        "list",
                        None,
                        item=_req("number", lo=1e-12, hi=1.0),
                        length=(2, 64),
                        allow_null=True,
                    ),
                    "depth": _opt("int", 1, lo=1, hi=8),
                    "branches": _opt("int", 2, lo=2, hi=64),
                    "t": _opt("number", 1.0, lo=-64.0, hi=64.0),
                },
            ),
            "run": _req(
                "dict",
                sub={
                    "samples": _req("int", lo=16, hi=1_000_000),
                    "block_len": _req("int", lo=16, hi=1 << 20),
                },
            ),
        }
    ),
    "scaled-process": _common(
        {
            "system": _DOUBLING_SYSTEM,
            "target": _req(
                "dict",
                sub={
                    "center": _req("fraction", lo=0.0, hi=1.0),
                    "radius_cap": _req("number", lo=1e-6, hi=64.0),
                    "gamma": _opt("number", 2.0, lo=1e-9),
                },
            ),
            "run": _req(
                "dict",
                sub={
                    "samples": _req("int", lo=10_000, hi=1_000_000),
                    "n_steps": _req("int", lo=16, hi=1 << 26),
                    "bands": _opt(
                        "list",
                        [[0.0, 0.5], [0.5, 1.0], [1.0, 2.0]],
                        item=_PAIR,
                        length=(1, 32),
                    ),
                },
            ),
        }
    ),
    "evt": _common(
        {
            "system": _DOUBLING_SYSTEM,
            "target": _req(
                "dict",
                sub={
                    "center": _req("fraction", lo=0.0, hi=1.0),
                    "observable": _opt(
                        "enum", "quadratic-min", choices=("quadratic-min",)
                    ),
                    "sigma": _opt("number", 2.0, lo=1e-9),
                    "scale": _opt("number", 1.0, lo=1e-9),
                },
            ),
            "run": _req(
                "dict",
                sub={
                    "samples": _req("int", lo=10_000, hi=4_000_000),
                    "n_steps": _req("int", lo=16, hi=1 << 26),
                    "ks_threshold": _opt("number", 0.03, lo=1e-6, hi=1.0),
                },
            ),
        }
    ),
    "indep-audit": _common(
        {
            "system": _DOUBLING_SYSTEM,
            "target": _req(
                "dict",
                sub={
                    "center": _req("fraction", lo=0.0, hi=1.0),
                    "schedule": _SCHEDULE,
                },
            ),
            "params": _req(
                "dict",
                sub={
                    "tuples": _req(
                        "list",
                        item=_req(
                            "dict",
                            sub={
                                "n": _req("int", lo=2, hi=1 << 26),
                                "ks": _req(
                                    "list",
                                    item=_req("int", lo=1),
                                    length=(1, 8),
                                ),
                            },
                        ),
                        length=(1, 32),
                    ),
                    "ratio_tol": _opt("number", 0.15, lo=1e-6, hi=1.0),
                    "em_fourier": _opt(
                        "list",
                        [],
                        item=_req(
                            "dict",
                            sub={
                                "modes": _req(
                                    "list", item=_req("int"), length=(2, 8)
                                ),
                                "times": _req(
                                    "list",
                                    item=_req("int", lo=0),
                                    length=(2, 8),
                                ),
                            },
                        ),
                        length=(0, 64),
                    ),
                    "em_ramp_centers": _opt(
                        "list",
                        [],
                        item=_req("number", lo=0.0, hi=1.0),
                        length=(0, 8),
                    ),
                    "em_ramp_times": _opt(
                        "list", [], item=_req("int", lo=1), length=(0, 8)
                    ),
                    "em_samples": _opt("int", 100_000, lo=10_000, hi=4_000_000),
                },
            ),
            "run": _req("dict", sub={"samples": _req("int", lo=10_000, hi=4_000_000)}),
        }
    ),
    "kg-scan": _common(
        {
            "query": _req(
                "dict",
                sub={
                    "dim": _opt("int", 1, lo=1, hi=2),
                    "c": _opt("number", 1.0, lo=1e-9, hi=1e9),
                    "s": _opt("number", 0.0, lo=0.0, hi=64.0),
                    "flavor": _opt(
                        "enum",
                        "homogeneous",
                        choices=("homogeneous", "inhomogeneous", "simultaneous"),
                    ),
                    "norm": _opt("enum", "euclidean", choices=("euclidean", "sup")),
                    "shift": _opt("number", 0.0, lo=0.0, hi=1.0),
                },
            ),
            "run": _req(
                "dict",
                sub={
                    "mode": _req("enum", choices=("scan", "mc-average")),
                    "alphas": _opt(
                        "list",
                        None,
                        item=_req("str"),
                        length=(1, 64),
                        allow_null=True,
                    ),
                    "n_max": _opt("int", None, lo=16, hi=1_000_000, allow_null=True),
                    "ratio": _opt("number", 2.0, lo=1.0001, hi=16.0),
                    "samples": _opt("int", None, lo=1, hi=4_000_000, allow_null=True),
                    "n": _opt("int", None, lo=16, hi=1_000_000, allow_null=True),
                    "withgcd": _opt("bool", None, allow_null=True),
                },
            ),
        }
    ),
    "rogers-audit": _common(
        {
            "run": _req(
                "dict",
                sub={
                    "mode": _req("enum", choices=("moments", "multi-solution")),
                    "samples": _req("int", lo=100, hi=8_000_000),
                    "a": _opt("number", 0.5, lo=1e-6, hi=16.0),
                    "tau": _opt("number", 1.0, lo=0.0, hi=40.0),
                    "offsets_per_basis": _opt("int", 4, lo=1, hi=256),
                    "m_log2s": _opt(
                        "list",
                        [4, 5, 6, 7, 8, 9, 10],
                        item=_req("int", lo=2, hi=30),
                        length=(2, 16),
                    ),
                    "c": _opt("number", 1.0, lo=1e-9, hi=1e3),
                    "s": _opt("number", 0.0, lo=0.0, hi=8.0),
                },
            ),
        }
    ),
}


# --- cross-field checks -----------------------------------------------------------


def _check_gibbs(cfg: dict) -> None:
    pot = cfg["potential"]
    if pot["kind"] == "weights":
        if pot["weights"] is None:
            raise ConfigError("potential.weights", "required for kind 'weights'")
        k, m = pot["branches"], pot["depth"]
        if len(pot["weights"]) != k**m:
            raise ConfigError(
                "potential.weights",
                f"need branches**depth = {k**m} entries, got {len(pot['weights'])}",
            )


def _check_kg(cfg: dict) -> None:
    run = cfg["run"]
    if run["mode"] == "scan":
        if run["alphas"] is None:
            raise ConfigError("run.alphas", "required in scan mode")
        if run["n_max"] is None:
            raise ConfigError("run.n_max", "required in scan mode")
        for i, a in enumerate(run["alphas"]):
            if a not in ("golden", "sqrt2"):
                try:
                    parse_fraction(a)
                except (ValueError, ZeroDivisionError):
                    raise ConfigError(
                        f"run.alphas[{i}]",
                        "must be 'golden', 'sqrt2', or an exact fraction",
                    ) from None
    else:
        if run["samples"] is None:
            raise ConfigError("run.samples", "required in mc-average mode")
        if run["n"] is None:
            raise ConfigError("run.n", "required in mc-average mode")
    if cfg["query"]["flavor"] != "inhomogeneous" and cfg["query"]["shift"] != 0.0:
        raise ConfigError("query.shift", "only the inhomogeneous flavor takes a shift")


def _check_multilog(cfg: dict) -> None:
    run = cfg["run"]
    if run["log2_n_min"] >= run["log2_n_max"]:
        raise ConfigError("run.log2_n_min", "must be < run.log2_n_max")


def _check_scaled(cfg: dict) -> None:
    for i, (lo, hi) in enumerate(cfg["run"]["bands"]):
        if not lo < hi:
            raise ConfigError(f"run.bands[{i}]", "band must satisfy lo < hi")
    cap = max(hi for _, hi in cfg["run"]["bands"])
    if cap > cfg["target"]["radius_cap"] + 1e-12:
        raise ConfigError("run.bands", "bands must sit inside [0, target.radius_cap]")


def _check_indep(cfg: dict) -> None:
    for i, tup in enumerate(cfg["params"]["tuples"]):
        ks = tup["ks"]
        if list(ks) != sorted(set(ks)):
            raise ConfigError(
                f"params.tuples[{i}].ks", "must be strictly increasing"
            )
        if ks[-1] > tup["n"]:
            raise ConfigError(f"params.tuples[{i}].ks", "entries must be <= n")
    for i, chk in enumerate(cfg["params"]["em_fourier"]):
        if len(chk["modes"]) != len(chk["times"]):
            raise ConfigError(
                f"params.em_fourier[{i}]", "modes and times must have equal length"
            )
    ramps = cfg["params"]["em_ramp_centers"]
    times = cfg["params"]["em_ramp_times"]
    if bool(ramps) != bool(times):
        raise ConfigError(
            "params.em_ramp_times",
            "ramp centers and ramp times must be given together",
        )


def _check_rogers(cfg: dict) -> None:
    run = cfg["run"]
    if run["mode"] == "moments" and run["samples"] < 100_000:
        raise ConfigError(
            "run.samples", "moment mode needs >= 100000 samples for stable estimates"
        )


_CROSS_CHECKS: dict[str, Callable[[dict], None]] = {
    "gibbs-lil": _check_gibbs,
    "kg-scan": _check_kg,
    "multilog-hit": _check_multilog,
    "multilog-return": _check_multilog,
    "scaled-process": _check_scaled,
    "indep-audit": _check_indep,
    "rogers-audit": _check_rogers,
}


# --- public api -------------------------------------------------------------------


def canonical_json(doc: Mapping) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), allow_nan=False)


def config_hash(effective: Mapping) -> str:
    return hashlib.sha256(canonical_json(effective).encode("ascii")).hexdigest()


def validate_config(doc: Mapping, *, seed_override: Optional[int] = None) -> dict:
    """Validated effective config (defaults filled) or ConfigError."""
    if not isinstance(doc, Mapping):
        raise ConfigError("<document>", "top level must be an object")
    version = doc.get("schema_version")
    if not isinstance(version, int) or isinstance(version, bool):
        raise ConfigError("schema_version", "missing or not an integer")
    if version != SCHEMA_VERSION:
        raise ConfigError(
            "schema_version", f"unsupported version {version}, expected {SCHEMA_VERSION}"
        )
    kind = doc.get("kind")
    if kind not in _SCHEMAS:
        raise ConfigError("kind", f"must be one of {list(KINDS)}, got {kind!r}")
    cfg = _canon_dict(dict(doc), _SCHEMAS[kind], "")
    if seed_override is not None:
        if not 0 <= seed_override < 2**64:
            raise ConfigError("seed", "override must be an unsigned 64-bit integer")
        cfg["seed"] = seed_override
    check = _CROSS_CHECKS.get(kind)
    if check is not None:
        check(cfg)
    return cfg


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated effective config plus its canonical content hash."""

    data: Mapping[str, Any] = field(repr=False)
    hash: str = ""

    @property
    def kind(self) -> str:
        return self.data["kind"]

    @property
    def name(self) -> str:
        return self.data["name"]

    @property
    def seed(self) -> int:
        return self.data["seed"]

    @property
    def guard_bits(self) -> int:
        return self.data["precision"]["guard_bits"]

    def output_name(self, which: str) -> str:
        return self.data["outputs"][which]

    def __getitem__(self, key: str):
        return self.data[key]

    @staticmethod
    def from_doc(doc: Mapping, *, seed_override: Optional[int] = None) -> "ExperimentConfig":
        eff = validate_config(doc, seed_override=seed_override)
        return ExperimentConfig(data=eff, hash=config_hash(eff))


def load_config(path, *, seed_override: Optional[int] = None) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError("<document>", f"cannot read config: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError("<document>", f"not valid JSON: {exc}") from None
    return ExperimentConfig.from_doc(doc, seed_override=seed_override)
