"""Flat ``key = value`` experiment configuration.

Grammar, one entry per line::

    # comment (also allowed after a value)
    key = value
    support = 0.9 0.1 | 0.5     # repeatable: arm means, then the weight

Recognised keys:

=================  ==========================================================
``mode``           verify-oer, verify-nash, verify-subgame, simulate, regret
``name``           free-form label
``algorithm``      MAUCB, MASE, MAFAEE, MATS or VICTIM
``K m T``          positive integers; ``K`` may be inferred from the prior
``support``        one prior row (repeatable)
``instance``       shorthand for a one-point prior: ``instance = 0.6 0.4``
``generator``      ``gap``: best arm uniform over K at ``base_mean + delta``,
                   the rest at ``base_mean``, one point per ``gap_values``
                   entry and position, uniform weights
``gap_values``     space-separated gaps for the ``gap`` generator
``base_mean``      default 0.5
``seeds``          ``a..b`` (inclusive range), a list ``3 5 8``, or a count ``n``
                   meaning ``0..n-1``; required by float-mode simulate and regret
``exact``          true/false: rational arithmetic for the exact modes
``sp``             true/false: use SP-CAOS instead of CAOS
``variant``        full or efficient OER
``node_budget``    integer guard for the exact recursions
``exhaustive``     true/false: add exhaustive policy enumeration (verify-nash)
``deviation``      ``kind agent trigger`` for simulate (optional)
``N``              MAFAEE exploration length override
``sweep``          ``m`` or ``T``: the variable swept by regret/fit
``sweep_values``   its values
``slope_range``    ``lo hi`` acceptance band for ``fit``
``ratio_range``    ``lo hi`` band for mean regret first/last sweep point
``out``            default output path
=================  ==========================================================
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Optional

from ..algos import ALGORITHMS, DEFAULT_NODE_BUDGET
from ..core import DiscretePrior
from ..engine import DEVIATION_KINDS

MODES = ("verify-oer", "verify-nash", "verify-subgame", "simulate", "regret")
MONTE_CARLO = ("simulate", "regret")
REPEATABLE = ("support",)
KNOWN = {
    "mode", "name", "algorithm", "K", "m", "T", "support", "instance", "generator", "gap_values",
    "base_mean", "seeds", "exact", "sp", "variant", "node_budget", "exhaustive", "deviation", "N",
    "sweep", "sweep_values", "slope_range", "ratio_range", "out",
}


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending key."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass(frozen=True)
class ExperimentConfig:
    mode: str = "regret"
    name: str = "experiment"
    algorithm: str = "MAUCB"
    K: int = 0
    m: int = 1
    T: int = 1
    rows: tuple = ()
    generator: Optional[str] = None
    gap_values: tuple = ()
    base_mean: float = 0.5
    seeds: tuple = ()
    exact: bool = False
    sp: bool = False
    variant: str = "full"
    node_budget: int = DEFAULT_NODE_BUDGET
    exhaustive: bool = False
    deviation: Optional[tuple] = None
    N: Optional[int] = None
    sweep: Optional[str] = None
    sweep_values: tuple = ()
    slope_range: Optional[tuple] = None
    ratio_range: Optional[tuple] = None
    out: Optional[str] = None
    source: Optional[str] = field(default=None, compare=False)

    @property
    def prior_rows(self) -> tuple:
        if self.rows:
            return self.rows
        return gap_prior_rows(self.K, self.gap_values, self.base_mean)

    def prior(self, exact: Optional[bool] = None) -> DiscretePrior:
        return DiscretePrior.from_rows(self.prior_rows, exact=self.exact if exact is None else exact)

    def with_(self, **changes) -> "ExperimentConfig":
        data = asdict(self)
        data.update(changes)
        return ExperimentConfig(**data)

    def points(self) -> list:
        """One config per sweep value (or just this one)."""
        if not self.sweep:
            return [self]
        return [self.with_(**{self.sweep: v}) for v in self.sweep_values]

    @property
    def digest(self) -> str:
        data = asdict(self)
        data.pop("source")
        data.pop("out")
        return hashlib.sha256(json.dumps(data, sort_keys=True, default=str).encode()).hexdigest()[:16]


def gap_prior_rows(K: int, gaps, base: float) -> tuple:
    """Best arm uniform over ``K`` positions at ``base + gap``; one row per (gap, position)."""
    rows = []
    n = len(gaps) * K
    for gap in gaps:
        for best in range(K):
            means = tuple(round(base + gap, 12) if a == best else base for a in range(K))
            rows.append((means, Fraction(1, n)))
    return tuple(rows)


def _strip(line: str) -> str:
    return line.split("#", 1)[0].strip()


def _int(key, text, lo=1):
    try:
        v = int(text)
    except ValueError:
        raise ConfigError(key, f"expected an integer, got {text!r}") from None
    if v < lo:
        raise ConfigError(key, f"must be at least {lo}, got {v}")
    return v


def _float(key, text):
    try:
        return float(text)
    except ValueError:
        raise ConfigError(key, f"expected a number, got {text!r}") from None


def _bool(key, text):
    t = text.lower()
    if t in ("true", "yes", "1", "on"):
        return True
    if t in ("false", "no", "0", "off"):
        return False
    raise ConfigError(key, f"expected true or false, got {text!r}")


def _floats(key, text):
    return tuple(_float(key, x) for x in text.split())


def _row(text: str) -> tuple:
    if "|" not in text:
        raise ConfigError("support", f"expected 'means | weight', got {text!r}")
    means, weight = text.split("|", 1)
    vals = _floats("support", means)
    if not vals:
        raise ConfigError("support", "row has no arm means")
    w = weight.strip()
    return vals, (_float("support", w) if w else None)


def _seeds(text: str) -> tuple:
    text = text.strip()
    if ".." in text:
        a, b = text.split("..", 1)
        lo, hi = _int("seeds", a, 0), _int("seeds", b, 0)
        if hi < lo:
            raise ConfigError("seeds", f"empty range {text!r}")
        return tuple(range(lo, hi + 1))
    if " " in text or "," in text:
        return tuple(_int("seeds", x, 0) for x in text.replace(",", " ").split())
    return tuple(range(_int("seeds", text, 1)))


def parse_config(text: str, source: Optional[str] = None, mode: Optional[str] = None,
                 exact: bool = False) -> ExperimentConfig:
    """Parse a config document; ``mode`` and ``exact``, when given, override the document."""
    raw: dict = {}
    for n, line in enumerate(text.splitlines(), start=1):
        line = _strip(line)
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}", f"expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in KNOWN:
            raise ConfigError(key, "unknown key")
        if key in REPEATABLE:
            raw.setdefault(key, []).append(value)
        elif key in raw:
            raise ConfigError(key, "given twice")
        else:
            raw[key] = value
    if mode is not None:
        raw["mode"] = mode
    if exact:
        raw["exact"] = "true"
    return build_config(raw, source)


def build_config(raw: dict, source: Optional[str] = None) -> ExperimentConfig:
    kw: dict = {"source": source}
    if "mode" in raw:
        if raw["mode"] not in MODES:
            raise ConfigError("mode", f"expected one of {', '.join(MODES)}, got {raw['mode']!r}")
        kw["mode"] = raw["mode"]
    if "name" in raw:
        kw["name"] = raw["name"]
    if "algorithm" in raw:
        alg = raw["algorithm"].upper()
        if alg not in ALGORITHMS:
            raise ConfigError("algorithm", f"expected one of {', '.join(sorted(ALGORITHMS))}, got {raw['algorithm']!r}")
        kw["algorithm"] = alg
    for key in ("m", "T", "K", "node_budget"):
        if key in raw:
            kw[key] = _int(key, raw[key])
    if "N" in raw:
        kw["N"] = _int("N", raw["N"])
    for key in ("exact", "sp", "exhaustive"):
        if key in raw:
            kw[key] = _bool(key, raw[key])
    if "variant" in raw:
        if raw["variant"] not in ("full", "efficient"):
            raise ConfigError("variant", f"expected full or efficient, got {raw['variant']!r}")
        kw["variant"] = raw["variant"]
    if "base_mean" in raw:
        kw["base_mean"] = _float("base_mean", raw["base_mean"])
    if "seeds" in raw:
        kw["seeds"] = _seeds(raw["seeds"])
    if "out" in raw:
        kw["out"] = raw["out"]

    sources = [k for k in ("support", "instance", "generator") if k in raw]
    if len(sources) != 1:
        raise ConfigError("support", "give exactly one of support rows, instance or generator")
    if "support" in raw:
        rows = [_row(r) for r in raw["support"]]
        if any(w is None for _, w in rows):
            raise ConfigError("support", "every row needs a weight after '|'")
        kw["rows"] = tuple(rows)
    elif "instance" in raw:
        kw["rows"] = ((_floats("instance", raw["instance"]), 1.0),)
    else:
        if raw["generator"] != "gap":
            raise ConfigError("generator", f"only 'gap' is supported, got {raw['generator']!r}")
        if "gap_values" not in raw:
            raise ConfigError("gap_values", "required by the gap generator")
        if "K" not in raw:
            raise ConfigError("K", "required by the gap generator")
        kw["generator"] = "gap"
        kw["gap_values"] = _floats("gap_values", raw["gap_values"])

    if "deviation" in raw:
        parts = raw["deviation"].split()
        if len(parts) != 3 or parts[0] not in DEVIATION_KINDS:
            raise ConfigError("deviation", f"expected 'kind agent trigger' with kind in {', '.join(DEVIATION_KINDS)}")
        kw["deviation"] = (parts[0], _int("deviation", parts[1], 0), _int("deviation", parts[2]))
    if "sweep" in raw:
        if raw["sweep"] not in ("m", "T"):
            raise ConfigError("sweep", f"expected m or T, got {raw['sweep']!r}")
        if "sweep_values" not in raw:
            raise ConfigError("sweep_values", "required when sweep is set")
        kw["sweep"] = raw["sweep"]
        kw["sweep_values"] = tuple(_int("sweep_values", x) for x in raw["sweep_values"].split())
    for key in ("slope_range", "ratio_range"):
        if key in raw:
            band = _floats(key, raw[key])
            if len(band) != 2 or band[0] > band[1]:
                raise ConfigError(key, f"expected 'lo hi', got {raw[key]!r}")
            kw[key] = band

    cfg = ExperimentConfig(**kw)
    return validate(cfg)


def validate(cfg: ExperimentConfig) -> ExperimentConfig:
    rows = cfg.prior_rows
    K = len(rows[0][0])
    if any(len(means) != K for means, _ in rows):
        raise ConfigError("support", "rows have different numbers of arms")
    if cfg.K and cfg.K != K:
        raise ConfigError("K", f"K={cfg.K} but the prior has {K} arms")
    for means, w in rows:
        if any(not 0 <= x <= 1 for x in means):
            raise ConfigError("support", f"arm means must lie in [0, 1]: {means}")
        if w <= 0:
            raise ConfigError("support", f"weights must be positive: {w}")
    if abs(sum(w for _, w in rows) - 1) > 1e-9:
        raise ConfigError("support", "weights must sum to 1")
    if cfg.mode in MONTE_CARLO and not cfg.seeds and not (cfg.mode == "regret" and cfg.exact):
        raise ConfigError("seeds", f"mode {cfg.mode} needs at least one seed")
    if cfg.deviation and cfg.deviation[1] >= cfg.m:
        raise ConfigError("deviation", f"agent {cfg.deviation[1]} does not exist with m={cfg.m}")
    if cfg.sweep and len(cfg.sweep_values) < 1:
        raise ConfigError("sweep_values", "needs at least one value")
    return cfg.with_(K=K)


def load_config(path, mode: Optional[str] = None, exact: bool = False) -> ExperimentConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError("config", f"cannot read {p}: {exc.strerror or exc}") from None
    return parse_config(text, str(p), mode, exact)
