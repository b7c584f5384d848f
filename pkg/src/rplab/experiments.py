"""Parameter sweeps over r, exceptional-set extraction and shape checks of the non-concentration bounds.

The three families:

* ``thm1``: the planar projection PiTR(t, r) of R^3, bound C0 e^{-t/10} delta^{alpha-eps};
* ``thm2``: the representation push RepPush(n, t, r), bound C0 e^{-varpi(alpha) t/2} delta^{alpha-eps};
* ``thm3``: the moment-curve projection PK(n, k, r), bound C0 delta^{alpha-eps}.

An atom is bad at r when its m^delta reaches the same expression with
delta^{alpha - eta_mult * eta} in place of delta^{alpha - eps}; r is flagged
exceptional when the bad atoms carry more than delta^{eta/2} of the mass.
"""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import List, Optional, Sequence, Union

import numpy as np

from .concentration import All, RandomK, SamplePolicy, concentration_values, sample_indices
from .errors import ConfigError, FitUndefined, HypothesisViolated, InvalidInput
from .generators import GeneratorSpec, generate, ingest, natural_delta0, spec_from_dict, spec_to_dict
from .measures import ATOMS, FiniteMeasure, FrostmanCertificate, frostman_certify
from .rep_core import PK, PiTR, ProjectionSpec, RepPush, apply_many, varpi

THM1, THM2, THM3 = "thm1", "thm2", "thm3"
FAMILIES = (THM1, THM2, THM3)

# sampled-w policy for the restricted check: every good atom up to this size
FULL_SAMPLE_LIMIT = 20_000
DEFAULT_SAMPLE = 4096

_PURPOSE_RESTRICTED = 1
_PURPOSE_FIT = 2


@dataclass
class SweepConfig:
    source: Union[GeneratorSpec, str]
    family: str
    delta: float
    alpha: float
    epsilon: float
    t: float = 0.0
    n: int = 2
    k: Optional[int] = None
    c0: Optional[float] = None
    delta0: Optional[float] = None
    eta: Optional[float] = None
    eta_mult: float = 18.0
    r_count: int = 512
    r_min: float = 0.0
    r_max: float = 1.0
    sample_policy: Optional[SamplePolicy] = None
    seed: int = 0
    e_cap: float = 0.1
    g_cap: float = 0.1
    slack: float = 8.0
    atom_fraction: float = 0.99
    strict_window: bool = True
    fit_scales: int = 4
    fit_sample: int = 256
    center_policy: str = ATOMS
    threads: int = 1

    @property
    def eta_value(self) -> float:
        return self.epsilon / 20.0 if self.eta is None else self.eta

    @property
    def r_grid(self) -> np.ndarray:
        """Cell midpoints of r_count equal cells of [r_min, r_max]."""
        width = (self.r_max - self.r_min) / self.r_count
        return self.r_min + (np.arange(self.r_count) + 0.5) * width

    def to_dict(self) -> dict:
        d = asdict(self)
        d["source"] = self.source if isinstance(self.source, str) else spec_to_dict(self.source)
        sp = self.sample_policy
        d["sample_policy"] = None if sp is None else ("all" if isinstance(sp, All) else f"random:{sp.k}:{sp.seed}")
        return d


def family_spec(config: SweepConfig, r: float) -> ProjectionSpec:
    if config.family == THM1:
        return PiTR(config.t, r)
    if config.family == THM2:
        return RepPush(config.n, config.t, r)
    return PK(config.n, config.k, r)


def _decay(config: SweepConfig) -> float:
    if config.family == THM1:
        return math.exp(-config.t / 10.0)
    if config.family == THM2:
        return math.exp(-varpi(config.n, config.alpha) * config.t / 2.0)
    return 1.0


def bound_value(config: SweepConfig, c0: float) -> float:
    return c0 * _decay(config) * config.delta ** (config.alpha - config.epsilon)


def bad_threshold(config: SweepConfig, c0: float) -> float:
    return c0 * _decay(config) * config.delta ** (config.alpha - config.eta_mult * config.eta_value)


def dyadic_floor(x: float) -> float:
    if not x > 0:
        raise ConfigError("delta must be positive")
    e = math.floor(math.log2(x))
    if 2.0 ** (e + 1) <= x:
        e += 1
    elif 2.0**e > x:
        e -= 1
    return 2.0**e


def check_config(config: SweepConfig, delta0: float) -> List[str]:
    """Validate structure (raises ConfigError) and return hypothesis notes.

    Scale-window and epsilon-range violations raise when ``strict_window`` is
    set and are otherwise returned as notes; alpha outside the theorem's
    range is always only a note.
    """
    if config.family not in FAMILIES:
        raise ConfigError(f"family must be one of {FAMILIES}, got {config.family!r}")
    if not config.delta > 0:
        raise ConfigError("delta must be positive")
    if not config.alpha > 0:
        raise ConfigError("alpha must be positive")
    if not config.epsilon > 0:
        raise ConfigError("epsilon must be positive")
    if not config.t >= 0:
        raise ConfigError("t must be >= 0")
    if not 0 <= config.r_min < config.r_max <= 1:
        raise ConfigError("r range must satisfy 0 <= r_min < r_max <= 1")
    if config.r_count < 1:
        raise ConfigError("r_count must be >= 1")
    if config.family == THM1 and config.n != 2:
        raise ConfigError("thm1 acts on R^3 (n = 2)")
    if config.family == THM3:
        if config.k is None or not 1 <= config.k <= config.n + 1:
            raise ConfigError(f"thm3 needs k in 1..{config.n + 1}")
    if config.family == THM2 and not config.alpha < config.n + 1:
        raise ConfigError(f"thm2 needs alpha in (0, {config.n + 1})")

    window, notes = [], []
    d, e, a, n, t = config.delta, config.epsilon, config.alpha, config.n, config.t
    if config.family == THM1:
        if not 1 <= a <= 1.5:
            notes.append(f"alpha={a} outside [1, 3/2]: out of hypothesis")
        if a > 2:
            notes.append(f"alpha={a} exceeds the image dimension 2: out of hypothesis")
        if not e < a / 100:
            window.append(f"epsilon={e} not in (0, alpha/100)")
        if d < math.exp(t) * delta0:
            window.append(f"delta={d} < e^t delta0 = {math.exp(t) * delta0:.6g}")
    elif config.family == THM2:
        lim = min(a, n + 1 - a) / (1e4 * n)
        if not e < lim:
            window.append(f"epsilon={e} not below min(alpha, n+1-alpha)/(1e4 n) = {lim:.3g}")
        lo, hi = math.exp(n * t / 2) * delta0, math.exp(-n * t / 2)
        if not lo <= d <= hi:
            window.append(f"delta={d} outside the window [{lo:.6g}, {hi:.6g}]")
        if d > 0.01:
            window.append(f"delta={d} > 1/100")
    else:
        if a > config.k:
            notes.append(f"alpha={a} exceeds the image dimension k={config.k}: out of hypothesis")
        if not e < 1e-4 * a:
            window.append(f"epsilon={e} not below 1e-4 alpha")
        if d < delta0:
            window.append(f"delta={d} < delta0={delta0}")
    if window and config.strict_window:
        raise ConfigError("; ".join(window))
    return notes + [f"window: {w}" for w in window]


def _stream(seed: int, index: int, purpose: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(index), purpose]))


@dataclass
class SweepReport:
    family: str
    config: dict
    bound_value: float
    threshold: float
    flag_level: float
    c0: float
    delta0: float
    per_r: List[dict]
    exceptional: List[List[float]]
    exceptional_measure: float
    certificate: Optional[dict]
    hypothesis_ok: bool
    status: str
    notes: List[str] = field(default_factory=list)

    @property
    def r_values(self) -> np.ndarray:
        return np.array([row["r"] for row in self.per_r])

    @property
    def bad_mass(self) -> np.ndarray:
        return np.array([row["bad_mass"] for row in self.per_r])

    @property
    def flagged(self) -> np.ndarray:
        return np.array([row["flagged"] for row in self.per_r])

    @property
    def good_set_deficiency(self) -> np.ndarray:
        return self.bad_mass

    @property
    def fitted_exponents(self) -> np.ndarray:
        return np.array([np.nan if row["fitted_exponent"] is None else row["fitted_exponent"] for row in self.per_r])

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def write(self, out_dir, stem: str = "report") -> dict:
        os.makedirs(out_dir, exist_ok=True)
        paths = {
            "json": os.path.join(out_dir, f"{stem}.json"),
            "csv": os.path.join(out_dir, f"{stem}.csv"),
            "plot": os.path.join(out_dir, f"{stem}.dat"),
        }
        with open(paths["json"], "w") as fh:
            fh.write(self.to_json())
        with open(paths["csv"], "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["r", "bad_mass", "max_conc", "p99_conc", "flagged"])
            for row in self.per_r:
                writer.writerow(
                    [repr(row["r"]), repr(row["bad_mass"]), repr(row["max_concentration"]),
                     repr(row["p99_concentration"]), int(row["flagged"])]
                )
        write_plot_data(paths["plot"], "r", "bad_mass", self.r_values, self.bad_mass)
        return paths


def write_plot_data(path, x_name: str, y_name: str, xs, ys) -> None:
    with open(path, "w") as fh:
        fh.write(f"# {x_name} {y_name}\n")
        for x, y in zip(xs, ys):
            fh.write(f"{float(x)!r} {float(y)!r}\n")


def load_source(source, n: Optional[int] = None) -> FiniteMeasure:
    if isinstance(source, str):
        return ingest(source, n)
    if isinstance(source, dict):
        if set(source) == {"file"}:
            return ingest(source["file"], n)
        source = spec_from_dict(source)
    return generate(source)


def source_delta0(config: SweepConfig) -> float:
    if config.delta0 is not None:
        return config.delta0
    if isinstance(config.source, (str, dict)):
        raise ConfigError("delta0 is required for file sources")
    return natural_delta0(config.source)


def flagged_intervals(r_grid: np.ndarray, flagged: np.ndarray, width: float) -> List[List[float]]:
    out: List[List[float]] = []
    for r, f in zip(r_grid, flagged):
        if not f:
            continue
        lo, hi = r - width / 2, r + width / 2
        if out and abs(out[-1][1] - lo) < 1e-12:
            out[-1][1] = hi
        else:
            out.append([lo, hi])
    return out


def _median_slope(log_deltas, medians) -> float:
    medians = np.asarray(medians, dtype=float)
    if np.any(medians <= 0):
        raise FitUndefined("zero median concentration at some scale")
    return float(np.polyfit(log_deltas, np.log2(medians), 1)[0])


def exponent_fit(mu: FiniteMeasure, spec: ProjectionSpec, deltas: Sequence[float], sample_policy: SamplePolicy = All()) -> float:
    """Least-squares slope of log2(median m^delta) against log2(delta)."""
    deltas = [float(d) for d in deltas]
    if len(deltas) < 4:
        raise InvalidInput("exponent_fit needs at least 4 scales")
    idx = sample_indices(mu.size, sample_policy)
    images = apply_many(spec, mu.points)
    medians = [np.median(concentration_values(mu, spec, d, query_idx=idx, images=images)) for d in deltas]
    return _median_slope(np.log2(deltas), medians)


def _sweep_one(mu, config, i, r, threshold, bound, flag_level):
    spec = family_spec(config, float(r))
    images = apply_many(spec, mu.points)
    values = concentration_values(mu, spec, config.delta, images=images)
    bad = values >= threshold
    bad_mass = mu.mass_of(bad)
    good = ~bad
    row = {
        "r": float(r),
        "bad_mass": float(bad_mass),
        "flagged": bool(bad_mass > flag_level),
        "max_concentration": float(values.max()),
        "p99_concentration": float(np.quantile(values, 0.99)),
        "median_concentration": float(np.median(values)),
    }
    good_idx = np.flatnonzero(good)
    if len(good_idx):
        policy = config.sample_policy
        if policy is None:
            policy = All() if mu.size <= FULL_SAMPLE_LIMIT else RandomK(DEFAULT_SAMPLE)
        if isinstance(policy, All) or policy.k >= len(good_idx):
            sample = good_idx
        else:
            rng = _stream(config.seed, i, _PURPOSE_RESTRICTED)
            sample = np.sort(rng.choice(good_idx, size=policy.k, replace=False))
        restricted = concentration_values(mu, spec, config.delta, query_idx=sample, active=good, images=images)
        row.update(
            restricted_max=float(restricted.max()),
            restricted_median=float(np.median(restricted)),
            restricted_ok=int(np.count_nonzero(restricted <= config.slack * bound)),
            n_sampled=int(len(sample)),
        )
    else:
        row.update(restricted_max=None, restricted_median=None, restricted_ok=0, n_sampled=0)
    row["fitted_exponent"] = None
    if config.fit_scales >= 2:
        rng = _stream(config.seed, i, _PURPOSE_FIT)
        idx = np.arange(mu.size)
        if mu.size > config.fit_sample:
            idx = np.sort(rng.choice(mu.size, size=config.fit_sample, replace=False))
        deltas = [config.delta * 2.0**-j for j in range(config.fit_scales)]
        medians = [np.median(concentration_values(mu, spec, d, query_idx=idx, images=images)) for d in deltas]
        try:
            row["fitted_exponent"] = _median_slope(np.log2(deltas), medians)
        except FitUndefined:
            pass
    return row


def sweep(
    config: SweepConfig,
    mu: Optional[FiniteMeasure] = None,
    certificate: Optional[FrostmanCertificate] = None,
    raise_on_violation: bool = False,
) -> SweepReport:
    """Scan the r-grid; the report is produced even when certification fails.

    A non-dyadic delta is rounded down to a power of 2 and the rounding noted.
    """
    delta0 = source_delta0(config)
    rounding = []
    dyadic = dyadic_floor(config.delta)
    if dyadic != config.delta:
        rounding.append(f"delta rounded down from {config.delta!r} to {dyadic!r}")
        config = replace(config, delta=dyadic)
    notes = check_config(config, delta0) + rounding
    if mu is None:
        mu = load_source(config.source, config.n)
    if mu.ambient_n != config.n:
        raise ConfigError(f"source lives in R^{mu.dim} but the config declares n={config.n}")
    if certificate is None:
        certificate = frostman_certify(mu, config.alpha, delta0, config.center_policy)
    hypothesis_ok = config.c0 is None or certificate.c0 <= config.c0
    c0 = certificate.c0 if config.c0 is None else config.c0
    if not hypothesis_ok:
        notes.append(f"hypothesis-violated: certified C0={certificate.c0:.6g} exceeds c0={config.c0:.6g}")
    bound = bound_value(config, c0)
    threshold = bad_threshold(config, c0)
    flag_level = config.delta ** (config.eta_value / 2.0)

    grid = config.r_grid
    work = lambda ir: _sweep_one(mu, config, ir[0], ir[1], threshold, bound, flag_level)  # noqa: E731
    items = list(enumerate(grid))
    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            rows = list(pool.map(work, items))
    else:
        rows = [work(item) for item in items]

    width = (config.r_max - config.r_min) / config.r_count
    flagged = np.array([row["flagged"] for row in rows], dtype=bool)
    report = SweepReport(
        family=config.family,
        config=config.to_dict(),
        bound_value=bound,
        threshold=threshold,
        flag_level=flag_level,
        c0=c0,
        delta0=delta0,
        per_r=rows,
        exceptional=flagged_intervals(grid, flagged, width),
        exceptional_measure=float(np.count_nonzero(flagged) * width),
        certificate=certificate.to_dict(),
        hypothesis_ok=hypothesis_ok,
        status="ok" if hypothesis_ok else "hypothesis-violated",
        notes=notes,
    )
    if not hypothesis_ok and raise_on_violation:
        raise HypothesisViolated(notes[-1], report)
    return report


def verdict(report: SweepReport, config: SweepConfig) -> dict:
    """Three-part shape check of a sweep against the caps in ``config``."""
    flagged = report.flagged
    fraction = float(flagged.mean())
    keep = [row for row, f in zip(report.per_r, flagged) if not f]
    worst_def = max((row["bad_mass"] for row in keep), default=0.0)
    n_ok = sum(row["restricted_ok"] for row in keep)
    n_tot = sum(row["n_sampled"] for row in keep)
    atom_frac = n_ok / n_tot if n_tot else 1.0
    worst_ratio = max(
        (row["restricted_max"] / report.bound_value for row in keep if row["restricted_max"] is not None),
        default=0.0,
    )
    parts = {
        "exceptional": {
            "passed": fraction <= config.e_cap,
            "flagged_fraction": fraction,
            "exceptional_measure": report.exceptional_measure,
            "cap": config.e_cap,
        },
        "deficiency": {"passed": worst_def <= config.g_cap, "worst": worst_def, "cap": config.g_cap},
        "concentration": {
            "passed": atom_frac >= config.atom_fraction,
            "fraction_within": atom_frac,
            "required": config.atom_fraction,
            "slack": config.slack,
            "worst_ratio_to_bound": worst_ratio,
        },
    }
    passed = report.hypothesis_ok and all(p["passed"] for p in parts.values())
    return {
        "passed": passed,
        "status": report.status,
        "parts": parts,
        "bound_value": report.bound_value,
        "c0": report.c0,
        "notes": report.notes,
    }


def verify(config: SweepConfig, mu: Optional[FiniteMeasure] = None, certificate=None):
    """Run a sweep and judge it; returns (verdict, report)."""
    report = sweep(config, mu, certificate)
    return verdict(report, config), report
