"""Seeded synthetic driver telemetry.

Speed and throttle are driven by two latent stationary AR(1) Gaussian
processes pushed through the profile's marginal distributions (a Gaussian
copula), so the per-band speed frequencies match the profile weights while
consecutive samples stay correlated like a real trace.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass
from importlib import resources

import numpy as np
from scipy import signal, special, stats

from .dataset import AGGRESSIVE, MODERATE, Dataset, SubsetPartition, concat

MAX_SPEED = 140.0
STYLES = {"aggressive": AGGRESSIVE, "moderate": MODERATE}


@dataclass(frozen=True)
class SpeedBand:
    lo: float
    hi: float
    weight: float


@dataclass(frozen=True)
class ThrottleBand:
    """Throttle distribution for speeds in [lo, hi)."""

    lo: float
    hi: float
    mode: float
    concentration: float

    def beta_params(self) -> tuple[float, float]:
        k = self.concentration - 2.0
        return self.mode * k + 1.0, (1.0 - self.mode) * k + 1.0


@dataclass(frozen=True)
class StyleProfile:
    speed_mix: tuple[SpeedBand, ...]
    throttle_given_speed: tuple[ThrottleBand, ...]
    noise_sd: tuple[float, float] = (1.0, 0.02)
    correlation: float = 0.95

    def __post_init__(self):
        w = np.array([b.weight for b in self.speed_mix])
        if len(w) == 0 or np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ValueError("speed band weights must be positive and sum to 1")
        for b in self.speed_mix:
            if not 0 <= b.lo < b.hi <= MAX_SPEED:
                raise ValueError(f"speed band {b.lo}:{b.hi} outside [0, {MAX_SPEED}]")
        if not self.throttle_given_speed:
            raise ValueError("no throttle bands")
        for t in self.throttle_given_speed:
            if not 0 <= t.mode <= 1:
                raise ValueError(f"throttle mode {t.mode} outside [0, 1]")
            if not t.concentration > 2:
                raise ValueError("throttle concentration must exceed 2")
        if not 0 <= self.correlation < 1:
            raise ValueError("correlation must be in [0, 1)")
        if min(self.noise_sd) < 0:
            raise ValueError("negative noise_sd")

    def mass_between(self, lo: float, hi: float) -> float:
        """Probability that the (noise-free) speed lies in [lo, hi]."""
        total = 0.0
        for b in self.speed_mix:
            overlap = max(0.0, min(hi, b.hi) - max(lo, b.lo))
            total += b.weight * overlap / (b.hi - b.lo)
        return total

    def speed_quantile(self, u: np.ndarray) -> np.ndarray:
        lo = np.array([b.lo for b in self.speed_mix])
        hi = np.array([b.hi for b in self.speed_mix])
        w = np.array([b.weight for b in self.speed_mix])
        cum = np.cumsum(w)
        cum[-1] = 1.0
        k = np.minimum(np.searchsorted(cum, u, side="right"), len(w) - 1)
        start = cum[k] - w[k]
        frac = np.clip((u - start) / w[k], 0.0, 1.0)
        return lo[k] + frac * (hi[k] - lo[k])

    def throttle_band_index(self, speed: np.ndarray) -> np.ndarray:
        edges = np.array([t.lo for t in self.throttle_given_speed])
        return np.clip(np.searchsorted(edges, speed, side="right") - 1, 0, len(edges) - 1)


def _parse_profile(sec) -> StyleProfile:
    def entries(key):
        return [tuple(float(v) for v in part.split(":")) for part in sec[key].split(",") if part.strip()]

    speed = tuple(SpeedBand(*e) for e in entries("speed_bands"))
    throttle = tuple(sorted((ThrottleBand(*e) for e in entries("throttle_bands")), key=lambda t: t.lo))
    noise = tuple(float(v) for v in sec.get("noise_sd", "1.0, 0.02").split(","))
    return StyleProfile(speed, throttle, noise, float(sec.get("correlation", "0.95")))


def load_profiles(path=None) -> dict[str, StyleProfile]:
    """Profiles keyed ``"<style>-<group>"``; the shipped file unless ``path`` is given."""
    cp = configparser.ConfigParser()
    if path is None:
        cp.read_string(resources.files("kmcsvm").joinpath("profiles.cfg").read_text(encoding="utf-8"))
    else:
        with open(path, encoding="utf-8") as fh:
            cp.read_file(fh)
    return {name: _parse_profile(cp[name]) for name in cp.sections()}


def default_profile(style: str, group: int = 1) -> StyleProfile:
    if style not in STYLES:
        raise ValueError(f"unknown style {style!r}")
    if group not in (1, 2):
        raise ValueError(f"unknown group {group!r}")
    return load_profiles()[f"{style}-{group}"]


@dataclass(frozen=True)
class GenConfig:
    duration: float
    profile: StyleProfile
    label: int
    seed: int = 0
    rate: float = 50.0

    def __post_init__(self):
        if self.label not in (AGGRESSIVE, MODERATE):
            raise ValueError("label must be +1 or -1")
        if not self.rate > 0 or self.n_samples < 1:
            raise ValueError("duration * rate must be at least 1 sample")

    @property
    def n_samples(self) -> int:
        return int(round(self.duration * self.rate))


def _latent_ar1(rng, n, rho):
    """Stationary AR(1) with unit marginal variance."""
    eps = rng.standard_normal(n)
    z0 = rng.standard_normal()
    out, _ = signal.lfilter([np.sqrt(1.0 - rho * rho)], [1.0, -rho], eps, zi=[rho * z0])
    return out


def generate(cfg: GenConfig) -> Dataset:
    p = cfg.profile
    n = cfg.n_samples
    rng = np.random.default_rng(cfg.seed)
    u_speed = special.ndtr(_latent_ar1(rng, n, p.correlation))
    u_throttle = special.ndtr(_latent_ar1(rng, n, p.correlation))

    speed = p.speed_quantile(u_speed)
    band = p.throttle_band_index(speed)
    ab = np.array([t.beta_params() for t in p.throttle_given_speed])
    throttle = stats.beta.ppf(u_throttle, ab[band, 0], ab[band, 1])

    speed = speed + p.noise_sd[0] * rng.standard_normal(n)
    throttle = throttle + p.noise_sd[1] * rng.standard_normal(n)
    X = np.column_stack([np.clip(speed, 0.0, MAX_SPEED), np.clip(throttle, 0.0, 1.0)])
    return Dataset(X, np.full(n, cfg.label), cfg.rate)


def derive_seed(*keys: int) -> int:
    return int(np.random.SeedSequence(list(keys)).generate_state(1)[0])


def generate_cohort(n_drivers_per_style: int, runs_per_driver: int, base: GenConfig, group: int = 1,
                    profiles: dict[int, StyleProfile] | None = None) -> tuple[Dataset, SubsetPartition]:
    """Aggressive and moderate drivers, each driving several runs.

    Every run is one contiguous subset of the returned partition. ``base``
    supplies duration (per run), rate and master seed; profiles default to
    the shipped ones for ``group``.
    """
    if n_drivers_per_style < 1 or runs_per_driver < 1:
        raise ValueError("driver and run counts must be >= 1")
    if profiles is None:
        profiles = {
            AGGRESSIVE: default_profile("aggressive", group),
            MODERATE: default_profile("moderate", group),
        }
    runs = []
    for style_idx, label in enumerate((AGGRESSIVE, MODERATE)):
        for driver in range(n_drivers_per_style):
            for run in range(runs_per_driver):
                seed = derive_seed(base.seed, style_idx, driver, run)
                cfg = GenConfig(base.duration, profiles[label], label, seed, base.rate)
                runs.append(generate(cfg))
    ds = concat(runs)
    assignments = np.repeat(np.arange(len(runs)), [len(r) for r in runs])
    return ds, SubsetPartition(len(runs), assignments)
