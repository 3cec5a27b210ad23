"""Synthetic sparse binary designs with an optional sparse interaction truth."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import InputError
from .patterns import Dataset, Pattern, validate_pattern

DEFAULT_TRUE_MODEL: tuple[tuple[Pattern, float], ...] = (
    ((1,), 0.5),
    ((2, 3), -2.0),
    ((4, 5, 6), 3.0),
)


@dataclass
class ExperimentConfig:
    n: int = 100
    m: int = 8
    d: int = 3
    zeta: float = 0.95
    sigma: float = 1.0
    n_trials: int = 200
    alpha_sig: float = 0.05
    methods: list[str] = field(default_factory=lambda: ["homo", "poly", "ds"])
    seed: int = 0
    true_model: list[tuple[Pattern, float]] = field(default_factory=list)
    lam: float | None = None
    lam_scale: float = 1.0
    alpha_ridge: float = 0.0
    k_max: int | None = None
    jobs: int = 1

    def __post_init__(self):
        if not 0.0 <= self.zeta <= 1.0:
            raise InputError(f"zeta must lie in [0, 1], got {self.zeta}")
        if self.n_trials < 1:
            raise InputError("n_trials must be at least 1")
        if self.n < 4 or self.m < 1 or self.d < 1:
            raise InputError("need n >= 4, m >= 1 and d >= 1")
        if not self.sigma > 0:
            raise InputError("sigma must be positive")
        if not 0 < self.alpha_sig < 1:
            raise InputError("alpha_sig must lie in (0, 1)")
        bad = set(self.methods) - {"homo", "poly", "ds"}
        if bad:
            raise InputError(f"unknown methods {sorted(bad)}")
        self.true_model = [(validate_pattern(p, self.m), float(c)) for p, c in self.true_model]

    def to_dict(self) -> dict:
        out = asdict(self)
        out["true_model"] = [[list(p), c] for p, c in self.true_model]
        out.pop("jobs")
        return out

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        raw = dict(raw)
        raw["true_model"] = [(tuple(p), c) for p, c in raw.get("true_model", [])]
        return cls(**raw)


def synth_generate(config: ExperimentConfig, seed: int | None = None) -> Dataset:
    """Entries are 1 with probability ``1 - zeta``; ``y ~ N(mu, sigma^2 I)``."""
    rng = np.random.default_rng(config.seed if seed is None else seed)
    Z = (rng.random((config.n, config.m)) < 1.0 - config.zeta).astype(float)
    mu = np.zeros(config.n)
    for pattern, coef in config.true_model:
        mu += coef * np.prod(Z[:, [j - 1 for j in pattern]], axis=1)
    y = mu + config.sigma * rng.standard_normal(config.n)
    return Dataset(Z, y, config.sigma ** 2)


def design_lambda(Z: np.ndarray, sigma: float, scale: float) -> float:
    """Penalty that depends on the design only: ``scale * sigma * max_j ||z_j||``."""
    norms = np.sqrt((np.asarray(Z) ** 2).sum(axis=0))
    top = float(norms.max()) if norms.size else 0.0
    return scale * sigma * top if top > 0 else math.inf


def parse_true_model(text: str) -> list[tuple[Pattern, float]]:
    """Parse ``"0.5:1; -2:2,3; 3:4,5,6"`` into ``[((1,), 0.5), ((2, 3), -2.0), ...]``."""
    out = []
    for term in filter(None, (t.strip() for t in text.split(";"))):
        try:
            coef, idx = term.split(":")
            out.append((tuple(int(j) for j in idx.split(",")), float(coef)))
        except ValueError as exc:
            raise InputError(f"cannot parse true-model term {term!r}") from exc
    return out
