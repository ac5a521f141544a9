"""Laplace noise and privacy-budget arithmetic."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class InvalidParameterError(ValueError):
    pass


@dataclass(frozen=True)
class PrivacyBudget:
    """Total budget ``epsilon`` split between the prefix tree and the Markov model.

    Attributes:
        epsilon: total privacy budget, > 0.
        g: share of ``epsilon`` given to the prefix tree, in (0, 1).
        delta_alloc: shape parameter of the per-level tree allocation, > 0.
    """

    epsilon: float
    g: float = 0.6
    delta_alloc: float = 0.8

    def __post_init__(self):
        if not (self.epsilon > 0 and math.isfinite(self.epsilon)):
            raise InvalidParameterError(f"epsilon must be positive, got {self.epsilon}")
        if not 0 < self.g < 1:
            raise InvalidParameterError(f"g must lie in (0, 1), got {self.g}")
        if not self.delta_alloc > 0:
            raise InvalidParameterError(f"delta_alloc must be positive, got {self.delta_alloc}")


def split_budget(b: PrivacyBudget) -> tuple[float, float]:
    """Return ``(eps_p, eps_m)`` with ``eps_p + eps_m == epsilon`` exactly.

    Both shares match ``g * epsilon`` and ``(1 - g) * epsilon`` to within a
    few ulps: the smaller share is nudged, one ulp at a time, until the
    floating-point sum lands on ``epsilon``. The smaller share has the finer
    ulp, so its steps are small enough to hit the total's rounding interval.
    """
    shares = [b.g * b.epsilon, 0.0]
    shares[1] = b.epsilon - shares[0]
    k = 0 if shares[0] < shares[1] else 1
    for _ in range(64):
        total = shares[0] + shares[1]
        if total == b.epsilon:
            return shares[0], shares[1]
        shares[k] = math.nextafter(shares[k], math.inf if total < b.epsilon else -math.inf)
    raise ArithmeticError(f"cannot split epsilon={b.epsilon!r} at g={b.g!r} exactly")


def level_budgets(eps_p: float, h: int, delta: float) -> tuple[float, ...]:
    """Decreasing per-level budgets for tree levels ``1 .. h-1``.

    Level ``i`` gets weight ``log(h - i + delta)``, normalized to sum to
    ``eps_p``. Natural log; the base cancels.
    """
    if h < 2:
        raise InvalidParameterError(f"tree height must be >= 2, got {h}")
    if not delta > 0:
        raise InvalidParameterError(f"delta must be positive, got {delta}")
    if not eps_p > 0:
        raise InvalidParameterError(f"eps_p must be positive, got {eps_p}")
    weights = [math.log(h - i + delta) for i in range(1, h)]
    total = math.fsum(weights)
    return tuple(w / total * eps_p for w in weights)


class NoiseSource:
    """Seeded random stream used for every noise draw and sampling step.

    A fixed seed makes runs reproducible but is not private: DP needs noise
    the adversary cannot predict. ``seed=None`` draws fresh OS entropy.
    ``zero_noise=True`` makes every Laplace draw return 0 and exists for
    testing only; uniform draws (used by synthesis) are unaffected.
    """

    def __init__(self, seed: int | None = None, zero_noise: bool = False,
                 _seq: np.random.SeedSequence | None = None, _seeded: bool = False):
        self._seq = _seq if _seq is not None else np.random.SeedSequence(seed)
        self._rng = np.random.Generator(np.random.PCG64(self._seq))
        self.zero_noise = zero_noise
        self.seeded = _seeded if _seq is not None else seed is not None

    def child(self, index: int) -> "NoiseSource":
        """Independent stream derived from this one's seed and ``index``."""
        seq = np.random.SeedSequence(self._seq.entropy,
                                     spawn_key=self._seq.spawn_key + (index,))
        return NoiseSource(zero_noise=self.zero_noise, _seq=seq, _seeded=self.seeded)

    def uniform(self, size=None):
        return self._rng.random(size)

    def laplace(self, scale: float, size=None):
        """Laplace(0, scale) samples by inverse CDF on a uniform stream."""
        if not scale > 0:
            raise InvalidParameterError(f"Laplace scale must be positive, got {scale}")
        if self.zero_noise:
            return 0.0 if size is None else np.zeros(size)
        # u in (-1/2, 1/2]; 1 - 2|u| reaches 0 at u = 1/2, so floor it for the log.
        u = 0.5 - self._rng.random(size)
        r = np.maximum(1.0 - 2.0 * np.abs(u), np.finfo(float).tiny)
        x = -scale * np.sign(u) * np.log(r)
        return float(x) if size is None else x


def laplace(scale: float, src: NoiseSource) -> float:
    return src.laplace(scale)
