"""f-divergence generators and divergences between discrete distributions.

Each generator carries ``f``, its derivative and (where one exists) the
inverse derivative used to map a scaled score ``z = e / tau`` to the
optimal nonnegative importance weight ``max(0, (f')^{-1}(z))``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.special import xlogy

DEFAULT_SATURATION = 1e3


class NonDifferentiableGeneratorError(ValueError):
    pass


class SupportError(ValueError):
    pass


def _log_cosh(t):
    t = np.abs(t)
    return t + np.log1p(np.exp(-2.0 * t)) - np.log(2.0)


@dataclass(frozen=True)
class FGenerator:
    name: str
    f: Callable[[np.ndarray], np.ndarray]
    derivative: Callable[[np.ndarray], np.ndarray]
    _inverse: Optional[Callable[[np.ndarray], np.ndarray]]
    # open interval on which (f')^{-1} is defined
    inverse_domain: tuple[float, float] = (-np.inf, np.inf)
    # lim_{t -> inf} f(t) / t; governs mass placed where the reference is zero
    recession_slope: float = np.inf
    saturation_weight: float = DEFAULT_SATURATION

    def __call__(self, x):
        return self.f(np.asarray(x, dtype=float))

    @property
    def has_inverse(self) -> bool:
        return self._inverse is not None

    def inverse_derivative(self, y):
        if self._inverse is None:
            raise NonDifferentiableGeneratorError(
                f"non-differentiable generator {self.name!r} has no inverse derivative"
            )
        return self._inverse(np.asarray(y, dtype=float))

    def weight(self, z):
        """Optimal weight ``max(0, (f')^{-1}(z))`` clipped to ``[0, saturation_weight]``.

        This is the exact maximizer of ``w -> w z - f(w)`` over
        ``[0, saturation_weight]``: beyond the upper end of the inverse
        domain the objective increases in ``w`` and the cap is returned,
        below the lower end it decreases and 0 is returned.
        """
        z = np.asarray(z, dtype=float)
        lo, hi = self.inverse_domain
        with np.errstate(over="ignore", divide="ignore"):
            w = self.inverse_derivative(np.clip(z, lo, hi))
        w = np.where(z >= hi, self.saturation_weight, w)
        return np.clip(w, 0.0, self.saturation_weight)


def _soft_tv() -> FGenerator:
    return FGenerator(
        name="soft_tv",
        f=lambda x: 0.5 * _log_cosh(x - 1.0),
        derivative=lambda x: 0.5 * np.tanh(x - 1.0),
        _inverse=lambda y: np.arctanh(2.0 * y) + 1.0,
        inverse_domain=(-0.5, 0.5),
        recession_slope=0.5,
    )


def _tv() -> FGenerator:
    return FGenerator(
        name="tv",
        f=lambda x: 0.5 * np.abs(x - 1.0),
        derivative=lambda x: 0.5 * np.sign(x - 1.0),
        _inverse=None,
        recession_slope=0.5,
    )


def _kl_df(x):
    with np.errstate(divide="ignore"):
        return np.log(x) + 1.0


def _kl() -> FGenerator:
    return FGenerator(
        name="kl",
        f=lambda x: xlogy(x, x),
        derivative=_kl_df,
        _inverse=lambda y: np.exp(y - 1.0),
    )


def _chi2() -> FGenerator:
    return FGenerator(
        name="chi2",
        f=lambda x: 0.5 * (x - 1.0) ** 2,
        derivative=lambda x: x - 1.0,
        _inverse=lambda y: y + 1.0,
    )


def _soft_chi2_f(x):
    x = np.asarray(x, dtype=float)
    low = xlogy(x, x) - x + 1.0
    return np.where(x < 1.0, low, (x - 1.0) ** 2)


def _soft_chi2_df(x):
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore"):
        low = np.log(np.where(x < 1.0, x, 1.0))
    return np.where(x < 1.0, low, 2.0 * (x - 1.0))


def _soft_chi2_inv(y):
    y = np.asarray(y, dtype=float)
    # (f')^{-1} of the branch (x-1)^2 is y/2 + 1
    return np.where(y < 0.0, np.exp(np.minimum(y, 0.0)), 0.5 * y + 1.0)


def _soft_chi2() -> FGenerator:
    return FGenerator(
        name="soft_chi2",
        f=_soft_chi2_f,
        derivative=_soft_chi2_df,
        _inverse=_soft_chi2_inv,
    )


_FACTORIES = {
    "soft_tv": _soft_tv,
    "tv": _tv,
    "kl": _kl,
    "chi2": _chi2,
    "soft_chi2": _soft_chi2,
}

GENERATOR_NAMES = tuple(_FACTORIES)


def make_generator(name: str, saturation_weight: float = DEFAULT_SATURATION) -> FGenerator:
    try:
        gen = _FACTORIES[name]()
    except KeyError:
        raise ValueError(f"unknown generator {name!r}; choose from {GENERATOR_NAMES}") from None
    if saturation_weight <= 0:
        raise ValueError("saturation_weight must be positive")
    if saturation_weight != gen.saturation_weight:
        gen = FGenerator(
            gen.name, gen.f, gen.derivative, gen._inverse,
            gen.inverse_domain, gen.recession_slope, float(saturation_weight),
        )
    return gen


def _check_pair(p, q):
    p = np.asarray(p, dtype=float).ravel()
    q = np.asarray(q, dtype=float).ravel()
    if p.shape != q.shape:
        raise ValueError(f"distribution shapes differ: {p.shape} vs {q.shape}")
    return p, q


def f_divergence(gen: FGenerator, p, q) -> float:
    """``sum_x q(x) f(p(x) / q(x))``.

    Points with ``q = 0`` contribute 0 when ``p = 0`` as well, and
    ``p * recession_slope`` otherwise; an infinite slope raises
    :class:`SupportError`.
    """
    p, q = _check_pair(p, q)
    on = q > 0
    total = float(np.sum(q[on] * gen(p[on] / q[on])))
    off_mass = p[~on].sum()
    if off_mass > 0:
        if not np.isfinite(gen.recession_slope):
            raise SupportError(
                f"p puts mass {off_mass:g} outside the support of q; "
                f"{gen.name} divergence is infinite"
            )
        total += gen.recession_slope * off_mass
    return total


def tv_distance(p, q) -> float:
    p, q = _check_pair(p, q)
    return 0.5 * float(np.abs(p - q).sum())
