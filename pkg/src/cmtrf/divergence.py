"""Weighted, identically separable Bregman divergences.

Three generators are supported: squared loss, KL divergence, and the
generalized I-divergence. Each instance exposes the scalar convex generator
``phi``, its Legendre conjugate ``psi``, and the mutually inverse gradient
maps ``grad_phi`` / ``grad_psi``, all applied coordinatewise. The weighted
divergence is ``sum_i w_i * D(x_i || y_i)``.

The KL form follows the classic ``x * log(x / y)`` shape and assumes the
caller supplies simplex-normalized vectors; off the simplex the per-term
values may be negative. ``0 * log 0`` is taken to be ``0``.
"""
from __future__ import annotations

import numpy as np

from .errors import DomainError

# Arguments closer than this to a domain boundary are rejected.
DOMAIN_TOL = 1e-12


def _as1d(x) -> np.ndarray:
    return np.atleast_1d(np.asarray(x, dtype=float))


def _xlogx(x: np.ndarray) -> np.ndarray:
    out = np.zeros_like(x)
    pos = x > 0
    out[pos] = x[pos] * np.log(x[pos])
    return out


class DivergenceSpec:
    """A scalar Bregman generator applied coordinatewise with weights."""

    name: str = "base"
    # True when the generator's domain is the positive reals, in which case
    # transform values and targets must stay above the boundary.
    positive_first_arg: bool = False

    # Scalar maps, vectorized over numpy arrays.

    def phi(self, x):
        raise NotImplementedError

    def psi(self, s):
        raise NotImplementedError

    def grad_phi(self, x):
        raise NotImplementedError

    def grad_psi(self, s):
        raise NotImplementedError

    def _pointwise(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Unweighted per-coordinate divergence D(x_i || y_i)."""
        raise NotImplementedError

    # Domain checks. `check_first` guards the closed domain of phi,
    # `check_second` its interior (where grad_phi is defined).

    def check_first(self, x: np.ndarray) -> None:
        pass

    def check_second(self, y: np.ndarray) -> None:
        pass

    def divergence(self, x, y, w) -> float:
        """Weighted divergence ``sum_i w_i * D(x_i || y_i)``.

        `y` must lie in the domain interior, `x` in the domain, and the
        weights must be nonnegative. All three must share one length.
        """
        x, y, w = _as1d(x), _as1d(y), _as1d(w)
        if not (x.shape == y.shape == w.shape):
            raise ValueError(
                f"shape mismatch: x {x.shape}, y {y.shape}, w {w.shape}"
            )
        if np.any(w < 0):
            raise ValueError("weights must be nonnegative")
        self.check_first(x)
        self.check_second(y)
        return float(np.sum(w * self._pointwise(x, y)))

    def gap_terms(self, x, s) -> np.ndarray:
        """Per-coordinate Fenchel-Young gap ``psi(s) + phi(x) - x * s``."""
        x, s = _as1d(x), _as1d(s)
        self.check_first(x)
        return self.psi(s) + self.phi(x) - x * s

    def gap(self, x, s, w=None) -> float:
        """Weighted Fenchel-Young gap; the loss every training step uses."""
        terms = self.gap_terms(x, s)
        if w is None:
            return float(np.sum(terms))
        w = _as1d(w)
        if w.shape != terms.shape:
            raise ValueError("weights length mismatch")
        return float(np.sum(w * terms))

    def __repr__(self):
        return f"<{type(self).__name__} {self.name!r}>"


class SquaredLoss(DivergenceSpec):
    """phi(x) = x^2 / 2 on all of R; grad maps are the identity."""

    name = "squared_loss"

    def phi(self, x):
        x = np.asarray(x, dtype=float)
        return 0.5 * x * x

    def psi(self, s):
        s = np.asarray(s, dtype=float)
        return 0.5 * s * s

    def grad_phi(self, x):
        return np.asarray(x, dtype=float).copy()

    def grad_psi(self, s):
        return np.asarray(s, dtype=float).copy()

    def _pointwise(self, x, y):
        d = x - y
        return 0.5 * d * d


class KLDivergence(DivergenceSpec):
    """phi(x) = x log x; per-coordinate divergence x log(x / y).

    Intended for simplex components. grad_phi(x) = 1 + log x with inverse
    grad_psi(s) = exp(s - 1).
    """

    name = "kl"
    positive_first_arg = True

    def check_first(self, x):
        if np.any(x < 0):
            raise DomainError("KL first argument must be nonnegative")

    def check_second(self, y):
        if np.any(y < DOMAIN_TOL):
            raise DomainError("KL second argument must be strictly positive")

    def phi(self, x):
        x = np.asarray(x, dtype=float)
        if np.any(x < 0):
            raise DomainError("KL generator needs nonnegative input")
        return _xlogx(np.atleast_1d(x)).reshape(x.shape)

    def psi(self, s):
        s = np.asarray(s, dtype=float)
        return np.exp(s - 1.0)

    def grad_phi(self, x):
        x = np.asarray(x, dtype=float)
        if np.any(x < DOMAIN_TOL):
            raise DomainError("grad_phi for KL needs strictly positive input")
        return 1.0 + np.log(x)

    def grad_psi(self, s):
        s = np.asarray(s, dtype=float)
        return np.exp(s - 1.0)

    def _pointwise(self, x, y):
        out = np.zeros_like(x)
        pos = x > 0
        out[pos] = x[pos] * np.log(x[pos] / y[pos])
        return out


class GeneralizedIDivergence(DivergenceSpec):
    """phi(x) = x log x - x on the positive reals.

    Per-coordinate divergence x log(x / y) - x + y, nonnegative for all
    positive arguments. grad_phi = log with inverse grad_psi = exp.
    """

    name = "gid"
    positive_first_arg = True

    def check_first(self, x):
        if np.any(x < DOMAIN_TOL):
            raise DomainError("GID first argument must be strictly positive")

    def check_second(self, y):
        if np.any(y < DOMAIN_TOL):
            raise DomainError("GID second argument must be strictly positive")

    def phi(self, x):
        x = np.asarray(x, dtype=float)
        if np.any(x < DOMAIN_TOL):
            raise DomainError("GID generator needs strictly positive input")
        return x * np.log(x) - x

    def psi(self, s):
        s = np.asarray(s, dtype=float)
        return np.exp(s)

    def grad_phi(self, x):
        x = np.asarray(x, dtype=float)
        if np.any(x < DOMAIN_TOL):
            raise DomainError("grad_phi for GID needs strictly positive input")
        return np.log(x)

    def grad_psi(self, s):
        s = np.asarray(s, dtype=float)
        return np.exp(s)

    def _pointwise(self, x, y):
        return x * np.log(x / y) - x + y


SQUARED_LOSS = SquaredLoss()
KL = KLDivergence()
GID = GeneralizedIDivergence()

_BY_NAME = {d.name: d for d in (SQUARED_LOSS, KL, GID)}
_BY_NAME.update({"sl": SQUARED_LOSS, "squared-loss": SQUARED_LOSS})


def by_name(name: str) -> DivergenceSpec:
    """Look up a divergence by its name (``squared_loss``, ``kl``, ``gid``)."""
    try:
        return _BY_NAME[name.lower()]
    except KeyError:
        raise ValueError(f"unknown divergence {name!r}") from None
