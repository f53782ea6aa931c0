"""Beta-Bernoulli posterior kernels.

Everything here is a pure function of its arguments and an explicit
``numpy.random.Generator``. The incomplete beta function and its inverse are
implemented directly (continued fraction plus a safeguarded Newton solver) so
that results do not depend on the installed SciPy version.

Random stream contract: ``sample_beta`` makes exactly one call to
``Generator.beta`` per draw and ``thompson_select`` makes exactly one vectorised
``Generator.beta`` call per selection, producing one variate per candidate in
the order given. The generator state after a call is therefore a deterministic
function of its state before the call and the shape parameters.
"""

import math
from dataclasses import dataclass

import numpy as np

from hgm.exceptions import ParameterError, UsageError
from hgm.validation import check_positive_int

_CF_MAX_ITER = 10_000
_CF_EPS = 1e-16
_TINY = 1e-300


@dataclass(frozen=True)
class BetaParams:
    """Shape pair of a Beta distribution (pseudo-successes, pseudo-failures)."""

    alpha: float
    beta: float

    def __post_init__(self):
        for name in ("alpha", "beta"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, float, np.integer, np.floating)):
                raise ParameterError(f"{name} must be a real number, got {v!r}")
            if not math.isfinite(v) or v <= 0:
                raise ParameterError(f"{name} must be finite and > 0, got {v}")

    @classmethod
    def from_counts(cls, n_success, n_failure, tau=1.0):
        """Posterior of a uniform prior after the given counts, scaled by ``tau``."""
        return cls(tau * (1 + n_success), tau * (1 + n_failure))

    @property
    def mean(self):
        return self.alpha / (self.alpha + self.beta)


def sample_beta(params, rng):
    """Draw one variate from ``Beta(params.alpha, params.beta)``."""
    if not isinstance(params, BetaParams):
        raise ParameterError("params must be a BetaParams instance")
    return float(rng.beta(params.alpha, params.beta))


def _log_beta(a, b):
    return math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)


def _betacf(a, b, x):
    # modified Lentz evaluation of the continued fraction for I_x(a, b)
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, _CF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _CF_EPS:
            return h
    raise ParameterError(f"continued fraction did not converge for a={a}, b={b}, x={x}")


def _check_params(params):
    if not isinstance(params, BetaParams):
        raise ParameterError("params must be a BetaParams instance")


def reg_inc_beta(x, params):
    """Regularized incomplete beta function ``I_x(alpha, beta)``, i.e. the Beta CDF."""
    _check_params(params)
    x = float(x)
    if not (0.0 <= x <= 1.0):
        raise ParameterError(f"x must lie in [0, 1], got {x}")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    a, b = float(params.alpha), float(params.beta)
    log_front = a * math.log(x) + b * math.log1p(-x) - _log_beta(a, b)
    # the continued fraction converges fast only below the mean; reflect otherwise
    if x < (a + 1.0) / (a + b + 2.0):
        value = math.exp(log_front) * _betacf(a, b, x) / a
    else:
        value = 1.0 - math.exp(log_front) * _betacf(b, a, 1.0 - x) / b
    return min(1.0, max(0.0, value))


def beta_pdf(x, params):
    _check_params(params)
    if x <= 0.0 or x >= 1.0:
        return 0.0
    a, b = params.alpha, params.beta
    return math.exp((a - 1) * math.log(x) + (b - 1) * math.log1p(-x) - _log_beta(a, b))


def beta_quantile(q, params, tol=1e-14, max_iter=500):
    """Return ``x`` with ``reg_inc_beta(x, params) == q``.

    Newton steps on the CDF, falling back to bisection whenever a step leaves
    the current bracket, so convergence is guaranteed.
    """
    _check_params(params)
    q = float(q)
    if not (0.0 < q < 1.0):
        raise ParameterError(f"q must lie in the open interval (0, 1), got {q}")
    lo, hi = 0.0, 1.0
    x = min(max(params.mean, 1e-12), 1.0 - 1e-12)
    for _ in range(max_iter):
        f = reg_inc_beta(x, params) - q
        if f == 0.0:
            return x
        if f < 0.0:
            lo = x
        else:
            hi = x
        if hi - lo < tol:
            break
        dens = beta_pdf(x, params)
        step_ok = False
        if dens > 0.0 and math.isfinite(dens):
            candidate = x - f / dens
            if lo < candidate < hi:
                step_ok = True
                if abs(candidate - x) < tol * 1e-2:
                    return candidate
                x = candidate
        if not step_ok:
            x = 0.5 * (lo + hi)
    return x


def thompson_select(candidates, rng):
    """Sample every posterior once and return the id with the largest draw.

    ``candidates`` is a sequence of ``(id, BetaParams)`` pairs. Exact ties go
    to the smallest id.
    """
    if len(candidates) == 0:
        raise UsageError("thompson_select needs at least one candidate")
    ids = [c[0] for c in candidates]
    alphas = [c[1].alpha for c in candidates]
    betas = [c[1].beta for c in candidates]
    return _argmax_draw(ids, alphas, betas, rng)


def thompson_select_arrays(ids, alphas, betas, rng):
    """Array form of :func:`thompson_select` for hot loops (no per-item validation)."""
    if len(ids) == 0:
        raise UsageError("thompson_select needs at least one candidate")
    return _argmax_draw(ids, alphas, betas, rng)


def _argmax_draw(ids, alphas, betas, rng):
    draws = rng.beta(alphas, betas)
    i = int(draws.argmax())
    if (draws == draws[i]).sum() == 1:
        return ids[i]
    return min(ids[j] for j in np.flatnonzero(draws == draws[i]))


def scheduler_tau(total_budget, remaining_budget):
    """Posterior sharpening factor ``B / b``; grows as the budget runs out."""
    total_budget = check_positive_int(total_budget, "total_budget")
    remaining_budget = check_positive_int(remaining_budget, "remaining_budget")
    if remaining_budget > total_budget:
        raise ParameterError(
            f"remaining_budget ({remaining_budget}) exceeds total_budget ({total_budget})"
        )
    return total_budget / remaining_budget
