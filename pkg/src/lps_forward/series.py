"""Power-series coefficients of the carrier densities and the recombination rate in delta.

Given expansions psi = sum psi_k d^k, phi_n = sum phin_k d^k and
phi_p = sum phip_k d^k, the densities n = exp(psi - phi_n) and
p / d^2 = exp(phi_p - psi) are expanded by Faa di Bruno's formula:

    [g(a_0 + sum_{m>=1} a_m d^m)]_k = sum_j g^(|j|)(a_0) prod_m a_m^{j_m} / j_m!

where j runs over all nonnegative (j_1, ..., j_k) with j_1 + 2 j_2 + ... + k j_k = k
and |j| = j_1 + ... + j_k. The same formula with g(z) = 1/z expands the
Shockley-Read-Hall denominator.
"""

import logging
import math
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .errors import InvalidInputError
from .units import ScaledParams
from .utils import format_kv

logger = logging.getLogger(__name__)

# Largest supported order
MAX_ORDER = 8

# Oracle step sizes; the second is half the first for one Richardson level
ORACLE_STEPS = (1e-2, 5e-3)


def _check_order(k: int) -> None:
    if k < 0 or k > MAX_ORDER:
        raise InvalidInputError(f"order must lie in [0, {MAX_ORDER}], got {k}")


@lru_cache(maxsize=None)
def _multiplicities(remaining: int, largest: int) -> tuple[tuple[int, ...], ...]:
    if largest == 0:
        return ((),) if remaining == 0 else ()
    found = []
    for j in range(remaining // largest, -1, -1):
        for rest in _multiplicities(remaining - j * largest, largest - 1):
            found.append(rest + (j,))
    return tuple(found)


def partitions(k: int) -> tuple[tuple[int, ...], ...]:
    """All (j_1, ..., j_k) >= 0 with j_1 + 2 j_2 + ... + k j_k = k.

    Example:
        >>> [len(partitions(k)) for k in range(1, 7)]
        [1, 2, 3, 5, 7, 11]
    """
    _check_order(k)
    return _multiplicities(k, k)


def _compose(derivative: Callable[[int], float], a: Sequence[float]) -> list[float]:
    """Taylor coefficients of g(sum a_k d^k) given g^(n)(a_0) for n >= 0."""
    order = len(a) - 1
    _check_order(order)
    coefficients = [derivative(0)]
    for k in range(1, order + 1):
        total = 0.0
        for j in partitions(k):
            term = derivative(sum(j))
            for m, j_m in enumerate(j, start=1):
                if j_m:
                    term *= a[m] ** j_m / math.factorial(j_m)
            total += term
        coefficients.append(total)
    return coefficients


def expand_exponential(a: Sequence[float]) -> list[float]:
    """Coefficients of exp(sum a_k d^k) up to the order of ``a``.

    Example:
        >>> [round(c, 12) for c in expand_exponential([0.0, 1.0, 0.0, 0.0])]
        [1.0, 1.0, 0.5, 0.166666666667]
    """
    if not a:
        raise InvalidInputError("need at least the order-zero coefficient")
    base = math.exp(a[0])
    return _compose(lambda _n: base, a)


def expand_reciprocal(a: Sequence[float]) -> list[float]:
    """Coefficients of 1 / sum a_k d^k up to the order of ``a``.

    Raises:
        InvalidInputError: If a_0 is zero
    """
    if not a:
        raise InvalidInputError("need at least the order-zero coefficient")
    a0 = a[0]
    if a0 == 0.0:
        raise InvalidInputError("reciprocal expansion needs a nonzero leading coefficient")
    return _compose(lambda n: (-1) ** n * math.factorial(n) / a0 ** (n + 1), a)


def cauchy_product(a: Sequence[float], b: Sequence[float]) -> list[float]:
    """Coefficients of the product of two series, truncated to the shorter one."""
    order = min(len(a), len(b))
    return [sum(a[j] * b[k - j] for j in range(k + 1)) for k in range(order)]


class SeriesCoeffs(BaseModel):
    """Expansion coefficients at one evaluation point.

    ``p`` holds the coefficients of p / d^2 = exp(phi_p - psi). ``f_n``, ``f_p``,
    ``f_r`` and ``f_rr`` are the parts of n_k, p_k, r_k and R_k that depend only
    on coefficients of order below k (zero at k = 0).
    """

    model_config = ConfigDict(frozen=True)

    order: int = Field(..., ge=0, le=MAX_ORDER, description="Highest order K")
    psi: tuple[float, ...] = Field(..., description="psi_k")
    phin: tuple[float, ...] = Field(..., description="phin_k")
    phip: tuple[float, ...] = Field(..., description="phip_k")
    n: tuple[float, ...] = Field(..., description="n_k")
    p: tuple[float, ...] = Field(..., description="p_k")
    r: tuple[float, ...] = Field(..., description="r_k")
    rr: tuple[float, ...] = Field(..., description="R_k")
    s_n: float = Field(..., description="r0 p0 + c(n0) (n0 p0 - 1)")
    s_n_raw: float = Field(..., description="C_d p0 + 2 C_n n0 p0 - C_n + 1/(tau_p n0^2)")
    s_p: float = Field(..., description="r0 n0")
    f_n: tuple[float, ...] = Field(..., description="n_k - n0 (psi_k - phin_k)")
    f_p: tuple[float, ...] = Field(..., description="p_k - p0 (phip_k - psi_k)")
    f_r: tuple[float, ...] = Field(..., description="r_k - c(n0) n_k")
    f_rr: tuple[float, ...] = Field(..., description="R_k - s_n n_k - s_p p_k")


def _shifted(values: Sequence[float], k: int, shift: int) -> float:
    return values[k - shift] if k >= shift else 0.0


def expand_nr(
    psi: Sequence[float],
    phin: Sequence[float],
    phip: Sequence[float],
    scaled: ScaledParams,
    order: int | None = None,
) -> SeriesCoeffs:
    """Expand n, p, r and R in powers of delta.

    Args:
        psi: Coefficients psi_0..psi_K
        phin: Coefficients phin_0..phin_K
        phip: Coefficients phip_0..phip_K
        scaled: Recombination constants
        order: Highest order K; defaults to the common input length minus one

    Returns:
        SeriesCoeffs

    Raises:
        InvalidInputError: K out of range or inputs too short
    """
    order = min(len(psi), len(phin), len(phip)) - 1 if order is None else order
    _check_order(order)
    if min(len(psi), len(phin), len(phip)) < order + 1:
        raise InvalidInputError(f"need {order + 1} coefficients per potential")
    psi_k, phin_k, phip_k = (tuple(float(v) for v in c[: order + 1]) for c in (psi, phin, phip))

    n = expand_exponential([a - b for a, b in zip(psi_k, phin_k)])
    p = expand_exponential([a - b for a, b in zip(phip_k, psi_k)])

    s = scaled
    trap = s.tau_p * s.n_t + s.tau_n * s.p_t
    denominator = [s.tau_p * n[0]]
    for k in range(1, order + 1):
        denominator.append(
            s.tau_p * n[k] + (trap if k == 1 else 0.0) + s.tau_n * _shifted(p, k, 2)
        )
    q = expand_reciprocal(denominator)
    r = [
        (s.c_d if k == 0 else 0.0) + s.c_n * n[k] + s.c_p * _shifted(p, k, 2) + q[k]
        for k in range(order + 1)
    ]
    m = cauchy_product(n, p)
    rr = [v - r[k] for k, v in enumerate(cauchy_product(r, m))]

    n0, p0, r0 = n[0], p[0], r[0]
    c = s.c_n - 1.0 / (s.tau_p * n0**2)
    s_n = r0 * p0 + c * (n0 * p0 - 1.0)
    s_p = r0 * n0
    s_n_raw = s.c_d * p0 + 2.0 * s.c_n * n0 * p0 - s.c_n + 1.0 / (s.tau_p * n0**2)

    def lower(values: list[float], linear: Callable[[int], float]) -> tuple[float, ...]:
        return tuple(0.0 if k == 0 else values[k] - linear(k) for k in range(order + 1))

    return SeriesCoeffs(
        order=order,
        psi=psi_k,
        phin=phin_k,
        phip=phip_k,
        n=tuple(n),
        p=tuple(p),
        r=tuple(r),
        rr=tuple(rr),
        s_n=s_n,
        s_n_raw=s_n_raw,
        s_p=s_p,
        f_n=lower(n, lambda k: n0 * (psi_k[k] - phin_k[k])),
        f_p=lower(p, lambda k: p0 * (phip_k[k] - psi_k[k])),
        f_r=lower(r, lambda k: c * n[k]),
        f_rr=lower(rr, lambda k: s_n * n[k] + s_p * p[k]),
    )


def _central_difference(f: Callable[[float], float], k: int, h: float) -> float:
    """k-th central difference quotient at 0; odd k uses half-integer nodes."""
    total = 0.0
    for i in range(k + 1):
        total += (-1) ** i * math.comb(k, i) * f((k / 2.0 - i) * h)
    return total / h**k


def richardson_coefficients(
    f: Callable[[float], float], order: int, steps: tuple[float, float] = ORACLE_STEPS
) -> list[float]:
    """Taylor coefficients f^(k)(0) / k! for k <= order by finite differences.

    Central differences at both steps are combined by one Richardson level,
    (4 D(h/2) - D(h)) / 3.
    """
    _check_order(order)
    h1, h2 = steps
    coefficients = []
    for k in range(order + 1):
        if k == 0:
            coefficients.append(f(0.0))
            continue
        d1 = _central_difference(f, k, h1)
        d2 = _central_difference(f, k, h2)
        coefficients.append((4.0 * d2 - d1) / 3.0 / math.factorial(k))
    return coefficients


def _polynomial(coefficients: Sequence[float]) -> Callable[[float], float]:
    return lambda d: float(np.polynomial.polynomial.polyval(d, coefficients))


def oracle_series(
    psi: Sequence[float],
    phin: Sequence[float],
    phip: Sequence[float],
    scaled: ScaledParams,
    order: int,
) -> dict[str, list[float]]:
    """Coefficients of n, p / d^2 and R obtained by differentiating the closed forms in delta.

    The rate is evaluated directly as r_d(n, p) (n p / d^2 - 1) with
    p / d^2 = exp(phi_p - psi), so negative stencil nodes are admissible.
    """
    s = scaled
    psi_f, phin_f, phip_f = (_polynomial(c) for c in (psi, phin, phip))

    def n_of(d: float) -> float:
        return math.exp(psi_f(d) - phin_f(d))

    def p_of(d: float) -> float:
        return math.exp(phip_f(d) - psi_f(d))

    def rate(d: float) -> float:
        n, p_hat = n_of(d), p_of(d)
        p = d * d * p_hat
        denominator = s.tau_p * (n + d * s.n_t) + s.tau_n * (p + d * s.p_t)
        r = s.c_d + s.c_n * n + s.c_p * p + 1.0 / denominator
        return r * (n * p_hat - 1.0)

    return {
        "n": richardson_coefficients(n_of, order),
        "p": richardson_coefficients(p_of, order),
        "R": richardson_coefficients(rate, order),
    }


def series_check(
    psi: Sequence[float],
    phin: Sequence[float],
    phip: Sequence[float],
    scaled: ScaledParams,
    order: int,
) -> dict[str, object]:
    """Compare ``expand_nr`` with the finite-difference oracle.

    Returns:
        Coefficient tables and two largest deviations per quantity:
        ``deviation`` in the mixed norm of ``coefficient_deviation`` (the one
        compared against tolerances) and ``relative_deviation`` = |a - b| / |b|
    """
    coeffs = expand_nr(psi, phin, phip, scaled, order)
    oracle = oracle_series(psi, phin, phip, scaled, order)
    deviation = {}
    relative = {}
    for name, values in (("n", coeffs.n), ("p", coeffs.p), ("R", coeffs.rr)):
        pairs = list(zip(values, oracle[name]))
        deviation[name] = max(coefficient_deviation(a, b) for a, b in pairs)
        relative[name] = max(coefficient_deviation(a, b, floor=0.0) for a, b in pairs)
    fields = {f"dev_{k}": v for k, v in deviation.items()}
    logger.info(format_kv("series.check", order=order, **fields))
    return {
        "coefficients": coeffs.model_dump(),
        "oracle": oracle,
        "deviation": deviation,
        "relative_deviation": relative,
    }


def coefficient_deviation(a: float, b: float, floor: float = 1.0) -> float:
    """|a - b| / max(floor, |b|).

    With the default floor the measure is absolute for reference values below
    one and relative above. Coefficients that vanish exactly, such as R_k at
    equilibrium, are met by the oracle only up to its truncation error, so a
    purely relative measure (``floor=0``) is unbounded there; a zero reference
    with a nonzero difference then gives inf.

    Example:
        >>> coefficient_deviation(1e-3, 2e-3), coefficient_deviation(300.0, 200.0)
        (0.001, 0.5)
    """
    difference = abs(a - b)
    scale = max(floor, abs(b))
    if scale == 0.0:
        return 0.0 if difference == 0.0 else math.inf
    return difference / scale
