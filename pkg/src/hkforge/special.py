"""Complex dilogarithm, Rogers-type variants, modified Bessel K0/K1 and ray quadrature.

Branch conventions: every logarithm is principal (cut on the negative real
axis), Li2 carries its cut on [1, oo) and is evaluated there as the limit
from Im z < 0.  All functions are pure and reentrant.
"""

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import DomainError

EULER_GAMMA = 0.5772156649015328606


def _bernoulli_floats(count):
    # B_0 .. B_{count-1} via the defining recurrence, exact rationals first.
    bs = [Fraction(1)]
    for n in range(1, count):
        acc = Fraction(0)
        for k in range(n):
            acc += Fraction(_binom(n + 1, k)) * bs[k]
        bs.append(-acc / (n + 1))
    return [float(b) for b in bs]


def _binom(n, k):
    out = 1
    for j in range(k):
        out = out * (n - j) // (j + 1)
    return out


_BERNOULLI = _bernoulli_floats(64)


def _li2_core(z):
    # Bernoulli series in u = -ln(1-z); fast once |z| <= 1 and Re z <= 1/2.
    u = -np.log1p(-z) if abs(z) < 0.5 else -np.log(1.0 - z)
    u = complex(u)
    u2 = u * u
    total = u + _BERNOULLI[1] * u2 / 2.0  # B_0 u / 1! + B_1 u^2 / 2!
    term = u  # u^{n-1} / (n-1)! going into iteration n
    for n in range(2, 64, 2):
        term *= u2 / ((n + 1) * n)
        contrib = _BERNOULLI[n] * term
        total += contrib
        if abs(contrib) < 1e-18 * max(1.0, abs(total)):
            break
    return total


def dilog(z):
    """Principal-branch Li2(z), cut on [1, oo) evaluated as the limit from below.

    Satisfies Li2(z) + Li2(1-z) = pi^2/6 - ln(z) ln(1-z) away from the cuts.
    """
    z = complex(z)
    if z == 0:
        return 0.0 + 0.0j
    if z == 1:
        return complex(np.pi**2 / 6.0)
    if z.imag == 0.0 and z.real >= 1.0:
        # pin the limit from Im z < 0 through every subsequent branch choice
        z = complex(z.real, -0.0)

    # region reduction: inversion for |z| > 1, reflection towards Re z <= 1/2
    if abs(z) > 1.0:
        lnmz = np.log(-z)
        return -dilog(1.0 / z) - np.pi**2 / 6.0 - 0.5 * lnmz * lnmz
    if z.real > 0.5:
        return np.pi**2 / 6.0 - np.log(z) * np.log(1.0 - z) - _li2_core(1.0 - z)
    return _li2_core(z)


def rogers_L(sigma, z):
    """Dilogarithm variant L_sigma(z) = Li2(z) + (1/2) ln(z/sigma) ln(1-z), sigma = +-1."""
    if sigma not in (1, -1):
        raise DomainError("sigma must be +1 or -1")
    z = complex(z)
    if z == 0 or z == 1:
        raise DomainError("rogers_L undefined at z = 0 and z = 1")
    return dilog(z) + 0.5 * np.log(z / sigma) * np.log(1.0 - z)


# ---------------------------------------------------------------------------
# modified Bessel functions K0, K1
#
# Two regimes: ascending power series for x < 4, and for x >= 4 trapezoid
# quadrature of the integral representation K_n(x) = int_0^oo cosh(nt)
# exp(-x cosh t) dt, which is spectrally accurate there.  The crossover sits
# at x = 4 because the series loses digits to cancellation beyond that.

_K_SWITCH = 4.0
_KQUAD_T = np.arange(0, 26) * 0.2
_KQUAD_W = np.full(26, 0.2)
_KQUAD_W[0] = 0.1
_KQUAD_COSH = np.cosh(_KQUAD_T)


def _k_series(x, order):
    x = np.asarray(x, dtype=float)
    q = 0.25 * x * x
    lnh = np.log(0.5 * x)
    if order == 0:
        i0 = np.ones_like(x)
        s = np.zeros_like(x)
        term = np.ones_like(x)
        hk = 0.0
        for k in range(1, 30):
            term = term * q / (k * k)
            hk += 1.0 / k
            i0 += term
            s += term * hk
        return -(lnh + EULER_GAMMA) * i0 + s
    # order == 1
    i1 = np.ones_like(x)
    s = np.ones_like(x) * (1.0 - 2.0 * EULER_GAMMA)  # k = 0: H_0 + H_1 - 2g
    term = np.ones_like(x)
    hk = 0.0
    for k in range(1, 30):
        term = term * q / (k * (k + 1))
        hk += 1.0 / k
        i1 += term
        s += term * (2.0 * hk + 1.0 / (k + 1) - 2.0 * EULER_GAMMA)
    i1 = 0.5 * x * i1
    return lnh * i1 + 1.0 / x - 0.25 * x * s


def _k_quadrature(x, order):
    x = np.asarray(x, dtype=float)
    expo = np.exp(-np.multiply.outer(x, _KQUAD_COSH))
    if order == 1:
        expo = expo * _KQUAD_COSH
    return expo @ _KQUAD_W


def _bessel_k(x, order):
    arr = np.asarray(x, dtype=float)
    if np.any(arr <= 0.0):
        raise DomainError("bessel_k requires x > 0")
    scalar = arr.ndim == 0
    arr = np.atleast_1d(arr)
    out = np.empty_like(arr)
    small = arr < _K_SWITCH
    if small.any():
        out[small] = _k_series(arr[small], order)
    if (~small).any():
        out[~small] = _k_quadrature(arr[~small], order)
    return float(out[0]) if scalar else out


def bessel_k0(x):
    """Modified Bessel function K0(x) for x > 0, relative accuracy <= 1e-12."""
    return _bessel_k(x, 0)


def bessel_k1(x):
    """Modified Bessel function K1(x) for x > 0, relative accuracy <= 1e-12."""
    return _bessel_k(x, 1)


# ---------------------------------------------------------------------------
# rapidity-line quadrature


@dataclass(frozen=True)
class QuadratureRule:
    """Uniform trapezoid rule on the rapidity interval [-L, L].

    Intended for integrands decaying at least like exp(-c cosh u); for those
    the rule is spectrally accurate and the truncation at |u| = L is
    exponentially small.
    """

    nodes: np.ndarray
    weights: np.ndarray
    half_width: float
    count: int

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)
        if nodes.shape != (self.count,) or weights.shape != (self.count,):
            raise DomainError("nodes/weights length must equal count")
        if np.any(np.diff(nodes) <= 0):
            raise DomainError("nodes must be strictly increasing")
        if np.max(np.abs(nodes + nodes[::-1])) > 1e-12:
            raise DomainError("nodes must be symmetric about 0")
        if np.any(weights <= 0):
            raise DomainError("weights must be positive")


def trapezoid_rule(half_width=5.0, count=201):
    """Default rapidity quadrature: N uniform nodes on [-L, L]."""
    if count < 3 or count % 2 == 0:
        raise DomainError("count must be odd and >= 3 so that u = 0 is a node")
    nodes = np.linspace(-half_width, half_width, count)
    h = nodes[1] - nodes[0]
    weights = np.full(count, h)
    weights[0] = weights[-1] = 0.5 * h
    return QuadratureRule(nodes=nodes, weights=weights, half_width=float(half_width), count=count)


def ray_quadrature(rule, integrand):
    """Sum w_i * integrand(u_i); integrand may be scalar or vectorized."""
    try:
        vals = np.asarray(integrand(rule.nodes), dtype=complex)
        if vals.shape != rule.nodes.shape:
            raise ValueError
    except (ValueError, TypeError):
        vals = np.array([integrand(u) for u in rule.nodes], dtype=complex)
    return complex(np.dot(rule.weights, vals))
