"""Charge lattice, twisted torus algebra and Kontsevich-Soibelman transformations.

The lattice has even rank 2m in a canonical symplectic frame: the first m
basis charges are "magnetic", the last m "electric", and the quadratic
refinement is sigma(q) = (-1)^(qm . qe) in that frame.  Everything here is
immutable after construction and safe to share between threads.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, SingularPointError, WallError
from .special import rogers_L

_PARALLEL_TOL = 1e-12


@dataclass(frozen=True)
class Charge:
    """Integer charge vector of length 2m: components (q_magnetic, q_electric)."""

    q: tuple

    def __init__(self, q):
        object.__setattr__(self, "q", tuple(int(c) for c in q))

    @property
    def rank(self):
        return len(self.q)

    def as_array(self):
        return np.array(self.q, dtype=np.int64)

    def __add__(self, other):
        return Charge(tuple(a + b for a, b in zip(self.q, other.q)))

    def __neg__(self):
        return Charge(tuple(-a for a in self.q))

    def __mul__(self, k):
        return Charge(tuple(int(k) * a for a in self.q))

    __rmul__ = __mul__

    def primitive(self):
        """The primitive charge on the same ray through the origin."""
        g = int(np.gcd.reduce([abs(c) for c in self.q if c != 0] or [1]))
        return Charge(tuple(c // g for c in self.q)), g


def basis_charge(rank, a):
    """Basis charge gamma^a, 0-indexed: a < m magnetic, a >= m electric."""
    q = [0] * rank
    q[a] = 1
    return Charge(q)


@dataclass(frozen=True)
class SymplecticLattice:
    """Even-rank lattice with unimodular antisymmetric pairing eps^{ab}."""

    rank: int
    pairing_matrix: np.ndarray = None

    def __post_init__(self):
        if self.rank % 2 != 0 or self.rank < 2:
            raise DomainError("lattice rank must be even and >= 2")
        m = self.rank // 2
        if self.pairing_matrix is None:
            eps = np.zeros((self.rank, self.rank), dtype=np.int64)
            eps[:m, m:] = -np.eye(m, dtype=np.int64)
            eps[m:, :m] = np.eye(m, dtype=np.int64)
            object.__setattr__(self, "pairing_matrix", eps)
        else:
            eps = np.array(self.pairing_matrix, dtype=np.int64)
            if eps.shape != (self.rank, self.rank):
                raise DomainError("pairing matrix shape mismatch")
            if np.any(eps != -eps.T):
                raise DomainError("pairing matrix must be antisymmetric")
            if round(abs(np.linalg.det(eps))) != 1:
                raise DomainError("pairing matrix must be unimodular")
            object.__setattr__(self, "pairing_matrix", eps)

    @property
    def m(self):
        return self.rank // 2

    def pairing_inverse(self):
        """eps_ab, the matrix inverse of eps^{ab} (still integer, unimodular)."""
        inv = np.linalg.inv(self.pairing_matrix.astype(float))
        return np.round(inv).astype(np.int64)


def pairing(lat, g1, g2):
    """Symplectic product <g1, g2> = q1^T eps q2."""
    if g1.rank != lat.rank or g2.rank != lat.rank:
        raise DomainError("charge rank does not match lattice rank")
    return int(g1.as_array() @ lat.pairing_matrix @ g2.as_array())


def sigma(g):
    """Quadratic refinement (-1)^(qm . qe) in the canonical symplectic frame.

    Satisfies sigma(g) sigma(g') = (-1)^<g,g'> sigma(g+g').
    """
    m = g.rank // 2
    q = g.as_array()
    return -1 if int(q[:m] @ q[m:]) % 2 else 1


@dataclass(frozen=True)
class TorusPoint:
    """Point of the twisted algebraic torus: values X_{gamma^a} in C^x."""

    basis_values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.basis_values, dtype=complex)
        if np.any(vals == 0):
            raise DomainError("torus point entries must be nonzero")
        object.__setattr__(self, "basis_values", vals)

    @property
    def rank(self):
        return len(self.basis_values)


def x_eval(pt, g):
    """X_gamma = sigma_gamma prod_a (X_{gamma^a})^{q_a}.

    Integer exponents keep this single-valued; the defining relation
    X_g X_g' = (-1)^<g,g'> X_{g+g'} holds exactly.
    """
    out = complex(sigma(g))
    for base, power in zip(pt.basis_values, g.q):
        if power:
            out *= complex(base) ** int(power)
    return out


def ks_transform(lat, g_prime, pt, omega=1):
    """Kontsevich-Soibelman map T_{g'}^omega: X_g -> X_g (1 - X_{g'})^{omega <g',g>}."""
    factor = 1.0 - x_eval(pt, g_prime)
    if abs(factor) < 1e-14:
        raise SingularPointError("KS transformation has a pole: X_{gamma'} = 1")
    exps = g_prime.as_array() @ lat.pairing_matrix  # <g', gamma^a> per basis index
    new_vals = pt.basis_values * factor ** (int(omega) * exps.astype(float))
    return TorusPoint(basis_values=new_vals)


@dataclass(frozen=True)
class StabilityData:
    """Central charge values, BPS degeneracies and overall scale.

    central_charge holds Z_{gamma^a}; Z_gamma = scale * q . central_charge.
    The spectrum must be CPT-closed and away from walls of marginal
    stability (same-direction central charges only for charges proportional
    over the positive rationals).
    """

    central_charge: np.ndarray
    spectrum: dict
    scale: float = 1.0
    prepotential: object = field(default=None, compare=False)

    def __post_init__(self):
        zs = np.asarray(self.central_charge, dtype=complex)
        object.__setattr__(self, "central_charge", zs)
        object.__setattr__(self, "spectrum", dict(self.spectrum))
        if self.scale <= 0:
            raise DomainError("scale must be positive")
        for g, om in self.spectrum.items():
            if int(om) <= 0:
                raise DomainError("degeneracies must be positive integers")
            if self.spectrum.get(-g) != om:
                raise DomainError("spectrum is not CPT-closed: missing Omega(-gamma)")
        self._check_support()
        self._check_walls()

    def _check_support(self):
        for g in self.spectrum:
            z = self.z_of(g)
            if abs(z) / np.linalg.norm(g.as_array()) < 1e-12:
                raise DomainError("support property violated: Z_gamma ~ 0 on support")

    def _check_walls(self):
        dirs = {}
        for g in self.spectrum:
            z = self.z_of(g)
            d = z / abs(z)
            for key, (prim, _) in dirs.items():
                if abs(d - key) < _PARALLEL_TOL:
                    if g.primitive()[0] != prim:
                        raise WallError(
                            "parallel central charges for non-proportional charges"
                        )
                    break
            else:
                dirs[d] = g.primitive()
        object.__setattr__(self, "_ray_dirs", dirs)

    @property
    def rank(self):
        return len(self.central_charge)

    def z_of(self, g):
        return self.scale * complex(g.as_array() @ self.central_charge)

    def support(self):
        return list(self.spectrum.items())


def _half_plane_key(z, alpha):
    """Clockwise position of Arg z inside the half-plane (alpha - pi, alpha].

    Returns t in [0, 2 pi): t < pi means the ray lies in the half-plane, and
    increasing t walks clockwise from the boundary angle alpha.
    """
    return float(np.mod(alpha - np.angle(z), 2.0 * np.pi))


def ks_ordered_product(stab, half_plane_angle, pt, lat=None, collect=None):
    """The clockwise-ordered product of T_gamma^Omega over a strict half-plane.

    Factors are written in clockwise order of Arg(Z_gamma) and, as maps,
    compose right to left: the first transformation applied to the point is
    the one whose ray lies most counterclockwise (closest to the half-plane
    boundary at half_plane_angle - pi).  This orientation is pinned by the
    instanton-corrected geometry: it is the convention under which the
    integral-equation solutions glue smoothly across walls of marginal
    stability.  Charges on a common ray commute, so their relative order is
    immaterial.  When `collect` is a list it receives (gamma, omega,
    X_gamma-before) triples in application order.
    """
    lat = lat or SymplecticLattice(rank=stab.rank)
    entries = []
    for g, om in stab.support():
        key = _half_plane_key(stab.z_of(g), half_plane_angle)
        if key < np.pi - 1e-12:
            entries.append((key, g, om))
    entries.sort(key=lambda e: -e[0])  # most counterclockwise ray acts first
    current = pt
    for _, g, om in entries:
        if collect is not None:
            collect.append((g, om, x_eval(current, g)))
        current = ks_transform(lat, g, current, omega=om)
    return current


def _gamma_valued_log(running):
    """Sum_r gamma_r Omega_r ln(1 - X^(r)) as a complex lattice vector."""
    if not running:
        return np.zeros(0, dtype=complex)
    total = np.zeros(running[0][0].rank, dtype=complex)
    for g, om, xval in running:
        total += g.as_array() * (om * np.log(1.0 - xval))
    return total


def _rogers_sum(running):
    return sum(om * rogers_L(sigma(g), xval) for g, om, xval in running)


def wc_identity_residuals(stab_left, stab_right, pt, half_plane_angle=np.pi / 2, n_sample=8):
    """Residuals of the wall-crossing identities for two proposed partner spectra.

    residual_product: sup difference of the final torus points.
    residual_log:     sup norm of the Gamma-valued log identity mismatch.
    residual_dilog:   spread (max deviation from the mean) of the difference
                      of Rogers dilogarithm sums over a deterministic sample
                      of points near pt; the identity fixes the difference
                      only up to an additive constant.
    """
    lat = SymplecticLattice(rank=stab_left.rank)

    def run(p):
        left_run, right_run = [], []
        pl = ks_ordered_product(stab_left, half_plane_angle, p, lat, collect=left_run)
        pr = ks_ordered_product(stab_right, half_plane_angle, p, lat, collect=right_run)
        return pl, pr, left_run, right_run

    pl, pr, left_run, right_run = run(pt)
    residual_product = float(np.max(np.abs(pl.basis_values - pr.basis_values)))
    diff_log = _gamma_valued_log(left_run) - _gamma_valued_log(right_run)
    residual_log = float(np.max(np.abs(diff_log))) if diff_log.size else 0.0

    rng = np.random.default_rng(7)
    diffs = []
    for _ in range(n_sample):
        jitter = np.exp(0.05 * (rng.random(pt.rank) - 0.5) + 0.05j * (rng.random(pt.rank) - 0.5))
        p = TorusPoint(basis_values=pt.basis_values * jitter)
        _, _, lrun, rrun = run(p)
        diffs.append(_rogers_sum(lrun) - _rogers_sum(rrun))
    diffs = np.array(diffs)
    residual_dilog = float(np.max(np.abs(diffs - diffs.mean())))
    return residual_product, residual_log, residual_dilog


# ---------------------------------------------------------------------------
# serialization


def spectrum_to_json(spectrum):
    rows = [{"charge": list(g.q), "omega": int(om)} for g, om in spectrum.items()]
    rows.sort(key=lambda r: r["charge"])
    return json.dumps(rows)


def spectrum_from_json(text):
    return {Charge(row["charge"]): int(row["omega"]) for row in json.loads(text)}


def lattice_to_json(lat):
    return json.dumps({"rank": lat.rank, "pairing": lat.pairing_matrix.tolist()})


def lattice_from_json(text):
    data = json.loads(text)
    return SymplecticLattice(rank=data["rank"], pairing_matrix=np.array(data["pairing"]))
