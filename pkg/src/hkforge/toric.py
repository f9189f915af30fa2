"""Toric Gibbons-Hawking assembly and the Ooguri-Vafa metric.

The Ooguri-Vafa potential comes in two closed forms that must agree exactly:
a log + Bessel series and its Poisson resummation.  The resummation constant
for the n = 0 term is (ln 2 pi - gamma) / pi; with that choice the two
expressions are equal, not merely equal up to a constant (verified to 1e-12
over the whole chart).  The moment map keeps only the square root in its
n = 0 term, leaving a single documented additive offset.
"""

from dataclasses import dataclass

import numpy as np

from . import geometry as geo
from .errors import DomainError, RayProximityError, SingularPointError
from .geometry import FiberPoint
from .semiflat import ov_log_prepotential, semiflat_frame
from .special import EULER_GAMMA, bessel_k0, bessel_k1, trapezoid_rule

POISSON_C0 = (np.log(2.0 * np.pi) - EULER_GAMMA) / np.pi

_GAUSS_T, _GAUSS_W = np.polynomial.legendre.leggauss(48)


@dataclass(frozen=True)
class OVParams:
    """Charge q and series cutoffs for the Ooguri-Vafa sums."""

    q: int = 1
    k_max: int = 60
    n_max: int = 2000
    z_bound: float = 6.0

    def __post_init__(self):
        if self.q < 1 or self.k_max < 1 or self.n_max < 1:
            raise DomainError("q, k_max, n_max must be >= 1")


@dataclass(frozen=True)
class ToricLPotential:
    """L-potential of a toric hyperkahler metric with shift functions rho_A.

    evaluator(pt) -> dict with keys L, L_z, L_psi, L_psipsi, L_psiz
    rho(pt)       -> (rho, rho_z, rho_psi) with rho_z[A, B] = d rho_A / d z^B
    """

    m: int
    evaluator: object
    rho: object
    name: str = "custom"

    def __call__(self, pt):
        return self.evaluator(pt)

    def constraint_residual(self, pt, h=1e-5):
        """FD residual of L_{psi^A z^B} = L_{psi^B z^A} and L_{psi psi} + L_{z zbar} = 0."""
        d = self(pt)
        r1 = float(np.max(np.abs(d["L_psiz"] - d["L_psiz"].T))) if self.m > 1 else 0.0

        def lz_field(x):
            return self(FiberPoint.from_array(np.asarray(x)))["L_z"]

        x = pt.to_array()
        m = self.m
        # d_{zbar^B} L_{z^A} = (d_x + i d_y)/2 of L_z
        lzzb = np.zeros((m, m), dtype=complex)
        for b in range(m):
            dx = geo.partial(lz_field, x, b, h)
            dy = geo.partial(lz_field, x, m + b, h)
            lzzb[:, b] = 0.5 * (dx + 1j * dy)
        r2 = float(np.max(np.abs(d["L_psipsi"] + lzzb)))
        return max(r1, r2)


def constant_l_potential(m=1):
    """L = -sum (psi^A)^2: unit Gibbons-Hawking potential, vanishing connection."""

    def ev(pt):
        psi = pt.psi_plain
        return {
            "L": -float(psi @ psi),
            "L_z": np.zeros(m, complex),
            "L_psi": -2.0 * psi.astype(complex),
            "L_psipsi": -2.0 * np.eye(m, dtype=complex),
            "L_psiz": np.zeros((m, m), complex),
        }

    def rho(pt):
        return np.zeros(m), np.zeros((m, m), complex), np.zeros((m, m))

    return ToricLPotential(m=m, evaluator=ev, rho=rho, name="flat")


def semiflat_l_potential(prep):
    """L^sf = 2 Im(zbar^A F_A) - Im F_AB psi^A psi^B with rho_A = -Re F_AB psi^B."""
    m = prep.m

    def ev(pt):
        F, FA, FAB, FABC = prep(pt.z)
        z, psi = pt.z, pt.psi_plain
        L = 2.0 * np.imag(np.conj(z) @ FA) - psi @ FAB.imag @ psi
        L_z = -1j * (FAB @ np.conj(z) - np.conj(FA)) + 0.5j * np.einsum("abc,b,c->a", FABC, psi, psi)
        L_psi = -2.0 * FAB.imag @ psi
        L_psipsi = -2.0 * FAB.imag.astype(complex)
        L_psiz = 1j * np.einsum("abc,b->ac", FABC, psi)
        return {"L": float(L), "L_z": L_z, "L_psi": L_psi.astype(complex), "L_psipsi": L_psipsi, "L_psiz": L_psiz}

    def rho(pt):
        F, FA, FAB, FABC = prep(pt.z)
        psi = pt.psi_plain
        r = -FAB.real @ psi
        r_z = -0.5 * np.einsum("abc,b->ac", FABC, psi)  # d(-Re FAB psi)/dz
        r_psi = -FAB.real
        return r, r_z, r_psi

    return ToricLPotential(m=m, evaluator=ev, rho=rho, name=f"sf[{prep.name}]")


def sum_l_potentials(first, second, name=None):
    """Pointwise sum; second contributes no shift (rho comes from the first)."""

    def ev(pt):
        a, b = first(pt), second(pt)
        return {k: a[k] + b[k] for k in a}

    return ToricLPotential(
        m=first.m, evaluator=ev, rho=first.rho, name=name or f"{first.name}+{second.name}"
    )


# ---------------------------------------------------------------------------
# frames from an L-potential


def toric_u(L, pt):
    """u_A = psit_A + rho_A + (i/2) L_{psi^A}."""
    d = L(pt)
    r, _, _ = L.rho(pt)
    return pt.psi_tilde + r + 0.5j * d["L_psi"]


def toric_frame(L, pt):
    """FrameData of the toric metric: omega_+ = h_A ^ dz^A, etc.

    h_A = d psit_A + (d ubar_A/d z^B) dz^B + (d u_A/d zbar^B) dzbar^B
        + (d u_A/d psi^B) d psi^B,  phi_AB = -L_{psi psi}.
    """
    m = L.m
    d = L(pt)
    _, r_z, r_psi = L.rho(pt)
    phi = -d["L_psipsi"].real
    if np.linalg.cond(phi) > 1e12:
        raise geo.SingularFormError("phi_AB = -L_psipsi singular at this point")
    du_dz_bar = r_z - 0.5j * d["L_psiz"]  # d ubar_A / d z^B
    du_dpsi = r_psi + 0.5j * d["L_psipsi"]
    dz = geo.dz_covectors(m)
    dzb = np.conj(dz)
    dps = geo.dpsi_covectors(m)
    h = dps[:m] + du_dz_bar @ dz + np.conj(du_dz_bar) @ dzb + du_dpsi @ dps[m:]
    hb = np.conj(h)
    phi_inv = np.linalg.inv(phi)

    wp = np.zeros((4 * m, 4 * m), dtype=complex)
    w0 = np.zeros((4 * m, 4 * m), dtype=complex)
    for a in range(m):
        wp += geo.wedge(h[a], dz[a])
        for b in range(m):
            w0 += -1j * (phi[a, b] * geo.wedge(dz[a], dzb[b]) + phi_inv[b, a] * geo.wedge(h[a], hb[b]))
    return geo.frame_from_forms(wp, w0)


def gh_assemble(L, pt, h=1e-5):
    """(Phi_AB, A-rows, bogomolny_residual) of the extended Gibbons-Hawking data.

    A_A = Im(L_{psi^A z^B} dz^B) + d rho_A as covector rows in the real frame;
    the residual checks dA_C = star^B d Phi_CB by finite differences in the
    R^{3m} coordinates (2 Re z, 2 Im z, psi).
    """
    m = L.m
    d = L(pt)
    Phi = -0.5 * d["L_psipsi"].real
    _, r_z, r_psi = L.rho(pt)
    dz = geo.dz_covectors(m)
    dzb = np.conj(dz)
    dps = geo.dpsi_covectors(m)
    lpz = d["L_psiz"]
    arows = (lpz @ dz - np.conj(lpz) @ dzb) / 2j + r_z @ dz + np.conj(r_z) @ dzb + r_psi @ dps[m:]

    resid = _bogomolny_residual(L, pt, h)
    return Phi, arows.real if np.max(np.abs(arows.imag)) < 1e-12 else arows, resid


def _gh_point(L, xgh, psi_tilde):
    m = L.m
    z = 0.5 * (xgh[:m] + 1j * xgh[m : 2 * m])
    return FiberPoint(z=z, psi=np.concatenate([psi_tilde, xgh[2 * m :]]))


def _bogomolny_residual(L, pt, h=1e-5):
    """FD residual of dA_C = star^B d Phi_CB on R^{3m}, coords x^B = (2Re z, 2Im z, psi)."""
    m = L.m
    x0 = np.concatenate([2.0 * pt.z.real, 2.0 * pt.z.imag, pt.psi_plain])
    psit = pt.psi_tilde

    def gh_idx(B, i):
        # i = 0,1,2 -> x1, x2, x3 components of r^B
        return B + i * m

    def a_components(xgh):
        p = _gh_point(L, xgh, psit)
        d = L(p)
        _, r_z, r_psi = L.rho(p)
        lpz = d["L_psiz"]
        # A_C over GH coordinates: dz = (dx1 + i dx2)/2
        out = np.zeros((m, 3 * m))
        for C in range(m):
            for B in range(m):
                w = lpz[C, B] / 2j + r_z[C, B]  # coefficient of dz^B (rho part holomorphic + c.c.)
                out[C, gh_idx(B, 0)] = np.real(w + np.conj(w)) * 0.5
                out[C, gh_idx(B, 1)] = np.real(1j * (w - np.conj(w))) * 0.5
                out[C, gh_idx(B, 2)] = np.real(r_psi[C, B])
        return out

    def phi_components(xgh):
        p = _gh_point(L, xgh, psit)
        return -0.5 * L(p)["L_psipsi"].real

    jac_a = np.stack([geo.partial(a_components, x0, i, h) for i in range(3 * m)], axis=0)
    jac_phi = np.stack([geo.partial(phi_components, x0, i, h) for i in range(3 * m)], axis=0)

    eps3 = np.zeros((3, 3, 3))
    eps3[0, 1, 2] = eps3[1, 2, 0] = eps3[2, 0, 1] = 1.0
    eps3[0, 2, 1] = eps3[2, 1, 0] = eps3[1, 0, 2] = -1.0

    worst = 0.0
    for C in range(m):
        dA = jac_a[:, C, :] - jac_a[:, C, :].T
        star = np.zeros((3 * m, 3 * m))
        for E in range(m):
            for D in range(m):
                for k in range(3):
                    coeff = jac_phi[gh_idx(D, k), C, E].real
                    for i in range(3):
                        for j in range(3):
                            if eps3[k, i, j]:
                                star[gh_idx(E, i), gh_idx(D, j)] += 0.5 * eps3[k, i, j] * coeff
        star = star - star.T
        worst = max(worst, float(np.max(np.abs(dA - star))))
    return worst


# ---------------------------------------------------------------------------
# Ooguri-Vafa closed forms


def _ov_series(params, r, s, kind):
    """Adaptive K-Bessel series for the OV potentials; kind selects the summand."""
    q = params.q
    if r <= 0:
        raise DomainError("Bessel series requires |z| > 0")
    total = 0.0
    tail = np.inf
    k0v = None
    chunk = 64
    start = 1
    while start <= params.k_max:
        ks = np.arange(start, min(params.k_max, start + chunk - 1) + 1, dtype=float)
        arg = 2.0 * ks * q * r
        if kind == "phi":
            vals = bessel_k0(arg) * np.cos(ks * q * s)
        elif kind == "linst":
            vals = bessel_k0(arg) * np.cos(ks * q * s) / ks**2
        elif kind == "linst_psi":
            vals = bessel_k0(arg) * np.sin(ks * q * s) / ks
        elif kind == "linst_z":
            vals = bessel_k1(arg) * np.cos(ks * q * s) / ks
        elif kind == "linst_psiz":
            vals = bessel_k1(arg) * np.sin(ks * q * s)
        elif kind == "mu":
            vals = bessel_k1(arg) * np.cos(ks * q * s) / ks
        else:
            raise ValueError(kind)
        total += float(np.sum(vals))
        kmax_arg = float(arg[-1])
        tail = np.sqrt(np.pi / (2 * kmax_arg)) * np.exp(-kmax_arg) / max(1e-300, 1 - np.exp(-2 * q * r))
        if tail < 1e-15 * max(1.0, abs(total)):
            break
        start += chunk
    return total, tail


def ov_phi(params, z, psi, method="bessel"):
    """Gibbons-Hawking potential of the Ooguri-Vafa metric.

    bessel:  (q^2/4pi) [ln|qz|^2 - 4 sum_k K0(2k|qz|) cos(kq psi)]
    poisson: -(q^2/2) sum_n (((q psi + 2pi n)^2 + 4|qz|^2)^{-1/2} - c_|n|)
    with c_n = 1/(2 pi n) and c_0 = (ln 2pi - gamma)/pi; the two agree exactly.
    """
    q = params.q
    r = abs(z)
    if method == "bessel":
        if r == 0:
            raise DomainError("Bessel form of Phi requires z != 0")
        ssum, _ = _ov_series(params, r, psi, "phi")
        return float(q * q / (4 * np.pi) * (np.log((q * r) ** 2) - 4.0 * ssum))
    if method == "poisson":
        s = q * psi
        c = 2.0 * q * r
        n = np.arange(1, params.n_max + 1, dtype=float)
        d_plus = (s + 2 * np.pi * n) ** 2 + c * c
        d_minus = (s - 2 * np.pi * n) ** 2 + c * c
        if s * s + c * c < 1e-24 or np.min(d_minus) < 1e-24:
            raise SingularPointError("Poisson form of Phi evaluated at a nodal point")
        total = 1.0 / np.sqrt(s * s + c * c) - POISSON_C0
        total += float(np.sum(1.0 / np.sqrt(d_plus) + 1.0 / np.sqrt(d_minus) - 1.0 / (np.pi * n)))

        def tail_term(x):
            return (
                1.0 / np.sqrt((s + 2 * np.pi * x) ** 2 + c * c)
                + 1.0 / np.sqrt((2 * np.pi * x - s) ** 2 + c * c)
                - 1.0 / (np.pi * x)
            )

        total += _em_tail(tail_term, params.n_max + 0.5)
        return float(-(q * q / 2.0) * total)
    raise DomainError(f"unknown method {method!r}")


def _em_tail(g, x0):
    """sum_{n > N} g(n) with x0 = N + 1/2, via midpoint Euler-Maclaurin.

    Integral computed under x = x0/u on (0, 1]; derivative correction -g'(x0)/24.
    """
    u = 0.5 * (_GAUSS_T + 1.0)
    w = 0.5 * _GAUSS_W
    vals = np.array([g(x0 / ui) * x0 / ui**2 for ui in u])
    integral = float(vals @ w)
    h = 1e-3 * x0
    gprime = (g(x0 + h) - g(x0 - h)) / (2 * h)
    return integral - gprime / 24.0


def ov_linst(params, z, psi):
    """Instanton part of the OV L-potential: -(2/pi) sum k^-2 K0(2k|qz|) cos(kq psi).

    Returns (value, tail_bound).
    """
    r = abs(z)
    if r == 0:
        raise DomainError("L^inst requires z != 0")
    ssum, tail = _ov_series(params, r, psi, "linst")
    return -2.0 / np.pi * ssum, 2.0 / np.pi * tail


def ov_mu(params, z, psi):
    """Rotational moment map, Poisson form with only the square root at n = 0.

    mu = (1/2) sum_n (sqrt((q psi + 2pi n)^2 + 4|qz|^2) - 2|qz|^2 c_|n| - 1/c_|n|)
         - (q|z|)^2 (ln 2pi - gamma - 1/2) / pi - (q psi)^2 / (4 pi).

    The quadratic counterterms align the c_n resummation scheme with the
    one-loop prepotential normalization, so that this function equals the
    semi-flat moment map plus the ray-integral instanton part up to one
    global additive constant (the n = 0 offset), not up to quadratics in
    |z| and psi.
    """
    q = params.q
    s = q * psi
    c = 2.0 * q * abs(z)
    n = np.arange(1, params.n_max + 1, dtype=float)
    tp = s + 2 * np.pi * n
    tm = 2 * np.pi * n - s
    # sqrt(t^2+c^2) - t = c^2/(sqrt(t^2+c^2)+t), stable for large t
    excess = c * c / (np.sqrt(tp * tp + c * c) + tp) + c * c / (np.sqrt(tm * tm + c * c) + tm)
    total = np.sqrt(s * s + c * c)
    total += float(np.sum(excess - c * c / (2 * np.pi * n)))

    def tail_term(x):
        tpl = s + 2 * np.pi * x
        tmi = 2 * np.pi * x - s
        return (
            c * c / (np.sqrt(tpl * tpl + c * c) + tpl)
            + c * c / (np.sqrt(tmi * tmi + c * c) + tmi)
            - c * c / (2 * np.pi * x)
        )

    total += _em_tail(tail_term, params.n_max + 0.5)
    scheme = (q * abs(z)) ** 2 * (np.log(2 * np.pi) - EULER_GAMMA - 0.5) / np.pi
    scheme += s * s / (4.0 * np.pi)
    return float(0.5 * total - scheme)


def ov_mu_bessel(params, z, psi):
    """Equivalent K1-series form: mu^sf - (2 q |z| / pi) sum k^-1 K1(2k|qz|) cos(kq psi)."""
    prep = ov_log_prepotential(params.q)
    zv = np.array([complex(z)])
    _, FA, _, _ = prep(zv)
    mu_sf = -2.0 * float(np.imag(np.conj(zv[0]) * FA[0]))
    ssum, _ = _ov_series(params, abs(z), psi, "mu")
    return mu_sf - (2.0 * params.q * abs(z) / np.pi) * ssum


def ov_l_potential(params):
    """Full OV L-potential L = L^sf + L^inst with the semi-flat shift functions."""
    prep = ov_log_prepotential(params.q)
    base = semiflat_l_potential(prep)
    q = params.q

    def inst(pt):
        z = pt.z[0]
        psi = pt.psi_plain[0]
        r = abs(z)
        if r == 0:
            raise DomainError("L^inst requires z != 0")
        val, _ = ov_linst(params, z, psi)
        s_psi, _ = _ov_series(params, r, psi, "linst_psi")
        s_z, _ = _ov_series(params, r, psi, "linst_z")
        s_pp, _ = _ov_series(params, r, psi, "phi")
        s_pz, _ = _ov_series(params, r, psi, "linst_psiz")
        return {
            "L": val,
            "L_z": np.array([(2.0 * q / np.pi) * (np.conj(z) / r) * s_z]),
            "L_psi": np.array([(2.0 * q / np.pi) * s_psi], dtype=complex),
            "L_psipsi": np.array([[(2.0 * q * q / np.pi) * s_pp]], dtype=complex),
            "L_psiz": np.array([[-(2.0 * q * q / np.pi) * (np.conj(z) / r) * s_pz]]),
        }

    linst = ToricLPotential(m=1, evaluator=inst, rho=base.rho, name="ov_inst")
    return sum_l_potentials(base, linst, name=f"ov(q={q})")


# ---------------------------------------------------------------------------
# the twistor coordinate eta-tilde and its Kontsevich-Soibelman jump


def _ov_ray_data(z):
    r = abs(z)
    if r == 0:
        raise DomainError("rays undefined at z = 0")
    dir_plus = -1j * z / r
    return dir_plus, -dir_plus


def ray_relative_distance(zeta, direction):
    """dist(zeta, ray through direction)/|zeta|; the ray is direction * (0, oo)."""
    ratio = zeta / direction
    if ratio.real <= 0:
        return 1.0
    return abs(ratio.imag) / abs(ratio)


def ov_eta(params, pt, zeta):
    """The O(2) coordinate eta = z/zeta + psi - zbar zeta (electric component)."""
    z = pt.z[0]
    psi = pt.psi_plain[0]
    return z / zeta + psi - np.conj(z) * zeta


def ov_eta_tilde_sf(params, pt, zeta):
    prep = ov_log_prepotential(params.q)
    _, FA, _, _ = prep(pt.z)
    return FA[0] / zeta + pt.psi_tilde[0] - np.conj(FA[0]) * zeta


def ov_eta_tilde(params, pt, zeta, rule=None, min_rel_dist=1e-3):
    """Instanton-corrected conjugate coordinate via the two ray integrals.

    etat(zeta) = etat^sf - (q/4pi) int_{l+} (dz'/z') K ln(1 - e^{i q eta})
                         + (q/4pi) int_{l-} (dz'/z') K ln(1 - e^{-i q eta}),
    K = (z'+zeta)/(z'-zeta); raises RayProximityError near either ray.
    """
    z = pt.z[0]
    psi = pt.psi_plain[0]
    q = params.q
    if zeta == 0:
        raise DomainError("eta-tilde has a pole at zeta = 0")
    dplus, dminus = _ov_ray_data(z)
    rel = min(ray_relative_distance(zeta, dplus), ray_relative_distance(zeta, dminus))
    if rel < min_rel_dist:
        raise RayProximityError(f"zeta within {rel:.1e} relative distance of a BPS ray")
    if rule is None:
        rule = trapezoid_rule(5.0, 801)
    u = rule.nodes
    w = rule.weights
    damp = np.exp(-2.0 * q * abs(z) * np.cosh(u))
    lp = np.log1p(-np.exp(1j * q * psi) * damp)
    lm = np.log1p(-np.exp(-1j * q * psi) * damp)
    zp = dplus * np.exp(u)
    zm = dminus * np.exp(u)
    kp = (zp + zeta) / (zp - zeta)
    km = (zm + zeta) / (zm - zeta)
    ip = np.dot(w, kp * lp)
    im = np.dot(w, km * lm)
    return ov_eta_tilde_sf(params, pt, zeta) - q / (4 * np.pi) * ip + q / (4 * np.pi) * im


def ov_jump_residual(params, pt, deltas=(0.02, 0.01, 0.005, 0.0025), zeta_abs=1.0, rule=None):
    """Residual of the KS jump across the rays.

    On l+: |e^{i etat(zeta(1+i d))} - e^{i etat(zeta(1-i d))} (1 - e^{iq eta})^{+q}|,
    on l-: the same with factor (1 - e^{-iq eta})^{-q}; the complex difference
    is extrapolated quadratically to d -> 0 and the worse residual returned.
    """
    z = pt.z[0]
    q = params.q
    dplus, dminus = _ov_ray_data(z)
    if rule is None:
        n = max(801, int(10.0 / (min(deltas) / 5.0)) | 1)
        rule = trapezoid_rule(5.0, n)

    worst = 0.0
    for direction, sign in ((dplus, +1), (dminus, -1)):
        zeta0 = direction * zeta_abs
        eta0 = ov_eta(params, pt, zeta0)
        base = 1.0 - np.exp(sign * 1j * q * eta0)
        factor = base ** (sign * q)
        diffs = []
        for d in deltas:
            ccw = np.exp(1j * ov_eta_tilde(params, pt, zeta0 * (1 + 1j * d), rule=rule))
            cw = np.exp(1j * ov_eta_tilde(params, pt, zeta0 * (1 - 1j * d), rule=rule))
            diffs.append(ccw - cw * factor)
        d = np.asarray(deltas)
        v = np.asarray(diffs)
        extr = 0.0
        for i in range(len(d)):
            li = 1.0
            for j in range(len(d)):
                if j != i:
                    li *= (0.0 - d[j]) / (d[i] - d[j])
            extr += li * v[i]
        worst = max(worst, abs(extr))
    return float(worst)


def ov_frame(params, pt):
    """Toric frame of the full OV metric (semi-flat + instanton L-potential)."""
    return toric_frame(ov_l_potential(params), pt)


def ov_semiflat_frame(params, pt):
    return semiflat_frame(ov_log_prepotential(params.q), pt)
