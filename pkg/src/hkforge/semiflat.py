"""Semi-flat hyperkahler metrics from a holomorphic prepotential.

The frames live in the real coordinate order (Re z, Im z, psit, psi) of
`geometry`.  Basis charges are ordered magnetic-first, so the O(2) sections
are eta_{gamma^a} = (etat_A, eta^A) with central charges (F_A, z^A).
"""

from dataclasses import dataclass, field

import numpy as np

from . import geometry as geo
from .errors import DomainError, SingularFormError
from .geometry import FiberPoint, FrameData

_REG_TOL = 1e-7


@dataclass(frozen=True)
class Prepotential:
    """Holomorphic prepotential with derivatives up to third order.

    evaluator(z) -> (F, F_A, F_AB, F_ABC); in_domain(z) declares the regular
    chart on which Im F_AB is definite and branches are single-valued.
    """

    m: int
    evaluator: object
    in_domain: object = field(default=None)
    name: str = "custom"

    def __call__(self, z):
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        if self.in_domain is not None and not self.in_domain(z):
            raise DomainError(f"z = {z} outside the regular domain of {self.name}")
        return self.evaluator(z)

    def check(self, z):
        return self.in_domain(z) if self.in_domain is not None else True

    def homogeneity_defect(self, z):
        """f = z^A F_A - 2F with derivatives (f, f_A, f_AB)."""
        F, FA, FAB, FABC = self(z)
        f = z @ FA - 2.0 * F
        fA = FAB @ z - FA
        fAB = np.einsum("abc,c->ab", FABC, z)
        return f, fA, fAB


def quadratic_prepotential(tau=1j, m=1):
    """F = (1/2) tau_AB z^A z^B; tau may be a scalar (times identity) or a matrix.

    The metric is flat; it is nondegenerate only when Im tau is invertible,
    which is why the flat model uses tau = i rather than 1.
    """
    tau_mat = np.asarray(tau, dtype=complex)
    if tau_mat.ndim == 0:
        tau_mat = tau_mat * np.eye(m)

    def ev(z):
        return 0.5 * z @ tau_mat @ z, tau_mat @ z, tau_mat.copy(), np.zeros((m, m, m), complex)

    return Prepotential(m=m, evaluator=ev, name=f"quadratic(tau={tau})")


def cubic_prepotential(m=1):
    """F = sum_A (z^A)^3 on the chart Im z^A > 0 (metric definite there)."""

    def ev(z):
        F = np.sum(z**3)
        FA = 3.0 * z**2
        FAB = np.diag(6.0 * z)
        FABC = np.zeros((m, m, m), complex)
        for a in range(m):
            FABC[a, a, a] = 6.0
        return F, FA, FAB, FABC

    def dom(z):
        return bool(np.all(z.imag > 0.05))

    return Prepotential(m=m, evaluator=ev, in_domain=dom, name="cubic")


def ov_log_prepotential(q=1):
    """One-loop prepotential of the periodic monopole family, F(z) = (i/8 pi) w^2 (2 ln w - 3), w = qz.

    ln z^2 is realized as 2 ln z (principal), which fixes a single monodromy
    sector; the declared chart keeps |w| away from 1 (where Im F_zz changes
    sign) and away from the negative real cut.
    """
    if q < 1 or int(q) != q:
        raise DomainError("q must be a positive integer")
    q = int(q)

    def ev(z):
        w = q * z
        lw = np.log(w)
        c = 1j / (2.0 * np.pi)
        F = complex(0.125j / np.pi * (w[0] ** 2) * (2.0 * lw[0] - 3.0))
        FA = np.array([c * q * w[0] * (lw[0] - 1.0)])
        FAB = np.array([[c * q * q * lw[0]]])
        FABC = np.array([[[c * q**3 / w[0]]]])
        return F, FA, FAB, FABC

    def dom(z):
        w = q * z[0]
        return bool(abs(w) > 0 and abs(np.angle(w)) < np.pi - 0.05 and abs(abs(w) - 1.0) > 0.02)

    return Prepotential(m=1, evaluator=ev, in_domain=dom, name=f"ov_log(q={q})")


def polynomial_prepotential(coeffs, in_domain=None):
    """Single-variable F = sum_k coeffs[k] z^k."""
    coeffs = [complex(c) for c in coeffs]

    def ev(z):
        w = z[0]
        F = sum(c * w**k for k, c in enumerate(coeffs))
        FA = np.array([sum(k * c * w ** (k - 1) for k, c in enumerate(coeffs) if k >= 1)])
        FAB = np.array([[sum(k * (k - 1) * c * w ** (k - 2) for k, c in enumerate(coeffs) if k >= 2)]])
        FABC = np.array(
            [[[sum(k * (k - 1) * (k - 2) * c * w ** (k - 3) for k, c in enumerate(coeffs) if k >= 3)]]]
        )
        return F, FA, FAB, FABC

    return Prepotential(m=1, evaluator=ev, in_domain=in_domain, name="polynomial")


def pentagon_prepotential():
    """F = z^3 - (3i/2) z^2: the two-charge wall sits on Im z = 1, Re z > 0,
    where Im F_zz = 6 Im z - 3 stays positive on both sides."""
    return polynomial_prepotential(
        [0.0, 0.0, -1.5j, 1.0], in_domain=lambda z: bool(np.all(z.imag > 0.55))
    )


# ---------------------------------------------------------------------------
# O(2) sections and frames


def central_charges(prep, pt):
    """Z_{gamma^a} = (F_A, z^A) in the magnetic-first basis order."""
    _, FA, _, _ = prep(pt.z)
    return np.concatenate([FA, pt.z])


def semiflat_eta(prep, pt, zeta):
    """eta^sf_{gamma^a} = Z_{gamma^a}/zeta + psi_{gamma^a} - conj(Z_{gamma^a}) zeta."""
    if zeta == 0:
        raise DomainError("eta^sf has a pole at zeta = 0")
    Z = central_charges(prep, pt)
    return Z / zeta + pt.psi - np.conj(Z) * zeta


def semiflat_u(prep, pt):
    """u_A = psit_A - F_AB psi^B (shift choice rho_A = -Re F_AB psi^B)."""
    _, _, FAB, _ = prep(pt.z)
    return pt.psi_tilde - FAB @ pt.psi_plain


def theta_plus_row(prep, pt):
    """theta_+ = u_A dz^A as a covector row."""
    m = prep.m
    dz = geo.dz_covectors(m)
    return semiflat_u(prep, pt) @ dz


def semiflat_frame(prep, pt):
    """FrameData of the semi-flat metric at pt.

    omega_+ = d psit_A ^ dz^A + dF_A ^ d psi^A,
    omega_0 = dz^A ^ dFbar_A + dzbar^A ^ dF_A + d psit_A ^ d psi^A.
    """
    m = prep.m
    _, _, FAB, _ = prep(pt.z)
    phi = 2.0 * FAB.imag
    if np.linalg.cond(phi) > 1e12:
        raise SingularFormError("Im F_AB is singular at this point")
    dz = geo.dz_covectors(m)
    dzb = np.conj(dz)
    dps = geo.dpsi_covectors(m)
    dF = FAB @ dz  # rows dF_A
    dFb = np.conj(dF)

    wp = np.zeros((4 * m, 4 * m), dtype=complex)
    w0 = np.zeros((4 * m, 4 * m), dtype=complex)
    for a in range(m):
        wp += geo.wedge(dps[a], dz[a]) + geo.wedge(dF[a], dps[m + a])
        w0 += geo.wedge(dz[a], dFb[a]) + geo.wedge(dzb[a], dF[a]) + geo.wedge(dps[a], dps[m + a])
    return geo.frame_from_forms(wp, w0)


def frame_field(prep):
    """Map from coordinate arrays to FrameData, for FD sweeps."""

    def at(x):
        return semiflat_frame(prep, FiberPoint.from_array(np.asarray(x, dtype=float)))

    return at


def form_field(prep, which):
    idx = {1: "omega_plus", 0: "omega_zero", -1: "omega_minus"}[which]

    def at(x):
        return getattr(semiflat_frame(prep, FiberPoint.from_array(np.asarray(x))), idx)

    return at


# ---------------------------------------------------------------------------
# rotational / twisted action


def _psit_vector(m, coeffs):
    v = np.zeros(4 * m, dtype=complex)
    v[2 * m : 3 * m] = coeffs
    return v


def _l3_vector(pt):
    """Rotation generator L3 = Im z^A d/dRe z^A - Re z^A d/dIm z^A."""
    m = pt.m
    v = np.zeros(4 * m, dtype=complex)
    v[:m] = pt.z.imag
    v[m : 2 * m] = -pt.z.real
    return v


def rot_generators(prep, pt):
    """(X^rot_+, X^rot_0, X^rot_-) = (i f_A d_psit, L3, i conj(f_A) d_psit)."""
    _, fA, _ = prep.homogeneity_defect(pt.z)
    return _psit_vector(prep.m, 1j * fA), _l3_vector(pt), _psit_vector(prep.m, 1j * np.conj(fA))


def gradient_generators(prep, pt):
    """Symplectic-gradient presentation: X_+ = -i (z^A d_psi + F_A d_psit), X_0 = 0."""
    m = prep.m
    _, FA, _, _ = prep(pt.z)
    xp = np.zeros(4 * m, dtype=complex)
    xp[2 * m : 3 * m] = -1j * FA
    xp[3 * m :] = -1j * pt.z
    return xp, np.zeros(4 * m, dtype=complex), -np.conj(xp)


def semiflat_potentials(prep, pt):
    """(phi_++, phi_+, mu) = (i f, i (z psit - F_A psi), -2 Im(zbar F_A))."""
    f, _, _ = prep.homogeneity_defect(pt.z)
    _, FA, _, _ = prep(pt.z)
    phi_pp = 1j * f
    phi_p = 1j * (pt.z @ pt.psi_tilde - FA @ pt.psi_plain)
    mu = -2.0 * np.imag(np.conj(pt.z) @ FA)
    return phi_pp, phi_p, float(mu)


def moment_map_residuals(prep, pt, generators=None, h=1e-5):
    """FD residuals of the five moment-map equations (n = -2..2).

    iota_{X_{n-1}} w_+ + iota_{X_n} w_0 + iota_{X_{n+1}} w_- equals
    d phi_++ (n=2), d phi_+ - i theta_+ (n=1), d mu (n=0) and the alternating
    conjugates for n < 0; theta_+ = u_A dz^A.
    """
    x = pt.to_array()
    frame = semiflat_frame(prep, pt)
    if generators is None:
        generators = rot_generators(prep, pt)
    xp, x0, xm = generators
    gens = {1: xp, 0: x0, -1: xm, 2: np.zeros_like(xp), -2: np.zeros_like(xp), 3: np.zeros_like(xp), -3: np.zeros_like(xp)}
    omegas = {1: frame.omega_plus, 0: frame.omega_zero, -1: frame.omega_minus}

    def pot_pp(y):
        p = FiberPoint.from_array(np.asarray(y))
        return semiflat_potentials(prep, p)[0]

    def pot_p(y):
        p = FiberPoint.from_array(np.asarray(y))
        return semiflat_potentials(prep, p)[1]

    def pot_mu(y):
        p = FiberPoint.from_array(np.asarray(y))
        return semiflat_potentials(prep, p)[2]

    d_pp = geo.grad(pot_pp, x, h)
    d_p = geo.grad(pot_p, x, h)
    d_mu = geo.grad(pot_mu, x, h)
    theta = theta_plus_row(prep, pt)

    rhs = {
        2: d_pp,
        1: d_p - 1j * theta,
        0: d_mu,
        -1: -np.conj(d_p) - 1j * np.conj(theta),
        -2: np.conj(d_pp),
    }
    residuals = {}
    for n in range(-2, 3):
        lhs = (
            gens[n - 1] @ omegas[1]
            + gens[n] @ omegas[0]
            + gens[n + 1] @ omegas[-1]
        )
        residuals[n] = float(np.max(np.abs(lhs - rhs[n])))
    return residuals


def semiflat_rot_action(prep, pt):
    """Generators, potentials and moment-map residuals of the rotational action."""
    gens = rot_generators(prep, pt)
    pots = semiflat_potentials(prep, pt)
    residuals = moment_map_residuals(prep, pt, generators=gens)
    return gens, pots, residuals


def rotation_invariance_test(prep, sample_points, tol=1e-8):
    """True iff L3(L^sf) = 0: both Re(zbar^A f_A) and Re f_AB vanish on the samples."""
    worst = 0.0
    for pt in sample_points:
        z = pt.z if isinstance(pt, FiberPoint) else np.atleast_1d(np.asarray(pt, complex))
        _, fA, fAB = prep.homogeneity_defect(z)
        worst = max(worst, float(np.abs(np.real(np.conj(z) @ fA))))
        worst = max(worst, float(np.max(np.abs(fAB.real))) if fAB.size else 0.0)
    return worst < tol, worst


# ---------------------------------------------------------------------------
# closed hyper (1,1) forms of the twisted action


def _h_rows(prep, pt):
    m = prep.m
    _, _, FAB, _ = prep(pt.z)
    dz = geo.dz_covectors(m)
    dps = geo.dpsi_covectors(m)
    return dps[:m] - FAB @ dps[m:], dz


def semiflat_sigma_forms(prep, pt):
    """Closed-form (sigma_+, sigma_0) of the twisted rotational action.

    sigma_0 = i phi_AB (dz^A ^ dzbar^B - h^B ^ hbar^A),
    sigma_+ = -d(f_A hbar^A) expanded through the prepotential derivatives.
    """
    m = prep.m
    _, _, FAB, FABC = prep(pt.z)
    _, fA, _ = prep.homogeneity_defect(pt.z)
    phi = 2.0 * FAB.imag
    phi_inv = np.linalg.inv(phi)
    h, dz = _h_rows(prep, pt)
    h_up = 1j * phi_inv @ h  # rows h^A
    hb_up = np.conj(h_up)
    dzb = np.conj(dz)

    sigma0 = np.zeros((4 * m, 4 * m), dtype=complex)
    for a in range(m):
        for b in range(m):
            sigma0 += 1j * phi[a, b] * (geo.wedge(dz[a], dzb[b]) - geo.wedge(h_up[b], hb_up[a]))

    # d_z^A (phi^{DC} f_C) with d_z phi_BC = -i F_ABC, d_z f_C = z^D F_DCA
    dphi = -1j * FABC  # dphi[a][b][c] = d_{z^a} phi_{bc}
    g_vec = phi_inv @ fA  # phi^{DC} f_C
    fAB = np.einsum("abc,c->ab", FABC, pt.z)
    dg_z = np.zeros((m, m), dtype=complex)  # dg_z[a, d] = d_{z^a} (phi^{DC} f_C)
    for a in range(m):
        dg_z[a] = -phi_inv @ dphi[a] @ g_vec + phi_inv @ fAB[:, a]
    dphib = np.conj(dphi)  # d_{zbar^a} phi = conj since phi = 2 Im F
    dg_zb = np.zeros((m, m), dtype=complex)
    for a in range(m):
        dg_zb[a] = -phi_inv @ dphib[a] @ g_vec

    sigmap = np.zeros((4 * m, 4 * m), dtype=complex)
    for a in range(m):
        for b in range(m):
            coef1 = -sum(phi[b, d] * dg_z[a, d] for d in range(m))
            sigmap += coef1 * geo.wedge(dz[a], hb_up[b])
    for a in range(m):
        for b in range(m):
            coef2 = -sum(phi[a, d] * dg_zb[b, d] for d in range(m))
            sigmap += coef2 * geo.wedge(h_up[a], dzb[b])
    return sigmap, sigma0


def sigma_forms_fd(prep, pt, h=1e-5):
    """(sigma_+, sigma_0) via sigma_m = omega_m + d(d mu . I_m), all FD."""
    x = pt.to_array()
    frame = semiflat_frame(prep, pt)

    def mu_field(y):
        return semiflat_potentials(prep, FiberPoint.from_array(np.asarray(y)))[2]

    def dmu_Im(which):
        def row(y):
            fr = semiflat_frame(prep, FiberPoint.from_array(np.asarray(y)))
            ip, i0, im = fr.I_spherical()
            sel = {1: ip, 0: i0, -1: im}[which]
            return geo.grad(mu_field, y, h) @ sel

        return row

    sp = frame.omega_plus + geo.d_oneform(dmu_Im(1), x, h)
    s0 = frame.omega_zero + geo.d_oneform(dmu_Im(0), x, h)
    return sp, s0


def eta_pde_residual(prep, pt, zeta, h=1e-5):
    """Residual of (-i zeta d_zeta + X(zeta)) eta^sf_{gamma^a} = 0 at fixed zeta."""
    xp, x0, xm = gradient_generators(prep, pt)
    xvec = xp / zeta + x0 + zeta * xm
    x = pt.to_array()

    def eta_field(y):
        return semiflat_eta(prep, FiberPoint.from_array(np.asarray(y)), zeta)

    jac = geo.grad(eta_field, x, h)  # (2m, 4m)
    Z = central_charges(prep, pt)
    dzeta_part = 1j * Z / zeta + 1j * np.conj(Z) * zeta  # -i zeta d_zeta eta
    resid = dzeta_part + jac @ xvec
    return float(np.max(np.abs(resid)))
