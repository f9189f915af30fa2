"""Instanton-corrected twistor coordinates from the functional integral equation.

The unknowns are ln(1 - X_gamma(zeta)) sampled on the active BPS rays; a ray
through Z carries the nodes zeta_i = -i (Z/|Z|) e^{u_i}, on which i eta^sf =
i psi_gamma - 2|Z_gamma| cosh u.  Plain Picard iteration contracts whenever
the instanton factors stay below 1; same-ray contributions are skipped (the
away-from-walls invariant makes their pairings vanish, and the kernel is
singular there).

All downstream quantities (Laurent data, frames, moment maps, generators)
are driven by GmnModel, which re-solves at finite-difference stencil points
with warm starts and caches converged grids per point.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from . import geometry as geo
from .charges import Charge, StabilityData, SymplecticLattice, basis_charge
from .errors import (
    ConvergenceError,
    DivergenceError,
    DomainError,
    RayProximityError,
    WallError,
)
from .geometry import FiberPoint
from .special import QuadratureRule, trapezoid_rule

_DIR_TOL = 1e-9


@dataclass(frozen=True)
class RayData:
    direction: complex
    charges: tuple  # ((Charge, Omega), ...)


@dataclass
class TwistorFunctionGrid:
    """Sampled i eta_gamma on each active ray plus iteration metadata."""

    rays: list
    rule: QuadratureRule
    point: FiberPoint
    ieta: dict
    ieta_sf: dict
    iterations: int = 0
    residual_history: list = field(default_factory=list)

    @property
    def sup_residual(self):
        return self.residual_history[-1] if self.residual_history else np.inf

    def ln_one_minus_x(self, gamma):
        from .charges import sigma

        return np.log1p(-sigma(gamma) * np.exp(self.ieta[gamma]))

    def x_values(self, gamma):
        from .charges import sigma

        return sigma(gamma) * np.exp(self.ieta[gamma])

    def max_abs_x(self):
        out = 0.0
        for g in self.ieta:
            out = max(out, float(np.max(np.abs(self.x_values(g)))))
        return out

    def ray_of(self, gamma):
        for i, ray in enumerate(self.rays):
            if any(g == gamma for g, _ in ray.charges):
                return i
        raise KeyError(gamma)

    def antipodal_residual(self):
        """Defect of the reality relation X_{-g}(mirror node) = conj(X_g(node))."""
        worst = 0.0
        for g in self.ieta:
            a = self.x_values(g)
            b = self.x_values(-g)[::-1]
            worst = max(worst, float(np.max(np.abs(np.conj(a) - b))))
        return worst


def ray_direction(z):
    return -1j * z / abs(z)


def build_ray_system(stab, pt, quad=None):
    """Group support charges into rays and seed the grid with X^sf values."""
    quad = quad or trapezoid_rule()
    groups = []
    for g, om in stab.support():
        zg = stab.z_of(g)
        d = ray_direction(zg)
        for grp in groups:
            if abs(d - grp[0]) < _DIR_TOL:
                prim, _ = g.primitive()
                if prim != grp[1]:
                    raise WallError("non-proportional support charges share a ray")
                grp[2].append((g, om))
                break
        else:
            groups.append([d, g.primitive()[0], [(g, om)]])
    rays = [RayData(direction=d, charges=tuple(charges)) for d, _, charges in groups]
    u = quad.nodes
    ieta_sf = {}
    for ray in rays:
        for g, _ in ray.charges:
            zg = stab.z_of(g)
            psi_g = float(g.as_array() @ pt.psi)
            ieta_sf[g] = 1j * psi_g - 2.0 * abs(zg) * np.cosh(u)
    return TwistorFunctionGrid(
        rays=rays, rule=quad, point=pt, ieta={g: v.copy() for g, v in ieta_sf.items()}, ieta_sf=ieta_sf
    )


def _pair_kernel(grid, isrc, itgt):
    """Dense K[i', i] = w_{i'} (zeta'_{i'} + zeta_i)/(zeta'_{i'} - zeta_i)."""
    e = np.exp(grid.rule.nodes)
    zsrc = grid.rays[isrc].direction * e
    ztgt = grid.rays[itgt].direction * e
    kern = (zsrc[:, None] + ztgt[None, :]) / (zsrc[:, None] - ztgt[None, :])
    return grid.rule.weights[:, None] * kern


def _kernel_ffts(grid):
    """FFT of the kernel lag profile per ordered ray pair.

    On a uniform rapidity grid the cross-ray kernel depends only on the lag
    u' - u:  K = (r e^{u'-u} + 1)/(r e^{u'-u} - 1) with r = d_src/d_tgt, so
    each sweep is a linear correlation evaluated by FFT.
    """
    n = grid.rule.count
    h = grid.rule.nodes[1] - grid.rule.nodes[0]
    lags = h * np.arange(-(n - 1), n)
    pad = 1 << int(3 * n - 2).bit_length()
    out = {}
    for isrc, rsrc in enumerate(grid.rays):
        for itgt, rtgt in enumerate(grid.rays):
            if isrc == itgt:
                continue
            r = rsrc.direction / rtgt.direction
            f = (r * np.exp(lags) + 1.0) / (r * np.exp(lags) - 1.0)
            out[(isrc, itgt)] = np.fft.fft(f[::-1], pad)
    return out, pad


def _ray_charge_aggregate(grid, stab, isrc):
    """S_b(u') = sum_{gamma' on ray} q'_b Omega' ln(1 - X_{gamma'}(u')), shape (2m, N)."""
    ray = grid.rays[isrc]
    rank = stab.rank
    out = np.zeros((rank, grid.rule.count), dtype=complex)
    for g, om in ray.charges:
        out += np.outer(g.as_array().astype(float) * om, grid.ln_one_minus_x(g))
    return out


def tba_iterate(grid, stab, relax=1.0, kernel_ffts=None):
    """One Picard sweep; returns (updated grid, sup residual of i eta)."""
    lat = SymplecticLattice(rank=stab.rank)
    eps = lat.pairing_matrix.astype(float)
    aggregates = [_ray_charge_aggregate(grid, stab, i) for i in range(len(grid.rays))]
    n = grid.rule.count
    if kernel_ffts is None:
        kernel_ffts = _kernel_ffts(grid)
    ffts, pad = kernel_ffts
    g_hats = [np.fft.fft(grid.rule.weights * agg, pad, axis=-1) for agg in aggregates]
    new_ieta = {}
    sup = 0.0
    for itgt, ray in enumerate(grid.rays):
        acc = np.zeros((stab.rank, pad), dtype=complex)
        for isrc in range(len(grid.rays)):
            if isrc == itgt:
                continue
            acc += g_hats[isrc] * ffts[(isrc, itgt)]
        # y_i = sum_{i'} g_{i'} f_{i'-i}: linear correlation, slice the middle
        w_vec = np.fft.ifft(acc, axis=-1)[:, n - 1 : 2 * n - 1]
        for g, _ in ray.charges:
            corr = (1j / (4.0 * np.pi)) * (g.as_array().astype(float) @ eps @ w_vec)
            target = grid.ieta_sf[g] + corr
            updated = (1.0 - relax) * grid.ieta[g] + relax * target
            sup = max(sup, float(np.max(np.abs(updated - grid.ieta[g]))))
            new_ieta[g] = updated
    out = replace(grid, ieta=new_ieta, iterations=grid.iterations + 1)
    out.residual_history = grid.residual_history + [sup]
    if out.max_abs_x() >= 1.0:
        raise DivergenceError(
            "instanton factor reached |X| >= 1; scale too small for contraction",
            out.residual_history,
        )
    return out, sup


def tba_solve(stab, pt, quad=None, tol=1e-10, max_iter=50, relax=1.0, initial=None):
    """Picard iteration of the functional integral equation to sup-residual tol."""
    grid = build_ray_system(stab, pt, quad)
    if initial is not None and set(initial.ieta) == set(grid.ieta) and initial.rule.count == grid.rule.count:
        grid.ieta = {g: initial.ieta[g] - initial.ieta_sf[g] + grid.ieta_sf[g] for g in grid.ieta}
    kf = _kernel_ffts(grid)
    for _ in range(max_iter):
        grid, sup = tba_iterate(grid, stab, relax, kernel_ffts=kf)
        if sup < tol:
            return grid
    raise ConvergenceError(
        f"no convergence to {tol:g} within {max_iter} iterations", grid.residual_history
    )


# ---------------------------------------------------------------------------
# Laurent data and off-ray evaluation


@dataclass(frozen=True)
class LaurentData:
    """Semi-flat data and instanton coefficients I_{gamma^a, n}, n = -n_max..n_max."""

    Z: np.ndarray
    psi: np.ndarray
    coeffs: np.ndarray  # shape (2m, 2 n_max + 1); column j holds n = j - n_max
    n_max: int
    reality_residual: float

    def I(self, a, n):
        return self.coeffs[a, n + self.n_max]

    def I_vector(self, n):
        return self.coeffs[:, n + self.n_max]

    def eta_coeff(self, a, k):
        """Laurent coefficient of eta_{gamma^a} at zeta^{-k} (k <= 1)."""
        if k > 1:
            return 0.0
        if k == 1:
            return self.Z[a]
        if k == 0:
            return self.psi[a] + 0.5j * self.I(a, 0)
        out = 1j * self.I(a, k)
        if k == -1:
            out = out - np.conj(self.Z[a])
        return out


def laurent_coeffs(grid, stab, n_max=6):
    """I_{gamma,n} = (1/2 pi i) sum <gamma,gamma'> Omega' int (dz/z) z^n ln(1-X_{gamma'})."""
    lat = SymplecticLattice(rank=stab.rank)
    eps = lat.pairing_matrix.astype(float)
    u = grid.rule.nodes
    w = grid.rule.weights
    rank = stab.rank
    coeffs = np.zeros((rank, 2 * n_max + 1), dtype=complex)
    for isrc, ray in enumerate(grid.rays):
        agg = _ray_charge_aggregate(grid, stab, isrc)  # (2m, N)
        for n in range(-n_max, n_max + 1):
            zeta_n = ray.direction**n * np.exp(n * u)
            j_n = agg @ (w * zeta_n)
            coeffs[:, n + n_max] += (eps @ j_n) / (2j * np.pi)
    resid = 0.0
    for n in range(0, n_max + 1):
        resid = max(
            resid,
            float(
                np.max(np.abs(np.conj(coeffs[:, n_max + n]) - (-1.0) ** n * coeffs[:, n_max - n]))
            ),
        )
    Z = np.array([stab.z_of(basis_charge(rank, a)) for a in range(rank)])
    return LaurentData(Z=Z, psi=grid.point.psi.copy(), coeffs=coeffs, n_max=n_max, reality_residual=resid)


def eta_sf_at(stab, pt, gamma, zeta):
    zg = stab.z_of(gamma)
    psi_g = float(gamma.as_array() @ pt.psi)
    return zg / zeta + psi_g - np.conj(zg) * zeta


def eta_at(grid, stab, gamma, zeta, min_rel_dist=1e-3):
    """eta_gamma(zeta) off the rays, via the direct kernel integral."""
    if zeta == 0:
        raise DomainError("eta has a pole at zeta = 0")
    u = grid.rule.nodes
    w = grid.rule.weights
    e = np.exp(u)
    lat = SymplecticLattice(rank=stab.rank)
    eps = lat.pairing_matrix.astype(float)
    q = gamma.as_array().astype(float)
    total = 0.0 + 0.0j
    for isrc, ray in enumerate(grid.rays):
        ratio = zeta / ray.direction
        if ratio.real > 0 and abs(ratio.imag) / abs(ratio) < min_rel_dist:
            raise RayProximityError("zeta too close to an active BPS ray")
        zsrc = ray.direction * e
        kern = (zsrc + zeta) / (zsrc - zeta)
        agg = _ray_charge_aggregate(grid, stab, isrc)
        total += (q @ eps @ (agg @ (w * kern))) / (4.0 * np.pi)
    return eta_sf_at(stab, grid.point, gamma, zeta) + total


def eta_arctic(grid, stab, gamma, zeta, n_max=None, laurent=None):
    """eta_gamma near zeta = 0: direct integral, or the Laurent truncation if n_max given."""
    if n_max is None:
        return eta_at(grid, stab, gamma, zeta)
    lau = laurent if laurent is not None else laurent_coeffs(grid, stab, n_max)
    q = gamma.as_array().astype(float)
    sf = eta_sf_at(stab, grid.point, gamma, zeta)
    corr = 0.5j * (q @ lau.I_vector(0))
    for n in range(1, n_max + 1):
        corr += 1j * (q @ lau.I_vector(-n)) * zeta**n
    return sf + corr


# ---------------------------------------------------------------------------
# the model: cached solves, frames, potentials, generators


class GmnModel:
    """Instanton-corrected hyperkahler data for one lattice + spectrum + prepotential.

    Central charges at a fiber point are Z_{gamma^a} = scale * (F_A(z), z^A).
    Converged grids are cached per coordinate tuple so that finite-difference
    sweeps reuse and warm-start neighbouring solves.
    """

    def __init__(
        self,
        prepotential,
        spectrum,
        scale=1.0,
        rule=None,
        tol=1e-11,
        max_iter=60,
        n_max=6,
        fd_step=1e-3,
    ):
        self.prep = prepotential
        self.spectrum = dict(spectrum)
        self.scale = float(scale)
        self.rule = rule or trapezoid_rule()
        self.tol = tol
        self.max_iter = max_iter
        self.n_max = n_max
        self.fd_step = fd_step
        self.rank = 2 * prepotential.m
        self.lattice = SymplecticLattice(rank=self.rank)
        self._eps_lower = self.lattice.pairing_inverse().astype(float)
        self._grids = {}
        self._laurents = {}
        self._last_grid = None

    # -- stability data ----------------------------------------------------

    def stability_at(self, pt):
        _, FA, _, _ = self.prep(pt.z)
        zvec = np.concatenate([FA, pt.z])
        return StabilityData(
            central_charge=zvec, spectrum=self.spectrum, scale=self.scale, prepotential=self.prep
        )

    # -- solves --------------------------------------------------------------

    def _key(self, pt):
        return tuple(np.round(pt.to_array(), 12))

    def solve(self, pt):
        key = self._key(pt)
        if key not in self._grids:
            stab = self.stability_at(pt)
            grid = tba_solve(
                stab, pt, self.rule, tol=self.tol, max_iter=self.max_iter, initial=self._last_grid
            )
            self._grids[key] = (grid, stab)
            self._last_grid = grid
        return self._grids[key]

    def laurent(self, pt):
        key = self._key(pt)
        if key not in self._laurents:
            grid, stab = self.solve(pt)
            self._laurents[key] = laurent_coeffs(grid, stab, self.n_max)
        return self._laurents[key]

    def _pt(self, x):
        return FiberPoint.from_array(np.asarray(x, dtype=float))

    # -- potentials ----------------------------------------------------------

    def potentials(self, pt):
        """(mu, phi_plus, phi_plusplus, mu_N) of the twisted rotational action."""
        lau = self.laurent(pt)
        E = self._eps_lower
        mu_sf = 1j * (lau.Z @ E @ np.conj(lau.Z))
        mu_n = mu_sf + lau.Z @ E @ lau.I_vector(-1)
        phi_p = 1j * (pt.psi @ E @ lau.Z) + 0.5 * (lau.Z @ E @ lau.I_vector(0))
        f, _, _ = self.prep.homogeneity_defect(pt.z)
        phi_pp = 1j * self.scale**2 * f
        return float(np.real(mu_n)), complex(phi_p), complex(phi_pp), complex(mu_n)

    def mu_consistency(self, pt, n_sample=4, spread=0.05):
        """Spread of Im mu_N over a deterministic cloud of nearby fiber points."""
        rng = np.random.default_rng(11)
        vals = [np.imag(self.potentials(pt)[3])]
        x0 = pt.to_array()
        for _ in range(n_sample):
            x = x0 + spread * (rng.random(len(x0)) - 0.5)
            vals.append(np.imag(self.potentials(self._pt(x))[3]))
        vals = np.array(vals)
        return float(np.max(np.abs(vals - vals.mean())))

    # -- frames ---------------------------------------------------------------

    def _laurent_jacobian(self, pt):
        """d I_{a,n} / d x_j by central differences with one Richardson level."""
        x = pt.to_array()

        def field(y):
            return self.laurent(self._pt(y)).coeffs

        return np.stack([geo.partial(field, x, j, self.fd_step) for j in range(len(x))], axis=-1)

    def _deta_rows(self, pt):
        """Differential rows of the eta Laurent coefficients, k = 1, 0, ..., -n_max."""
        m = self.prep.m
        _, _, FAB, _ = self.prep(pt.z)
        dz = geo.dz_covectors(m)
        dps = geo.dpsi_covectors(m)
        dZ = self.scale * np.vstack([FAB @ dz, dz])
        jac = self._laurent_jacobian(pt)  # (2m, 2n_max+1, 4m)
        rows = {}
        rows[1] = dZ
        rows[0] = dps + 0.5j * jac[:, self.n_max, :]
        for n in range(1, self.n_max + 1):
            r = 1j * jac[:, self.n_max - n, :]
            if n == 1:
                r = r - np.conj(dZ)
            rows[-n] = r
        return rows

    def frame(self, pt):
        """FrameData from omega_m = (1/2) eps_ab sum_k d eta_{a,k} ^ d eta_{b,m-k}."""
        rows = self._deta_rows(pt)
        E = self._eps_lower

        def omega(mm):
            dim = rows[1].shape[1]
            out = np.zeros((dim, dim), dtype=complex)
            for k in rows:
                k2 = mm - k
                if k2 not in rows:
                    continue
                for a in range(self.rank):
                    for b in range(self.rank):
                        if E[a, b]:
                            out += 0.5 * E[a, b] * geo.wedge(rows[k][a], rows[k2][b])
            return out

        return geo.frame_from_forms(omega(1), omega(0), omega(-1))

    def truncation_residual(self, pt):
        """Norm of omega_{-2}, which must vanish identically."""
        rows = self._deta_rows(pt)
        E = self._eps_lower
        dim = rows[1].shape[1]
        out = np.zeros((dim, dim), dtype=complex)
        for k in rows:
            k2 = -2 - k
            if k2 not in rows:
                continue
            for a in range(self.rank):
                for b in range(self.rank):
                    if E[a, b]:
                        out += 0.5 * E[a, b] * geo.wedge(rows[k][a], rows[k2][b])
        return float(np.max(np.abs(out)))

    # -- special coordinates ---------------------------------------------------

    def u_coefficients(self, pt):
        """u_A = psit_A - F_AB v^B + (i/2) It_{A,0}, v^B = psi^B + (i/2) I^B_0."""
        m = self.prep.m
        lau = self.laurent(pt)
        _, _, FAB, _ = self.prep(pt.z)
        i0 = lau.I_vector(0)
        v = pt.psi_plain + 0.5j * i0[m:]
        return pt.psi_tilde - FAB @ v + 0.5j * i0[:m], v

    def theta_plus_row(self, pt):
        u, _ = self.u_coefficients(pt)
        return self.scale * (u @ geo.dz_covectors(self.prep.m))

    # -- twisted generators -----------------------------------------------------

    def linst_psi_gradient(self, pt):
        """L^inst_{psi_{gamma^a}} = (eps I_0)_a."""
        eps = self.lattice.pairing_matrix.astype(float)
        return eps @ self.laurent(pt).I_vector(0)

    def linst_psi_hessian(self, pt):
        """H_ab = d L^inst_{psi_a} / d psi_b by FD over the fiber angles."""
        x = pt.to_array()
        m2 = self.rank

        def field(y):
            return self.linst_psi_gradient(self._pt(y))

        cols = [geo.partial(field, x, 2 * self.prep.m + b, self.fd_step) for b in range(m2)]
        return np.stack(cols, axis=-1)

    def eps_hat(self, pt):
        """eps-hat_ab = eps_ab + (1/4) H eps^{cd} H, the corrected fiber symplectic form."""
        H = self.linst_psi_hessian(pt)
        eps_up = self.lattice.pairing_matrix.astype(float)
        return self._eps_lower + 0.25 * H @ eps_up @ H

    def symplectic_gradient(self, pt, dfdpsi, eps_hat=None):
        """X_f = eps-hat^{ab} (df/dpsi_a) d/dpsi_b as a coordinate vector."""
        ehat = self.eps_hat(pt) if eps_hat is None else eps_hat
        if np.linalg.cond(ehat) > 1e12:
            raise DomainError("eps-hat failed invertibility")
        comp = np.linalg.inv(ehat).T @ np.asarray(dfdpsi, dtype=complex)
        vec = np.zeros(4 * self.prep.m, dtype=complex)
        vec[2 * self.prep.m :] = comp
        return vec

    def _psi_gradient(self, pt, which):
        """d/dpsi_a of mu (which=0) or phi_plus (which=1)."""
        x = pt.to_array()

        def field(y):
            vals = self.potentials(self._pt(y))
            return vals[which]

        return np.array(
            [geo.partial(field, x, 2 * self.prep.m + a, self.fd_step) for a in range(self.rank)]
        )

    def twisted_generators(self, pt):
        """(X_plus, X_zero, residuals) with X_+ = X_{phi_+}, X_0 = X_mu, X_++ = 0.

        residuals[n] for n = -2..2 is the sup defect of the generalized
        moment-map equation at level n, with theta_+ = scale * u_A dz^A.
        """
        ehat = self.eps_hat(pt)
        xp = self.symplectic_gradient(pt, self._psi_gradient(pt, 1), ehat)
        x0 = self.symplectic_gradient(pt, self._psi_gradient(pt, 0), ehat)
        residuals = self.moment_map_residuals(pt, xp, x0)
        return xp, x0, residuals

    def moment_map_residuals(self, pt, xp, x0):
        frame = self.frame(pt)
        xm = -np.conj(xp)
        zero = np.zeros_like(xp)
        gens = {2: zero, 1: xp, 0: x0, -1: xm, -2: zero, 3: zero, -3: zero}
        omegas = {1: frame.omega_plus, 0: frame.omega_zero, -1: frame.omega_minus}
        x = pt.to_array()

        def mu_field(y):
            return self.potentials(self._pt(y))[0]

        def phip_field(y):
            return self.potentials(self._pt(y))[1]

        d_mu = geo.grad(mu_field, x, self.fd_step)
        d_p = geo.grad(phip_field, x, self.fd_step)
        _, fA, _ = self.prep.homogeneity_defect(pt.z)
        d_pp = 1j * self.scale**2 * (fA @ geo.dz_covectors(self.prep.m))
        theta = self.theta_plus_row(pt)
        rhs = {
            2: d_pp,
            1: d_p - 1j * theta,
            0: d_mu,
            -1: -np.conj(d_p) - 1j * np.conj(theta),
            -2: np.conj(d_pp),
        }
        out = {}
        for n in range(-2, 3):
            lhs = gens[n - 1] @ omegas[1] + gens[n] @ omegas[0] + gens[n + 1] @ omegas[-1]
            out[n] = float(np.max(np.abs(lhs - rhs[n])))
        return out

    # -- identities over the twistor parameter ---------------------------------

    def x_of_zeta(self, pt, xp, x0):
        return {1: xp, 0: x0, -1: -np.conj(xp)}

    def pde_residual(self, pt, zeta, dzeta=1e-4):
        """Residual of (-i zeta d_zeta + X(zeta)) eta_{gamma^a} at off-ray zeta."""
        grid, stab = self.solve(pt)
        ehat = self.eps_hat(pt)
        xp = self.symplectic_gradient(pt, self._psi_gradient(pt, 1), ehat)
        x0 = self.symplectic_gradient(pt, self._psi_gradient(pt, 0), ehat)
        xvec = xp / zeta + x0 + zeta * (-np.conj(xp))
        x = pt.to_array()
        worst = 0.0
        for a in range(self.rank):
            g = basis_charge(self.rank, a)

            def eta_field(y):
                p = self._pt(y)
                gr, st = self.solve(p)
                return eta_at(gr, st, g, zeta)

            jac = geo.grad(eta_field, x, self.fd_step)
            e_p = eta_at(grid, stab, g, zeta * (1 + dzeta))
            e_m = eta_at(grid, stab, g, zeta * (1 - dzeta))
            e_p2 = eta_at(grid, stab, g, zeta * (1 + 0.5 * dzeta))
            e_m2 = eta_at(grid, stab, g, zeta * (1 - 0.5 * dzeta))
            d1 = (e_p - e_m) / (2 * dzeta)
            d2 = (e_p2 - e_m2) / dzeta
            zeta_deriv = (4 * d2 - d1) / 3.0  # zeta d/dzeta eta
            resid = -1j * zeta_deriv + jac @ xvec
            worst = max(worst, abs(resid))
        return worst

    def quasi_moment_map_residual(self, pt):
        """Coefficient-wise defect of iota_{X(zeta)} omega(zeta) =
        d mu(zeta) - i zeta d_zeta [d mu(zeta) I(zeta)], with
        mu(zeta) = mu - phi_++ / zeta^2 - conj(phi_++) zeta^2.

        Laurent objects are dicts n -> coefficient of zeta^{-n}; the operator
        -i zeta d_zeta multiplies the zeta^{-n} coefficient by i n.
        """
        frame = self.frame(pt)
        ehat = self.eps_hat(pt)
        xp = self.symplectic_gradient(pt, self._psi_gradient(pt, 1), ehat)
        x0 = self.symplectic_gradient(pt, self._psi_gradient(pt, 0), ehat)
        xs = {1: xp, 0: x0, -1: -np.conj(xp)}
        omegas = {1: frame.omega_plus, 0: frame.omega_zero, -1: frame.omega_minus}
        x = pt.to_array()

        def mu_field(y):
            return self.potentials(self._pt(y))[0]

        d_mu = geo.grad(mu_field, x, self.fd_step)
        _, fA, _ = self.prep.homogeneity_defect(pt.z)
        d_pp = 1j * self.scale**2 * (fA @ geo.dz_covectors(self.prep.m))
        dmu_z = {2: -d_pp, 0: d_mu, -2: -np.conj(d_pp)}
        ip, i0, im = frame.I_spherical()
        i_z = {1: ip, 0: i0, -1: im}
        zero = np.zeros_like(d_mu)
        rhs = {n: dmu_z.get(n, zero).copy() for n in range(-3, 4)}
        # (-i zeta d_zeta) multiplies the zeta^{-n} coefficient by +i n
        for k1, row in dmu_z.items():
            for k2, mat in i_z.items():
                n = k1 + k2
                rhs[n] = rhs[n] + 1j * n * (row @ mat)
        lhs = {n: zero.copy() for n in range(-3, 4)}
        for k1, xv in xs.items():
            for k2, om in omegas.items():
                lhs[k1 + k2] += xv @ om
        return max(float(np.max(np.abs(lhs[n] - rhs[n]))) for n in range(-3, 4))

    def twisted_rotation_residual(self, pt, n):
        """FD defect of L_{X_{n-1}} w_+ + L_{X_n} w_0 + L_{X_{n+1}} w_- = -i n w_n."""
        ehat = self.eps_hat(pt)

        def gen_field(which):
            def vec(y):
                p = self._pt(y)
                eh = self.eps_hat(p)
                if which == 0:
                    return self.symplectic_gradient(p, self._psi_gradient(p, 0), eh)
                g = self.symplectic_gradient(p, self._psi_gradient(p, 1), eh)
                return g if which == 1 else -np.conj(g)

            return vec

        def form_field(mm):
            def mat(y):
                fr = self.frame(self._pt(y))
                return fr.omega_m(mm)

            return mat

        x = pt.to_array()
        total = None
        for shift in (-1, 0, 1):
            idx = n + shift  # generator index X_{n + shift} pairs with omega_{-shift}
            if idx not in (-1, 0, 1):
                continue
            term = geo.lie_derivative_form(gen_field(idx), form_field(-shift), x, self.fd_step)
            total = term if total is None else total + term
        frame = self.frame(pt)
        target = -1j * n * frame.omega_m(n) if n in (-1, 0, 1) else 0.0
        return float(np.max(np.abs(total - target)))

    def sigma_forms(self, pt):
        """(sigma_+, sigma_0) = omega_m + d(d mu I_m) by finite differences."""
        frame = self.frame(pt)
        x = pt.to_array()

        def mu_field(y):
            return self.potentials(self._pt(y))[0]

        def row_field(mm):
            def row(y):
                p = self._pt(y)
                fr = self.frame(p)
                ip, i0, im = fr.I_spherical()
                sel = {1: ip, 0: i0, -1: im}[mm]
                return geo.grad(mu_field, y, self.fd_step) @ sel

            return row

        sp = frame.omega_plus + geo.d_oneform(row_field(1), x, self.fd_step)
        s0 = frame.omega_zero + geo.d_oneform(row_field(0), x, self.fd_step)
        return sp, s0

    def sigma_plus_exactness(self, pt):
        """sigma_+ must equal d(theta_+ + d mu I_+): returns the sup defect.

        Since sigma_+ = omega_+ + d(d mu I_+), this is the statement that the
        computed 1-form theta_+ = scale u_A dz^A is a symplectic potential for
        the convolution-assembled omega_+, i.e. sigma_+ is globally exact.
        """
        sp, _ = self.sigma_forms(pt)
        x = pt.to_array()

        def mu_field(y):
            return self.potentials(self._pt(y))[0]

        def row(y):
            p = self._pt(y)
            fr = self.frame(p)
            ip, _, _ = fr.I_spherical()
            return self.theta_plus_row(p) + geo.grad(mu_field, y, self.fd_step) @ ip

        return float(np.max(np.abs(sp - geo.d_oneform(row, x, self.fd_step))))


# ---------------------------------------------------------------------------
# spec-level wrappers


def instanton_frame(grid, stab, pt, model=None):
    """FrameData at pt; requires a GmnModel for the FD sweeps."""
    if model is None:
        raise DomainError("instanton_frame needs the owning GmnModel for FD re-solves")
    return model.frame(pt)


def moment_maps(grid, stab, pt, model=None, n_sample=4):
    """(mu, phi_plus, phi_plusplus, consistency_residual)."""
    if model is None:
        raise DomainError("moment_maps needs the owning GmnModel")
    mu, phi_p, phi_pp, _ = model.potentials(pt)
    return mu, phi_p, phi_pp, model.mu_consistency(pt, n_sample=n_sample)


def twisted_generators(grid, stab, pt, model=None):
    if model is None:
        raise DomainError("twisted_generators needs the owning GmnModel")
    return model.twisted_generators(pt)


def _extrapolate_to_zero(xs, ys, powers=(0, 1, 3, 5)):
    """Value at x = 0 of the fit sum_k c_k x^{p_k} through the samples.

    The default basis keeps only odd powers beyond the constant: when the
    two chamber limits agree, their difference is an odd function of the
    wall-crossing angle, so even orders carry no information and dropping
    them buys two extra orders of accuracy.
    """
    xs = np.asarray(xs, dtype=float)
    mat = np.array([[x**p for p in powers] for x in xs])
    ys = np.asarray(ys)
    flat = ys.reshape(len(xs), -1)
    coef = np.linalg.solve(mat, flat)
    out = coef[0]
    return out.reshape(ys.shape[1:]) if ys.ndim > 1 else out[0]


def wall_smoothness_check(
    model_left, model_right, pt, angles=(0.08, 0.04, 0.02, 0.01), with_frame=True
):
    """(delta_mu, delta_I0, delta_omega0): side limits on the wall from the two chambers.

    Each solution is singular exactly on the wall (its rays merge and the
    cross-ray kernels pinch), so each observable is sampled inside its own
    chamber -- z rotated by -angle for the left spectrum, +angle for the
    right -- and extrapolated onto the wall with the odd-power fit of
    _extrapolate_to_zero.  model_left must be the spectrum of the chamber
    reached by rotating z clockwise.  Quadrature is refined per angle so the
    trapezoid rule resolves the nearly-merged rays, and FD steps shrink with
    the angle so stencils stay inside the chamber.
    """
    angles = tuple(sorted(angles, reverse=True))

    def rule_for(angle):
        # nearly-merged rays sit ~angle/2 apart in rapidity-angle; keep
        # h <= 0.15 * separation so the kernel pole is fully resolved
        h = 0.15 * 0.5 * angle
        n = int(np.ceil(10.0 / h)) | 1
        n = max(801, min(n, 40001))
        return trapezoid_rule(5.0, n)

    def side_limit(model, sign):
        mus, i0s, w0s = [], [], []
        for a in angles:
            # FD stencils must not reach across the wall: shrink with the angle
            sub = GmnModel(
                model.prep,
                model.spectrum,
                scale=model.scale,
                rule=rule_for(a),
                tol=model.tol,
                max_iter=model.max_iter,
                n_max=model.n_max,
                fd_step=min(model.fd_step, 0.1 * a),
            )
            p = FiberPoint(z=pt.z * np.exp(1j * sign * a), psi=pt.psi)
            mus.append(sub.potentials(p)[0])
            i0s.append(sub.laurent(p).I_vector(0))
            w0s.append(sub.frame(p).omega_zero if with_frame else 0.0)
        xs = [sign * a for a in angles]
        return (
            _extrapolate_to_zero(xs, mus),
            _extrapolate_to_zero(xs, np.array(i0s)),
            _extrapolate_to_zero(xs, np.array(w0s)),
        )

    mu_l, i0_l, w0_l = side_limit(model_left, -1)
    mu_r, i0_r, w0_r = side_limit(model_right, +1)
    return (
        abs(mu_l - mu_r),
        float(np.max(np.abs(i0_l - i0_r))),
        float(np.max(np.abs(w0_l - w0_r))) if with_frame else 0.0,
    )


# ---------------------------------------------------------------------------
# gluing functions


def _eta_pair(model, pt, zeta):
    """(eta^A(zeta), etat_A(zeta)) tropical values, m = dim_H."""
    grid, stab = model.solve(pt)
    m = model.prep.m
    etat = np.array([eta_at(grid, stab, basis_charge(model.rank, a), zeta) for a in range(m)])
    eta = np.array([eta_at(grid, stab, basis_charge(model.rank, m + a), zeta) for a in range(m)])
    return eta, etat


def arctic_potential(model, pt, zeta):
    """phi_{V_N}(zeta) = i f(eta_N)/zeta^2 + i etat_{A,N} eta^A_N / zeta.

    eta^A_N = zeta eta^A, etat_{A,N} = etat_A - F~_A(eta_N)/zeta, where F~ is
    the prepotential rescaled to the central-charge normalization.
    """
    eta, etat = _eta_pair(model, pt, zeta)
    eta_n = zeta * eta
    R = model.scale
    _, FA, _, _ = model.prep(eta_n / R)
    f, _, _ = model.prep.homogeneity_defect(eta_n / R)
    etat_n = etat - R * FA / zeta
    return 1j * R**2 * f / zeta**2 + 1j * (etat_n @ eta_n) / zeta


def gluing_north(model, pt, zeta):
    """phi_{V_T V_N}(zeta) = phi_{V_N}(zeta) + i F~(eta_N)/zeta^2."""
    eta, _ = _eta_pair(model, pt, zeta)
    eta_n = zeta * eta
    R = model.scale
    F, _, _, _ = model.prep(eta_n / R)
    return arctic_potential(model, pt, zeta) + 1j * R**2 * F / zeta**2


def _side_extrapolate(fn, deltas):
    """Lagrange-extrapolate the complex values fn(delta) to delta = 0."""
    d = np.asarray(deltas, dtype=float)
    v = np.array([fn(x) for x in d])
    out = 0.0
    for i in range(len(d)):
        li = 1.0
        for j in range(len(d)):
            if j != i:
                li *= (0.0 - d[j]) / (d[i] - d[j])
        out = out + li * v[i]
    return out


def ray_gluing(model, pt, ray_index, zeta_abs=1.0, deltas=(0.02, 0.01, 0.005, 0.0025)):
    """phi across a BPS ray: i sum Omega L_sigma(X^-) + (i/2)(etat+ eta+ - etat- eta-).

    Side limits at zeta (1 -+ i delta) are extrapolated to delta -> 0; the
    clockwise side is the minus one, matching the Ooguri-Vafa orientation.
    """
    from .charges import sigma as sigma_of
    from .special import rogers_L

    grid, stab = model.solve(pt)
    ray = grid.rays[ray_index]
    zeta0 = ray.direction * zeta_abs

    def value(delta):
        z_ccw = zeta0 * (1 + 1j * delta)
        z_cw = zeta0 * (1 - 1j * delta)
        total = 0.0 + 0.0j
        for g, om in ray.charges:
            e_minus = eta_at(grid, stab, g, z_cw, min_rel_dist=0.0)
            x_minus = sigma_of(g) * np.exp(1j * e_minus)
            total += om * rogers_L(sigma_of(g), x_minus)
        eta_p, etat_p = _eta_pair(model, pt, z_ccw)
        eta_m, etat_m = _eta_pair(model, pt, z_cw)
        return 1j * total + 0.5j * ((etat_p @ eta_p) - (etat_m @ eta_m))

    return _side_extrapolate(value, deltas)


def rogers_jump_term(model, pt, ray_index, zeta_abs=1.0, deltas=(0.02, 0.01, 0.005, 0.0025)):
    """The dilogarithm part i sum Omega L_sigma(X^-) of the ray gluing, alone."""
    from .charges import sigma as sigma_of
    from .special import rogers_L

    grid, stab = model.solve(pt)
    ray = grid.rays[ray_index]
    zeta0 = ray.direction * zeta_abs

    def value(delta):
        z_cw = zeta0 * (1 - 1j * delta)
        total = 0.0 + 0.0j
        for g, om in ray.charges:
            e_minus = eta_at(grid, stab, g, z_cw, min_rel_dist=0.0)
            total += om * rogers_L(sigma_of(g), sigma_of(g) * np.exp(1j * e_minus))
        return 1j * total

    return _side_extrapolate(value, deltas)


def triple_overlap_residual(model, pt, ray_index, zeta_abs=1.0, deltas=(0.02, 0.01, 0.005, 0.0025)):
    """Consistency of the three gluing scalars on a (T+, T-, V_N) overlap:

    phi_{T+ N} - phi_{T- N} = (i/zeta) eta_N (etat+_N - etat-_N) as delta -> 0;
    the f and F terms cancel since eta is continuous across the ray.
    """
    grid, stab = model.solve(pt)
    ray = grid.rays[ray_index]
    zeta0 = ray.direction * zeta_abs

    def value(delta):
        z_ccw = zeta0 * (1 + 1j * delta)
        z_cw = zeta0 * (1 - 1j * delta)
        gp = gluing_north(model, pt, z_ccw)
        gm = gluing_north(model, pt, z_cw)
        eta_p, etat_p = _eta_pair(model, pt, z_ccw)
        eta_m, etat_m = _eta_pair(model, pt, z_cw)
        R = model.scale
        _, FAp, _, _ = model.prep(z_ccw * eta_p / R)
        _, FAm, _, _ = model.prep(z_cw * eta_m / R)
        etat_n_p = etat_p - R * FAp / z_ccw
        etat_n_m = etat_m - R * FAm / z_cw
        eta_n = 0.5 * (z_ccw * eta_p + z_cw * eta_m)
        return (gp - gm) - 1j * (eta_n @ (etat_n_p - etat_n_m)) / zeta0

    return abs(_side_extrapolate(value, deltas))


def gluing_function(grid, stab, zeta, sector, model=None, pt=None, **kw):
    """Scalar gluing data by sector name: 'arctic', 'north', or 'ray:<k>'."""
    if model is None or pt is None:
        raise DomainError("gluing_function needs the owning GmnModel and fiber point")
    if sector == "arctic":
        return arctic_potential(model, pt, zeta)
    if sector == "north":
        return gluing_north(model, pt, zeta)
    if isinstance(sector, str) and sector.startswith("ray:"):
        return ray_gluing(model, pt, int(sector.split(":")[1]), abs(zeta), **kw)
    raise DomainError(f"unknown sector {sector!r}")


def solver_report(grid):
    """JSON-ready summary of a converged grid."""
    return {
        "iterations": grid.iterations,
        "residual_history": [float(r) for r in grid.residual_history],
        "per_ray_node_counts": {
            str(i): grid.rule.count for i in range(len(grid.rays))
        },
        "max_abs_x": grid.max_abs_x(),
        "antipodal_residual": grid.antipodal_residual(),
    }
