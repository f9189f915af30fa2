"""Pointwise linear algebra of hyperkahler frames and numerical exterior calculus.

Real coordinate frame on the 4m-dimensional fibered chart, in this order:

    (Re z^1..m, Im z^1..m, psit_1..m, psi^1..m)

2-forms are antisymmetric complex 4m x 4m matrices W with W[i, j] =
omega(e_i, e_j); endomorphisms act on column vectors from the left and on
1-form row vectors from the right, matching the convention that complex
structures act on vector fields from the left and on 1-forms from the right.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, SingularFormError, StencilError

_COND_LIMIT = 1e12


@dataclass(frozen=True)
class FiberPoint:
    """Point (z^A, psi_{gamma^a}) of the torus fibration; psi = (psit_A, psi^A)."""

    z: np.ndarray
    psi: np.ndarray
    chart: str = "main"

    def __post_init__(self):
        z = np.atleast_1d(np.asarray(self.z, dtype=complex))
        psi = np.atleast_1d(np.asarray(self.psi, dtype=float))
        if len(psi) != 2 * len(z):
            raise DomainError("psi must have twice the length of z")
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "psi", psi)

    @property
    def m(self):
        return len(self.z)

    @property
    def psi_tilde(self):
        return self.psi[: self.m]

    @property
    def psi_plain(self):
        return self.psi[self.m :]

    def to_array(self):
        return np.concatenate([self.z.real, self.z.imag, self.psi])

    @classmethod
    def from_array(cls, x, chart="main"):
        m = len(x) // 4
        return cls(z=x[:m] + 1j * x[m : 2 * m], psi=x[2 * m :], chart=chart)


def coordinate_dim(m):
    return 4 * m


def dz_covectors(m):
    """Rows dz^A (and conjugates) in the real coordinate frame."""
    dz = np.zeros((m, 4 * m), dtype=complex)
    for a in range(m):
        dz[a, a] = 1.0
        dz[a, m + a] = 1.0j
    return dz


def dpsi_covectors(m):
    """Rows (d psit_A, d psi^A)."""
    dps = np.zeros((2 * m, 4 * m), dtype=complex)
    for a in range(2 * m):
        dps[a, 2 * m + a] = 1.0
    return dps


def wedge(a, b):
    """Matrix of the 2-form a ^ b from two covector rows."""
    return np.outer(a, b) - np.outer(b, a)


def sym2(a, b):
    """Symmetrized tensor product a b as a bilinear form matrix."""
    return 0.5 * (np.outer(a, b) + np.outer(b, a))


def _inv_checked(w, what):
    if np.linalg.cond(w) > _COND_LIMIT:
        raise SingularFormError(f"{what} fails invertibility (cond > {_COND_LIMIT:.0e})")
    return np.linalg.inv(w)


@dataclass(frozen=True)
class FrameData:
    """Spherical-frame symplectic triplet with derived complex structures and metric.

    Reality convention: conj(omega_m) = (-1)^m omega_{-m}, i.e.
    omega_minus = -conj(omega_plus) and omega_zero is real.
    """

    omega_plus: np.ndarray
    omega_zero: np.ndarray
    omega_minus: np.ndarray
    I1: np.ndarray
    I2: np.ndarray
    I3: np.ndarray
    metric: np.ndarray
    quaternion_residual: float = 0.0

    @property
    def dim(self):
        return self.omega_plus.shape[0]

    def omega_real(self):
        """Euclidean components (omega_1, omega_2, omega_3)."""
        w1 = self.omega_plus - self.omega_minus
        w2 = -1j * (self.omega_plus + self.omega_minus)
        return w1, w2, self.omega_zero

    def omega_m(self, m):
        return {1: self.omega_plus, 0: self.omega_zero, -1: self.omega_minus}[m]

    def I_spherical(self):
        """(I_plus, I_zero, I_minus) = (1/2 (I1+iI2), I3, -1/2 (I1-iI2))."""
        return 0.5 * (self.I1 + 1j * self.I2), self.I3, -0.5 * (self.I1 - 1j * self.I2)

    def I_of_unit(self, u):
        u = np.asarray(u, dtype=float)
        return u[0] * self.I1 + u[1] * self.I2 + u[2] * self.I3

    def reality_residual(self):
        r1 = np.max(np.abs(np.conj(self.omega_plus) + self.omega_minus))
        r0 = np.max(np.abs(np.conj(self.omega_zero) - self.omega_zero))
        return max(r1, r0)


def quaternion_residual(I1, I2, I3):
    """Sup-norm defect of I_i I_j = -delta_ij + eps_ijk I_k."""
    dim = I1.shape[0]
    eye = np.eye(dim)
    mats = (I1, I2, I3)
    worst = 0.0
    for i in range(3):
        for j in range(3):
            prod = mats[i] @ mats[j]
            expect = -eye if i == j else 0.0
            for k in range(3):
                eps = _LEVI[i][j][k]
                if eps:
                    expect = expect + eps * mats[k]
            worst = max(worst, float(np.max(np.abs(prod - expect))))
    return worst


_LEVI = np.zeros((3, 3, 3))
_LEVI[0, 1, 2] = _LEVI[1, 2, 0] = _LEVI[2, 0, 1] = 1.0
_LEVI[0, 2, 1] = _LEVI[2, 1, 0] = _LEVI[1, 0, 2] = -1.0


def complex_structures_from_forms(omega_triplet):
    """I1 = w3^-1 w2, I2 = w1^-1 w3, I3 = w2^-1 w1, plus the quaternion defect.

    omega_triplet holds the Euclidean components (w1, w2, w3).
    """
    w1, w2, w3 = (np.asarray(w, dtype=complex) for w in omega_triplet)
    I1 = _inv_checked(w3, "omega_3") @ w2
    I2 = _inv_checked(w1, "omega_1") @ w3
    I3 = _inv_checked(w2, "omega_2") @ w1
    return I1, I2, I3, quaternion_residual(I1, I2, I3)


def frame_from_forms(omega_plus, omega_zero, omega_minus=None):
    """Assemble FrameData from the spherical form triplet."""
    if omega_minus is None:
        omega_minus = -np.conj(omega_plus)
    w1 = omega_plus - omega_minus
    w2 = -1j * (omega_plus + omega_minus)
    w3 = omega_zero
    I1, I2, I3, resid = complex_structures_from_forms((w1, w2, w3))
    metric = -w3 @ I3
    return FrameData(
        omega_plus=omega_plus,
        omega_zero=omega_zero,
        omega_minus=omega_minus,
        I1=I1,
        I2=I2,
        I3=I3,
        metric=metric,
        quaternion_residual=resid,
    )


def flat_frame():
    """Flat quaternionic model on R^4 in coordinates (x1, x2, x3, x4).

    w1 = dx1^dx2 + dx3^dx4, w2 = dx1^dx3 + dx4^dx2, w3 = dx1^dx4 + dx2^dx3.
    """
    e = np.eye(4, dtype=complex)
    w1 = wedge(e[0], e[1]) + wedge(e[2], e[3])
    w2 = wedge(e[0], e[2]) + wedge(e[3], e[1])
    w3 = wedge(e[0], e[3]) + wedge(e[1], e[2])
    wp = 0.5 * (w1 + 1j * w2)
    wm = -0.5 * (w1 - 1j * w2)
    return frame_from_forms(wp, w3, wm)


# ---------------------------------------------------------------------------
# projectors


def projector_01(frame, u=None):
    """P^{0,1} = (1 + i I_u)/2 for the complex structure labeled by unit u (default I0)."""
    iu = frame.I3 if u is None else frame.I_of_unit(u)
    return 0.5 * (np.eye(frame.dim) + 1j * iu)


def projector_10(frame, u=None):
    iu = frame.I3 if u is None else frame.I_of_unit(u)
    return 0.5 * (np.eye(frame.dim) - 1j * iu)


def projector_north(frame, zeta):
    """P_N(zeta) = P^{0,1}_{I0} + i zeta I_minus, holomorphic on the north chart."""
    _, _, im = frame.I_spherical()
    return projector_01(frame) + 1j * zeta * im


def projector_south(frame, zeta):
    """P_S(1/zeta) = P^{1,0}_{I0} - (i/zeta) I_plus; requires zeta != 0."""
    if zeta == 0:
        raise DomainError("P_S is evaluated at zeta_tilde = 1/zeta; zeta = 0 is excluded")
    ip, _, _ = frame.I_spherical()
    return projector_10(frame) - 1j / zeta * ip


def nilpotent_i(frame, zeta):
    """I(zeta) = I_plus / zeta + I_0 + zeta I_minus on C^x."""
    if zeta == 0:
        raise DomainError("I(zeta) is undefined at zeta = 0")
    ip, i0, im = frame.I_spherical()
    return ip / zeta + i0 + zeta * im


def holomorphic_projectors(frame, zeta):
    """(P_N, P_S, I(zeta)) at a common zeta in C^x."""
    if zeta == 0:
        raise DomainError("zeta = 0: P_S and I(zeta) are singular; use projector_north")
    return projector_north(frame, zeta), projector_south(frame, zeta), nilpotent_i(frame, zeta)


def unit_from_zeta(zeta):
    """Inverse stereographic map: zeta on the north chart -> u on S^2."""
    n = 1.0 + abs(zeta) ** 2
    x3 = (1.0 - abs(zeta) ** 2) / n
    w = -2.0 * zeta / n  # x1 + i x2
    return np.array([w.real, w.imag, x3])


# ---------------------------------------------------------------------------
# hyper (1,1) criterion


def hyper11_residual(sigma_form, frame):
    """max_i sup defect of sigma(X, I_i Y) = sigma(Y, I_i X) over coordinate pairs.

    Vanishes (to tolerance) iff sigma is of type (1,1) for every hyperkahler
    complex structure at the point.
    """
    s = np.asarray(sigma_form, dtype=complex)
    worst = 0.0
    for iD in (frame.I1, frame.I2, frame.I3):
        mat = s @ iD  # mat[x, y] = sigma(e_x, I e_y)
        worst = max(worst, float(np.max(np.abs(mat - mat.T))))
    return worst


# ---------------------------------------------------------------------------
# finite differences

FD_STEP = 1e-4


def _steps(x, h):
    return h * np.maximum(1.0, np.abs(x))


def partial(field, x, i, h=FD_STEP, richardson=True):
    """Central-difference partial with one Richardson level (O(h^4))."""

    def diff(step):
        xp = x.copy()
        xm = x.copy()
        xp[i] += step
        xm[i] -= step
        try:
            return (np.asarray(field(xp), dtype=complex) - np.asarray(field(xm), dtype=complex)) / (
                2.0 * step
            )
        except DomainError as exc:
            raise StencilError(f"stencil left the field domain: {exc}") from exc

    step = _steps(x, h)[i]
    if not richardson:
        return diff(step)
    d1 = diff(step)
    d2 = diff(0.5 * step)
    return (4.0 * d2 - d1) / 3.0


def grad(field, x, h=FD_STEP):
    """Row covector of partials of a scalar (or array-valued) field."""
    parts = [partial(field, x, i, h) for i in range(len(x))]
    return np.stack(parts, axis=-1)


def d_oneform(theta_field, x, h=FD_STEP):
    """Exterior derivative matrix (d theta)_{ij} = d_i theta_j - d_j theta_i."""
    jac = np.stack([partial(theta_field, x, i, h) for i in range(len(x))], axis=0)
    return jac - jac.T


def d_twoform(omega_field, x, h=FD_STEP):
    """Coefficients (d w)_{ijk} = d_i w_jk + d_j w_ki + d_k w_ij."""
    n = len(x)
    jac = np.stack([partial(omega_field, x, i, h) for i in range(n)], axis=0)
    dw = jac + np.transpose(jac, (1, 2, 0)) + np.transpose(jac, (2, 0, 1))
    return dw


def closure_residual(omega_field, x, h=FD_STEP):
    return float(np.max(np.abs(d_twoform(omega_field, x, h))))


def fd_derivative(field, point, order=1, kind="scalar", h=FD_STEP):
    """Dispatcher for the numerical exterior calculus.

    kind="scalar":  gradient row (order 1) or Hessian (order 2)
    kind="oneform": exterior derivative matrix of a covector field
    kind="twoform": the 3-form coefficients of d sigma
    `field` maps a coordinate array of length 4m to the matching value.
    """
    x = point.to_array() if isinstance(point, FiberPoint) else np.asarray(point, dtype=float)
    if kind == "scalar":
        if order == 1:
            return grad(field, x, h)
        if order == 2:
            return np.stack([partial(lambda y: grad(field, y, h), x, i, h) for i in range(len(x))])
        raise DomainError("order must be 1 or 2")
    if kind == "oneform":
        return d_oneform(field, x, h)
    if kind == "twoform":
        return d_twoform(field, x, h)
    raise DomainError(f"unknown field kind {kind!r}")


def dbar_split(df_row, frame, u=None):
    """Split a differential row into (del, delbar) parts for the structure I_u."""
    return df_row @ projector_10(frame, u), df_row @ projector_01(frame, u)


def lie_derivative_form(vector_field, omega_field, x, h=FD_STEP):
    """Cartan formula L_X w = d(i_X w) + i_X (d w) for a 2-form field."""

    def contraction(y):
        return np.asarray(vector_field(y), dtype=complex) @ np.asarray(omega_field(y), dtype=complex)

    term1 = d_oneform(contraction, x, h)
    dw = d_twoform(omega_field, x, h)
    xv = np.asarray(vector_field(x), dtype=complex)
    term2 = np.einsum("i,ijk->jk", xv, dw)
    return term1 + term2


# ---------------------------------------------------------------------------
# hyperpotential chains


def chain_recursion_residual(phi_evaluators, frame, point, h=FD_STEP):
    """Defect of d phi_{n-1} I_+ + d phi_n I_0 + d phi_{n+1} I_- = 0.

    phi_evaluators is the ordered chain (left to right); the residual is the
    max over the interior entries.  Fields take coordinate arrays.
    """
    if len(phi_evaluators) < 3:
        raise DomainError("need at least three consecutive chain members")
    x = point.to_array() if isinstance(point, FiberPoint) else np.asarray(point, dtype=float)
    ip, i0, im = frame.I_spherical()
    grads = [grad(f, x, h) for f in phi_evaluators]
    worst = 0.0
    for n in range(1, len(grads) - 1):
        row = grads[n - 1] @ ip + grads[n] @ i0 + grads[n + 1] @ im
        worst = max(worst, float(np.max(np.abs(row))))
    return worst


def _ddbar(phi, frame_at, x, u, h):
    """i-less del delbar of phi w.r.t. I_u: d(d phi . P^{0,1}_{I_u}) as a matrix."""

    def theta(y):
        fr = frame_at(y)
        return grad(phi, y, h) @ projector_01(fr, u)

    return d_oneform(theta, x, h)


def spherical_ddbar_residual(phi_triplet, frame_at, point, u, h=FD_STEP):
    """Defect of del_u delbar_u phi_n = del delbar (x_- phi_{n+1} + x_0 phi_n + x_+ phi_{n-1}).

    phi_triplet = (phi_{n-1}, phi_n, phi_{n+1}); frame_at maps coordinates to
    FrameData (the complex structures vary over M); u is a unit 3-vector.
    """
    x = point.to_array() if isinstance(point, FiberPoint) else np.asarray(point, dtype=float)
    u = np.asarray(u, dtype=float)
    if abs(np.linalg.norm(u) - 1.0) > 1e-9:
        raise DomainError("u must be a unit vector")
    phi_m, phi_0, phi_p = phi_triplet
    xp = 0.5 * (u[0] + 1j * u[1])
    x0 = u[2]
    xm = -0.5 * (u[0] - 1j * u[1])

    def combo(y):
        return xm * phi_p(y) + x0 * phi_0(y) + xp * phi_m(y)

    lhs = _ddbar(phi_0, frame_at, x, u, h)
    rhs = _ddbar(combo, frame_at, x, None, h)
    return float(np.linalg.norm(lhs - rhs))
