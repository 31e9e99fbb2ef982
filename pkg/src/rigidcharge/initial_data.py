"""Initial states and Lienard-Wiechert fields of prescribed worldlines.

Coulomb solitons and plane waves are built directly in Fourier space.
Lienard-Wiechert fields are evaluated pointwise off the grid; they are used
to probe how fast field norms grow with the integration radius.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, SearchError
from .sources import FOUR_PI
from .spectral import FieldPair


def coulomb_soliton(particle, shape, grid):
    """Electrostatic field of a rigid charge at ``particle.q`` on the torus.

    Solves ``div E = 4 pi (rho(. - q) - e/L^3)`` with ``curl E = 0`` by
    ``E_hat = -4 pi i k rho_hat / |k|^2`` and ``E_hat(0) = 0``; ``B = 0``.
    The uniform background only removes the ``k = 0`` source mode.
    """
    rho_q = shape.spectrum(grid) * grid.shift_phase(particle.q)
    E_hat = -1j * FOUR_PI * grid.kvec * (rho_q * grid.inv_ksq)
    return FieldPair.from_spectra(grid, E_hat, np.zeros_like(E_hat))


def plane_wave(grid, mode, polarization, amplitude, phase=0.0):
    """Transverse plane wave ``E = A e cos(k.x + phase)``, ``B = k_hat x E``.

    ``mode`` is the integer index vector ``m`` with ``k = 2 pi m / L``.  A
    polarization with a component along ``k`` is projected out (with a
    warning) and renormalized.
    """
    m = np.asarray(mode, dtype=float).reshape(3)
    if not np.any(m):
        raise DomainError("plane wave needs a nonzero mode index")
    if np.any(np.abs(m) >= grid.n // 2):
        raise DomainError(f"mode {mode} is not resolved on an n={grid.n} grid")
    k = 2 * np.pi / grid.L * m
    khat = k / np.linalg.norm(k)
    pol = np.asarray(polarization, dtype=float).reshape(3)
    along = pol @ khat
    if abs(along) > 1e-12 * np.linalg.norm(pol):
        warnings.warn("polarization not transverse; projecting onto the plane normal to k", stacklevel=2)
        pol = pol - along * khat
    norm = np.linalg.norm(pol)
    if norm == 0:
        raise DomainError("polarization is parallel to k")
    pol = pol / norm
    x = grid.coords
    arg = np.tensordot(k, x, axes=1) + phase
    E = amplitude * pol[:, None, None, None] * np.cos(arg)
    B = amplitude * np.cross(khat, pol)[:, None, None, None] * np.cos(arg)
    return FieldPair(grid, E, B)


def gradient_bump(grid, amplitude, width, center=(0.0, 0.0, 0.0)):
    """``E = B = amplitude * grad exp(-|x - c|^2 / (2 width^2))``, band-limited.

    Adding this to a consistent state violates both constraints by a fixed
    amount; the exact dynamics carries the violation along unchanged.
    """
    if not width > 0:
        raise DomainError(f"bump width must be positive, got {width}")
    r2 = np.sum((grid.coords - np.asarray(center, dtype=float)[:, None, None, None]) ** 2, axis=0)
    g_hat = grid.fft(np.exp(-0.5 * r2 / width**2)) * grid.resolved
    G = amplitude * 1j * grid.kvec * g_hat
    return FieldPair.from_spectra(grid, G, G.copy())


# ---------------------------------------------------------------------------
# worldlines and Lienard-Wiechert fields

RETARDED = 1
ADVANCED = -1


@dataclass(frozen=True)
class Worldline:
    """Time-like worldline ``z(t)`` parametrized by coordinate time.

    ``kind`` is ``"static"``, ``"uniform_velocity"`` or ``"circular_orbit"``
    (radius ``r0``, angular frequency ``omega``, in the xy-plane about
    ``center``).
    """

    kind: str
    center: tuple = (0.0, 0.0, 0.0)
    velocity: tuple = (0.0, 0.0, 0.0)
    r0: float = 0.0
    omega: float = 0.0
    charge: float = 1.0

    def __post_init__(self):
        if self.kind not in ("static", "uniform_velocity", "circular_orbit"):
            raise DomainError(f"unknown worldline kind {self.kind!r}")
        if self.max_speed >= 1.0:
            raise DomainError(f"worldline is not time-like (speed {self.max_speed})")

    @property
    def max_speed(self):
        if self.kind == "uniform_velocity":
            return float(np.linalg.norm(self.velocity))
        if self.kind == "circular_orbit":
            return abs(self.r0 * self.omega)
        return 0.0

    @property
    def extent(self):
        """Radius of a ball about the origin containing the spatial path at t = 0."""
        return float(np.linalg.norm(self.center) + abs(self.r0))

    def position(self, tau):
        tau = np.asarray(tau, dtype=float)
        c = np.asarray(self.center, dtype=float)
        if self.kind == "static":
            return np.broadcast_to(c, tau.shape + (3,)).copy()
        if self.kind == "uniform_velocity":
            return c + tau[..., None] * np.asarray(self.velocity, dtype=float)
        ph = self.omega * tau
        return c + self.r0 * np.stack([np.cos(ph), np.sin(ph), np.zeros_like(ph)], axis=-1)

    def velocity_at(self, tau):
        tau = np.asarray(tau, dtype=float)
        if self.kind == "static":
            return np.zeros(tau.shape + (3,))
        if self.kind == "uniform_velocity":
            return np.broadcast_to(np.asarray(self.velocity, dtype=float), tau.shape + (3,)).copy()
        ph = self.omega * tau
        s = self.r0 * self.omega
        return s * np.stack([-np.sin(ph), np.cos(ph), np.zeros_like(ph)], axis=-1)

    def acceleration(self, tau):
        tau = np.asarray(tau, dtype=float)
        if self.kind != "circular_orbit":
            return np.zeros(tau.shape + (3,))
        ph = self.omega * tau
        s = -self.r0 * self.omega**2
        return s * np.stack([np.cos(ph), np.sin(ph), np.zeros_like(ph)], axis=-1)


def light_cone_residual(worldline, t, x, tau, sign=RETARDED):
    """``tau - t + sign |x - z(tau)|`` (zero on the light cone)."""
    dist = np.linalg.norm(np.asarray(x, dtype=float) - worldline.position(tau), axis=-1)
    return tau - np.asarray(t, dtype=float) + sign * dist


def retarded_time(worldline, t, x, sign=RETARDED, bisection_steps=12, max_newton=60):
    """Solve ``tau = t - sign |x - z(tau)|`` for points ``x`` of shape ``(..., 3)``.

    ``sign = +1`` gives the retarded time, ``-1`` the advanced time.  Works
    with the lag ``u = sign (t - tau) >= 0``: ``g(u) = u - |x - z(t - sign u)|``
    increases strictly (speed < 1), ``g(0) <= 0`` and ``g(u_hi) >= 0`` for
    ``u_hi = |x - z(t)| / (1 - v_max)``.  A few bisection steps shrink the
    bracket, then safeguarded Newton polishes the root.
    """
    x = np.asarray(x, dtype=float)
    t = np.broadcast_to(np.asarray(t, dtype=float), x.shape[:-1])
    vmax = worldline.max_speed

    def g(u):
        tau = t - sign * u
        d = x - worldline.position(tau)
        dist = np.linalg.norm(d, axis=-1)
        return u - dist, d, dist, tau

    d0 = np.linalg.norm(x - worldline.position(t), axis=-1)
    lo = np.zeros_like(d0)
    hi = d0 / (1.0 - vmax) + 1e-300
    g_hi = g(hi)[0]
    grow = 0
    while np.any(g_hi < 0):
        if grow > 60:
            raise SearchError("no bracket for the light-cone equation")
        hi = np.where(g_hi < 0, 2.0 * hi + 1.0, hi)
        g_hi = g(hi)[0]
        grow += 1
    for _ in range(bisection_steps):
        mid = 0.5 * (lo + hi)
        gm = g(mid)[0]
        neg = gm < 0
        lo = np.where(neg, mid, lo)
        hi = np.where(neg, hi, mid)
    u = 0.5 * (lo + hi)
    for _ in range(max_newton):
        gu, d, dist, tau = g(u)
        neg = gu < 0
        lo = np.where(neg, u, lo)
        hi = np.where(neg, hi, u)
        with np.errstate(invalid="ignore", divide="ignore"):
            nvec = d / np.where(dist > 0, dist, 1.0)[..., None]
        deriv = 1.0 - sign * np.sum(nvec * worldline.velocity_at(tau), axis=-1)
        step = gu / deriv
        u_new = u - step
        outside = (u_new <= lo) | (u_new >= hi)
        u_new = np.where(outside, 0.5 * (lo + hi), u_new)
        done = np.abs(u_new - u) <= 4 * np.finfo(float).eps * np.maximum(np.abs(u), 1.0)
        u = u_new
        if np.all(done):
            break
    return t - sign * u


def lw_field(worldline, t, x, sign=RETARDED, eps_reg=1e-6):
    """Lienard-Wiechert ``(E, B, mask)`` at points ``x`` of shape ``(..., 3)``.

    Retarded:  ``E = e[(n - b)(1 - b^2)/(k^3 R^2) + n x ((n - b) x a)/(k^3 R)]``
    with ``k = 1 - n.b`` and ``B = n x E``.  The advanced field is the
    retarded field of the time-reversed worldline, which flips ``b`` and
    the sign of ``B``.  Points closer than ``eps_reg`` to the source point
    are masked: ``mask`` is True there and the fields are NaN.
    """
    x = np.asarray(x, dtype=float)
    tau = retarded_time(worldline, t, x, sign)
    d = x - worldline.position(tau)
    R = np.linalg.norm(d, axis=-1)
    mask = R <= eps_reg
    Rs = np.where(mask, 1.0, R)
    n = d / Rs[..., None]
    beta = sign * worldline.velocity_at(tau)
    acc = worldline.acceleration(tau)
    kappa = 1.0 - np.sum(n * beta, axis=-1)
    b2 = np.sum(beta * beta, axis=-1)
    nb = n - beta
    k3 = kappa**3
    coef = ((1.0 - b2) / (k3 * Rs * Rs))[..., None]
    E_acc = np.cross(n, np.cross(nb, acc)) / (k3 * Rs)[..., None]
    E = worldline.charge * (nb * coef + E_acc)
    # n x E with n x n = 0 dropped, so a static charge has B exactly zero
    B = sign * worldline.charge * (np.cross(n, E_acc) - coef * np.cross(n, beta))
    E[mask] = np.nan
    B[mask] = np.nan
    return E, B, mask


def lw_on_grid(worldline, t, grid, sign=RETARDED):
    """Sample LW fields on grid points, masking within ``2 dx`` of the source."""
    pts = np.moveaxis(grid.coords, 0, -1)
    E, B, mask = lw_field(worldline, t, pts, sign, eps_reg=2 * grid.dx)
    return np.moveaxis(E, -1, 0), np.moveaxis(B, -1, 0), mask


def boosted_coulomb(worldline, t, x):
    """Field of a uniformly moving charge from its present position.

    ``E = e (1 - v^2) r / (r^2 - |v x r|^2)^(3/2)``, ``B = v x E`` with
    ``r = x - z(t)``.
    """
    v = np.asarray(worldline.velocity, dtype=float)
    r = np.asarray(x, dtype=float) - worldline.position(np.asarray(t, dtype=float))
    r2 = np.sum(r * r, axis=-1)
    vxr = np.cross(v, r)
    denom = (r2 - np.sum(vxr * vxr, axis=-1)) ** 1.5
    E = worldline.charge * (1.0 - v @ v) * r / denom[..., None]
    return E, np.cross(v, E)


# ---------------------------------------------------------------------------
# norm growth with radius


@dataclass
class ScalingProbeResult:
    radii: np.ndarray
    l2_norms: np.ndarray
    l2w_norms: np.ndarray
    l2_exponent: float
    l2w_exponent: float
    E_l2_sq: np.ndarray
    B_l2_sq: np.ndarray
    E_l2w_sq: np.ndarray
    B_l2w_sq: np.ndarray
    r_inner: float


def _sphere_rule(n_theta, n_phi):
    """Product rule on the unit sphere: Gauss-Legendre in cos(theta), uniform in phi."""
    mu, wmu = np.polynomial.legendre.leggauss(n_theta)
    phi = 2 * np.pi * np.arange(n_phi) / n_phi
    st = np.sqrt(1 - mu * mu)
    dirs = np.stack(
        [st[:, None] * np.cos(phi)[None], st[:, None] * np.sin(phi)[None],
         np.broadcast_to(mu[:, None], (n_theta, n_phi))],
        axis=-1,
    ).reshape(-1, 3)
    weights = np.repeat(wmu, n_phi) * (2 * np.pi / n_phi)
    return dirs, weights


def fit_exponent(radii, values):
    """Least-squares slope of ``log(values)`` against ``log(radii)``."""
    lr, lv = np.log(radii), np.log(values)
    return float(np.polyfit(lr, lv, 1)[0])


def norm_scaling_probe(field_fn, radii, w, r_inner=1.0, n_radial=8, max_segment=4.0,
                       n_theta=32, n_phi=64):
    """Integrate ``|F|^2`` and ``w |F|^2`` over shells ``r_inner < |x| < R``.

    ``field_fn(points)`` returns ``(E, B)`` for points of shape ``(M, 3)``.
    The inner ball is excluded because point-charge fields are not locally
    square integrable at the worldline.  Radial integration uses
    ``n_radial``-point Gauss-Legendre on segments no longer than
    ``max_segment``; exponents are fitted to the squared norms.
    """
    radii = np.asarray(radii, dtype=float)
    if radii.ndim != 1 or len(radii) == 0 or np.any(np.diff(radii) <= 0) or radii[0] <= r_inner:
        raise DomainError("radii must be increasing and larger than r_inner")
    dirs, wdir = _sphere_rule(n_theta, n_phi)
    xg, wg = np.polynomial.legendre.leggauss(n_radial)
    acc = np.zeros(4)
    rows = []
    lo = r_inner
    for R in radii:
        nseg = max(1, int(np.ceil((R - lo) / max_segment)))
        edges = np.linspace(lo, R, nseg + 1)
        for a, b in zip(edges[:-1], edges[1:]):
            r = 0.5 * (b - a) * xg + 0.5 * (a + b)
            wr = 0.5 * (b - a) * wg * r * r
            pts = (r[:, None, None] * dirs[None]).reshape(-1, 3)
            E, B = field_fn(pts)
            weights = (wr[:, None] * wdir[None]).reshape(-1)
            ww = w(pts)
            e2 = np.sum(E * E, axis=-1)
            b2 = np.sum(B * B, axis=-1)
            acc += np.array([weights @ e2, weights @ b2, weights @ (ww * e2), weights @ (ww * b2)])
        rows.append(acc.copy())
        lo = R
    rows = np.array(rows)
    l2_sq = rows[:, 0] + rows[:, 1]
    l2w_sq = rows[:, 2] + rows[:, 3]
    exp_l2 = fit_exponent(radii, l2_sq) if len(radii) > 1 and np.all(l2_sq > 0) else 0.0
    exp_l2w = fit_exponent(radii, l2w_sq) if len(radii) > 1 and np.all(l2w_sq > 0) else 0.0
    return ScalingProbeResult(
        radii=radii,
        l2_norms=np.sqrt(l2_sq),
        l2w_norms=np.sqrt(l2w_sq),
        l2_exponent=exp_l2,
        l2w_exponent=exp_l2w,
        E_l2_sq=rows[:, 0],
        B_l2_sq=rows[:, 1],
        E_l2w_sq=rows[:, 2],
        B_l2w_sq=rows[:, 3],
        r_inner=float(r_inner),
    )


def lw_scaling_probe(worldline, radii, w, t=0.0, sign=RETARDED, r_inner=None, **kwargs):
    """:func:`norm_scaling_probe` for the LW field of ``worldline`` at time ``t``."""
    if r_inner is None:
        r_inner = max(1.0, 2.0 * worldline.extent)

    def fn(pts):
        E, B, _ = lw_field(worldline, t, pts, sign)
        return E, B

    return norm_scaling_probe(fn, radii, w, r_inner=r_inner, **kwargs)
