"""Periodic grid, vector field pairs and the exact free Maxwell propagator.

All transforms are real-to-complex over the last three axes, so a vector
field of shape ``(3, n, n, n)`` has a half spectrum of shape
``(3, n, n, n//2 + 1)``.  Derivatives use the wavevector with the Nyquist
components set to zero, which keeps every operator real (Hermitian spectra
map to Hermitian spectra) and makes curl, divergence and the propagator use
one consistent symbol.
"""

from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.fft

from .errors import ConfigError, StructureError

_WORKERS = 1


def set_threads(n):
    """Set the worker count used by the FFT backend (results do not depend on it)."""
    global _WORKERS
    _WORKERS = max(1, int(n))


def get_threads():
    return _WORKERS


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid on the cube ``[-L/2, L/2)^3``.

    Grid point ``g`` along an axis sits at ``x_g = (g - n/2) dx`` so the box
    centre is a grid point.  Wavenumbers are ``2 pi m / L`` with integer
    ``m`` in ``[-n/2, n/2)``.
    """

    L: float
    n: int

    def __post_init__(self):
        if not (self.L > 0 and np.isfinite(self.L)):
            raise ConfigError(f"box length must be positive, got {self.L}", key="grid.L")
        n = int(self.n)
        if n != self.n or n < 8 or n & (n - 1):
            raise ConfigError(f"n must be a power of two >= 8, got {self.n}", key="grid.n")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "L", float(self.L))

    @property
    def dx(self):
        return self.L / self.n

    @property
    def cell_volume(self):
        return self.dx**3

    @property
    def shape(self):
        return (self.n, self.n, self.n)

    @property
    def spectral_shape(self):
        return (self.n, self.n, self.n // 2 + 1)

    @cached_property
    def x1d(self):
        return (np.arange(self.n) - self.n // 2) * self.dx

    @cached_property
    def coords(self):
        """Array of shape ``(3, n, n, n)`` with the centred coordinates."""
        x = self.x1d
        return np.stack(np.meshgrid(x, x, x, indexing="ij"))

    @cached_property
    def radius(self):
        return np.sqrt(np.sum(self.coords**2, axis=0))

    # wavenumbers -------------------------------------------------------
    @cached_property
    def m1d(self):
        return np.fft.fftfreq(self.n, 1.0 / self.n)

    @cached_property
    def mz1d(self):
        return np.fft.rfftfreq(self.n, 1.0 / self.n)

    @cached_property
    def k1d(self):
        return 2 * np.pi / self.L * self.m1d

    @cached_property
    def kz1d(self):
        return 2 * np.pi / self.L * self.mz1d

    @cached_property
    def kvec(self):
        """Derivative wavevector ``(3, n, n, nz)`` with Nyquist components zeroed."""
        half = self.n // 2
        kx = np.where(np.abs(self.m1d) == half, 0.0, self.k1d)
        kz = np.where(self.mz1d == half, 0.0, self.kz1d)
        shape = self.spectral_shape
        return np.stack(
            [
                np.broadcast_to(kx[:, None, None], shape),
                np.broadcast_to(kx[None, :, None], shape),
                np.broadcast_to(kz[None, None, :], shape),
            ]
        ).copy()

    @cached_property
    def ksq(self):
        return np.sum(self.kvec**2, axis=0)

    @cached_property
    def kmag(self):
        return np.sqrt(self.ksq)

    @cached_property
    def khat(self):
        mag = self.kmag
        safe = np.where(mag > 0, mag, 1.0)
        return np.where(mag > 0, self.kvec / safe, 0.0)

    @cached_property
    def inv_ksq(self):
        """``1/|k|^2`` with zero wherever the derivative symbol vanishes."""
        ksq = self.ksq
        return np.where(ksq > 0, 1.0 / np.where(ksq > 0, ksq, 1.0), 0.0)

    @cached_property
    def resolved(self):
        """Boolean mask of modes with no Nyquist index on any axis."""
        half = self.n // 2
        mx = np.abs(self.m1d) < half
        mz = self.mz1d < half
        return mx[:, None, None] & mx[None, :, None] & mz[None, None, :]

    @cached_property
    def half_weights(self):
        """Multiplicity of each stored mode in the full spectrum (1 or 2)."""
        w = np.full(self.n // 2 + 1, 2.0)
        w[0] = 1.0
        w[-1] = 1.0
        return w

    # transforms ----------------------------------------------------------
    def fft(self, field):
        return scipy.fft.rfftn(np.asarray(field, dtype=float), axes=(-3, -2, -1), workers=_WORKERS)

    def ifft(self, spectrum):
        return scipy.fft.irfftn(spectrum, s=self.shape, axes=(-3, -2, -1), workers=_WORKERS)

    def shift_phase(self, q):
        """Spectral factor ``exp(-i k.q)`` translating a sampled function by ``q``."""
        q = np.asarray(q, dtype=float)
        ex = np.exp(-1j * self.k1d * q[0])
        ey = np.exp(-1j * self.k1d * q[1])
        ez = np.exp(-1j * self.kz1d * q[2])
        return (ex[:, None] * ey[None, :])[:, :, None] * ez[None, None, :]

    def spectral_inner(self, a, b):
        """Midpoint-rule integral of ``f*g`` from half spectra of real f, g.

        Reduces over the last three axes; leading axes are kept.
        """
        prod = (a.real * b.real + a.imag * b.imag) * self.half_weights
        return np.sum(prod, axis=(-3, -2, -1)) * (self.cell_volume / self.n**3)

    def spectral_sq_norm(self, a):
        return self.spectral_inner(a, a)

    # propagator trig tables ------------------------------------------------
    @cached_property
    def _trig_cache(self):
        return {}

    def rotation(self, t):
        """Return ``(cos(|k| t), sin(|k| t))`` tables, cached by ``t``."""
        key = float(t)
        cache = self._trig_cache
        hit = cache.get(key)
        if hit is None:
            if len(cache) > 64:
                cache.clear()
            arg = self.kmag * key
            hit = (np.cos(arg), np.sin(arg))
            cache[key] = hit
        return hit


class FieldPair:
    """Electric and magnetic vector fields of one charge on a grid.

    The object is immutable.  It may be built from real samples or from half
    spectra; the other representation is derived lazily and cached, so the
    cache always equals the transform of the data it was derived from.
    """

    __slots__ = ("grid", "_E", "_B", "_E_hat", "_B_hat")

    def __init__(self, grid, E=None, B=None, *, E_hat=None, B_hat=None):
        self.grid = grid
        if (E is None) != (B is None) or (E_hat is None) != (B_hat is None):
            raise StructureError("E and B must be given together")
        if E is None and E_hat is None:
            raise StructureError("FieldPair needs real or spectral data")
        self._E = self._B = self._E_hat = self._B_hat = None
        if E is not None:
            self._E = _frozen(E, (3,) + grid.shape, float)
            self._B = _frozen(B, (3,) + grid.shape, float)
        if E_hat is not None:
            self._E_hat = _frozen(E_hat, (3,) + grid.spectral_shape, complex)
            self._B_hat = _frozen(B_hat, (3,) + grid.spectral_shape, complex)

    @classmethod
    def zeros(cls, grid):
        z = np.zeros((3,) + grid.shape)
        return cls(grid, z, z)

    @classmethod
    def from_spectra(cls, grid, E_hat, B_hat):
        return cls(grid, E_hat=E_hat, B_hat=B_hat)

    @property
    def E(self):
        if self._E is None:
            self._E = _frozen(self.grid.ifft(self._E_hat), None, float)
        return self._E

    @property
    def B(self):
        if self._B is None:
            self._B = _frozen(self.grid.ifft(self._B_hat), None, float)
        return self._B

    @property
    def E_hat(self):
        if self._E_hat is None:
            self._E_hat = _frozen(self.grid.fft(self._E), None, complex)
        return self._E_hat

    @property
    def B_hat(self):
        if self._B_hat is None:
            self._B_hat = _frozen(self.grid.fft(self._B), None, complex)
        return self._B_hat

    @property
    def has_spectral_cache(self):
        return self._E_hat is not None

    def __add__(self, other):
        return FieldPair(self.grid, self.E + other.E, self.B + other.B)

    def __sub__(self, other):
        return FieldPair(self.grid, self.E - other.E, self.B - other.B)

    def scaled(self, s):
        return FieldPair(self.grid, s * self.E, s * self.B)

    def stacked(self):
        """Real data as one ``(6, n, n, n)`` array in the order Ex..Ez, Bx..Bz."""
        return np.concatenate([self.E, self.B])


def _frozen(arr, shape, dtype):
    out = np.array(arr, dtype=dtype, copy=True)
    if shape is not None and out.shape != shape:
        raise StructureError(f"expected array of shape {shape}, got {out.shape}")
    out.flags.writeable = False
    return out


# ---------------------------------------------------------------------------
# spectral differential operators


def curl_hat(F_hat, grid):
    k = grid.kvec
    fx, fy, fz = F_hat[..., 0, :, :, :], F_hat[..., 1, :, :, :], F_hat[..., 2, :, :, :]
    return 1j * np.stack(
        [k[1] * fz - k[2] * fy, k[2] * fx - k[0] * fz, k[0] * fy - k[1] * fx], axis=-4
    )


def div_hat(F_hat, grid):
    k = grid.kvec
    return 1j * (k[0] * F_hat[..., 0, :, :, :] + k[1] * F_hat[..., 1, :, :, :] + k[2] * F_hat[..., 2, :, :, :])


def spectral_curl(F, grid):
    """Curl of a real vector field ``(3, n, n, n)``, returned as a real field."""
    return grid.ifft(curl_hat(grid.fft(F), grid))


def spectral_divergence(F, grid):
    """Divergence of a real vector field, returned as a real scalar field."""
    return grid.ifft(div_hat(grid.fft(F), grid))


def spectral_gradient(g, grid):
    g_hat = grid.fft(g)
    return grid.ifft(1j * grid.kvec * g_hat)


def spectral_laplacian(g, grid):
    """Laplacian with the full symbol ``-|k|^2`` (Nyquist modes included)."""
    kx = grid.k1d[:, None, None]
    ky = grid.k1d[None, :, None]
    kz = grid.kz1d[None, None, :]
    return grid.ifft(-(kx**2 + ky**2 + kz**2) * grid.fft(g))


def band_limit(F, grid):
    """Remove every mode with a Nyquist index; returns a real field."""
    return grid.ifft(grid.fft(F) * grid.resolved)


# ---------------------------------------------------------------------------
# free propagation


def propagate_spectra(E_hat, B_hat, t, grid):
    """Exact free Maxwell flow of half spectra over time ``t``.

    Works on arrays of shape ``(..., 3, n, n, nz)``.  Per mode the
    transverse parts rotate with frequency ``|k|``; longitudinal parts, the
    ``k = 0`` mode and modes where the derivative symbol vanishes are static.
    """
    if t == 0:
        return E_hat.copy(), B_hat.copy()
    c, s = grid.rotation(t)
    khat = grid.khat
    omc = 1.0 - c
    isn = 1j * s
    E_new = c * E_hat
    E_new += khat * (omc * np.sum(khat * E_hat, axis=-4, keepdims=True))
    E_new += isn * _cross(khat, B_hat)
    B_new = c * B_hat
    B_new += khat * (omc * np.sum(khat * B_hat, axis=-4, keepdims=True))
    B_new -= isn * _cross(khat, E_hat)
    return E_new, B_new


def _cross(k, F):
    """``k x F`` for a real symbol ``k`` (3, ...) and spectra ``F`` (..., 3, n, n, nz)."""
    out = np.empty_like(F)
    out[..., 0, :, :, :] = k[1] * F[..., 2, :, :, :] - k[2] * F[..., 1, :, :, :]
    out[..., 1, :, :, :] = k[2] * F[..., 0, :, :, :] - k[0] * F[..., 2, :, :, :]
    out[..., 2, :, :, :] = k[0] * F[..., 1, :, :, :] - k[1] * F[..., 0, :, :, :]
    return out


def free_propagate(fields, t):
    """Apply the free Maxwell group ``W_t`` to a :class:`FieldPair`."""
    E_hat, B_hat = propagate_spectra(fields.E_hat, fields.B_hat, t, fields.grid)
    return FieldPair.from_spectra(fields.grid, E_hat, B_hat)


def propagate_phase(phi, t):
    """``W_t`` on the full phase space: particles are left unchanged."""
    return phi.with_fields([free_propagate(f, t) for f in phi.fields])


def hermitian_defect(spectrum, grid):
    """Largest violation of Hermitian symmetry on the self-conjugate planes.

    A half spectrum describes a real field only if the ``kz = 0`` and
    ``kz = Nyquist`` planes satisfy ``F(-kx, -ky) = conj F(kx, ky)``.  The
    return value is the size of the imaginary part that an inverse complex
    transform would produce, relative to the largest coefficient.
    """
    n = grid.n
    idx = (-np.arange(n)) % n
    worst = 0.0
    scale = np.max(np.abs(spectrum)) if spectrum.size else 0.0
    if scale == 0:
        return 0.0
    for plane in (0, n // 2):
        P = spectrum[..., :, :, plane]
        mirrored = np.conj(P[..., idx, :][..., :, idx])
        worst = max(worst, float(np.max(np.abs(P - mirrored))))
    return worst / scale


# ---------------------------------------------------------------------------
# snapshot files

COMPONENTS = ("Ex", "Ey", "Ez", "Bx", "By", "Bz")


def write_snapshot(path, fields, t):
    """Write ``path`` (raw little-endian float64) and ``path.hdr`` (text).

    Both files are first written with a ``.partial`` suffix and renamed once
    complete.
    """
    from .io_util import atomic_write_bytes, atomic_write_text

    path = Path(path)
    data = fields.stacked().astype("<f8").tobytes(order="C")
    header = (
        f"n = {fields.grid.n}\n"
        f"L = {fields.grid.L!r}\n"
        f"t = {float(t)!r}\n"
        f"components = {','.join(COMPONENTS)}\n"
        "dtype = float64-le\n"
        "layout = component-major, x index slowest\n"
    )
    atomic_write_bytes(path, data)
    atomic_write_text(Path(str(path) + ".hdr"), header)
    return path


def read_snapshot(path):
    """Return ``(FieldPair, t)`` from a snapshot written by :func:`write_snapshot`."""
    from .io_util import read_header

    path = Path(path)
    hdr = read_header(Path(str(path) + ".hdr"))
    try:
        n = int(hdr["n"])
        L = float(hdr["L"])
        t = float(hdr.get("t", 0.0))
    except KeyError as exc:
        raise ConfigError(f"snapshot header missing {exc.args[0]}", key=exc.args[0]) from None
    comps = tuple(c.strip() for c in hdr.get("components", ",".join(COMPONENTS)).split(","))
    if comps != COMPONENTS:
        raise ConfigError(f"unsupported component order {comps}", key="components")
    grid = Grid(L, n)
    raw = np.fromfile(path, dtype="<f8")
    if raw.size != 6 * n**3:
        raise StructureError(f"snapshot holds {raw.size} values, expected {6 * n**3}")
    raw = raw.reshape((6,) + grid.shape)
    return FieldPair(grid, raw[:3], raw[3:]), t
