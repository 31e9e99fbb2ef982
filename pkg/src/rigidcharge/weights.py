"""Weight functions, weighted L2/Sobolev norms and the phase-space norm.

A weight ``w`` is admissible when ``w(x + y) <= (1 + C_w |y|)^P_w w(x)``
for all ``x, y``.  The growth rate ``gamma`` of the free propagator in the
weighted norm comes from bounds ``|d_i sqrt(w)| <= C_i sqrt(w)`` and is
``sqrt(C_1^2 + C_2^2 + C_3^2)``.
"""

from dataclasses import dataclass, field
from itertools import combinations_with_replacement
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import ConfigError, DomainError, StructureError
from .io_util import atomic_write_bytes, atomic_write_text, read_header
from .spectral import FieldPair, Grid

KINDS = ("constant", "inverse_quadratic", "tabulated")

#: Highest derivative order accepted by :func:`field_norm`.
MAX_SOBOLEV_ORDER = 4

# Order of second-derivative constants in WeightSpec.deriv_constants[3:].
SECOND_ORDER_PAIRS = tuple(combinations_with_replacement(range(3), 2))


@dataclass(eq=False)
class WeightSpec:
    """A sampled weight with its class constants.

    ``deriv_constants`` lists the first-order constants ``C_x, C_y, C_z``
    followed by the six second-order ones in the order of
    :data:`SECOND_ORDER_PAIRS`, each bounding ``|D^a sqrt(w)| / sqrt(w)``.
    """

    kind: str
    C_w: float
    P_w: int
    gamma: float
    deriv_constants: tuple
    grid: Grid
    values: np.ndarray = field(repr=False)

    @property
    def is_constant(self):
        return self.kind == "constant"

    def __call__(self, x):
        """Evaluate the weight at points ``x`` of shape ``(..., 3)``."""
        x = np.asarray(x, dtype=float)
        if self.kind == "constant":
            return np.ones(x.shape[:-1])
        if self.kind == "inverse_quadratic":
            return 1.0 / (1.0 + np.sum(x**2, axis=-1))
        # periodic trilinear interpolation of the samples
        idx = x / self.grid.dx + self.grid.n // 2
        pts = np.moveaxis(idx.reshape(-1, 3), -1, 0)
        vals = ndimage.map_coordinates(self.values, pts, order=1, mode="grid-wrap")
        return vals.reshape(x.shape[:-1])


def make_weight(kind, grid, values=None, C_w=None, P_w=None):
    """Build a :class:`WeightSpec` on ``grid``.

    ``kind`` is ``"constant"``, ``"inverse_quadratic"`` (``1/(1+|x|^2)``) or
    ``"tabulated"``; a tabulated weight needs ``values`` sampled on the grid
    and the user's claimed ``C_w`` and ``P_w``.  The derivative constants
    and ``gamma`` are found by scanning the grid points.
    """
    if kind == "constant":
        ones = np.ones(grid.shape)
        return WeightSpec("constant", 0.0, 0, 0.0, (0.0,) * 9, grid, ones)
    if kind == "inverse_quadratic":
        r2 = np.sum(grid.coords**2, axis=0)
        vals = 1.0 / (1.0 + r2)
        # exact sups over R^3 of |D^a sqrt(w)| / sqrt(w): |x_i|/(1+|x|^2) peaks at 1/2,
        # the second-order ratios at 1 (diagonal, x = 0) and 3/8 (mixed, x_i = x_j = 1/sqrt(2))
        first = [0.5, 0.5, 0.5]
        second = [1.0 if i == j else 0.375 for i, j in SECOND_ORDER_PAIRS]
        gamma = float(np.sqrt(sum(c * c for c in first)))
        return WeightSpec("inverse_quadratic", 1.0, 2, gamma, tuple(first + second), grid, vals)
    if kind == "tabulated":
        if values is None or C_w is None or P_w is None:
            raise ConfigError("tabulated weight needs values, C_w and P_w", key="weight")
        vals = np.array(values, dtype=float)
        if vals.shape != grid.shape:
            raise StructureError(f"weight samples have shape {vals.shape}, grid is {grid.shape}")
        if not np.all(np.isfinite(vals)) or np.any(vals <= 0):
            raise DomainError("tabulated weight has a nonpositive or non-finite sample")
        consts = _scan_constants(vals, grid)
        gamma = float(np.sqrt(sum(c * c for c in consts[:3])))
        return WeightSpec("tabulated", float(C_w), int(P_w), gamma, consts, grid, vals)
    raise ConfigError(f"unknown weight kind {kind!r}", key="weight")


def _scan_constants(vals, grid):
    """Finite-difference scan of ``|D^a sqrt(w)| / sqrt(w)`` over the grid."""
    s = np.sqrt(vals)
    dx = grid.dx
    grads = np.gradient(s, dx, edge_order=2)
    first = [float(np.max(np.abs(g) / s)) for g in grads]
    second = []
    for i, j in SECOND_ORDER_PAIRS:
        d2 = np.gradient(grads[i], dx, axis=j, edge_order=2)
        second.append(float(np.max(np.abs(d2) / s)))
    return tuple(first + second)


def save_tabulated_weight(path, values, grid, C_w, P_w):
    """Write samples as little-endian float64 plus a ``.hdr`` sidecar."""
    path = Path(path)
    atomic_write_bytes(path, np.asarray(values, dtype="<f8").tobytes(order="C"))
    header = (
        f"dims = {grid.n},{grid.n},{grid.n}\n"
        f"spacing = {grid.dx!r}\n"
        f"C_w = {float(C_w)!r}\n"
        f"P_w = {int(P_w)}\n"
    )
    atomic_write_text(Path(str(path) + ".hdr"), header)


def load_tabulated_weight(path, grid=None):
    path = Path(path)
    hdr = read_header(Path(str(path) + ".hdr"))
    try:
        dims = tuple(int(d) for d in hdr["dims"].split(","))
        spacing = float(hdr["spacing"])
        C_w = float(hdr["C_w"])
        P_w = int(hdr["P_w"])
    except KeyError as exc:
        raise ConfigError(f"weight header missing {exc.args[0]}", key=exc.args[0]) from None
    if len(set(dims)) != 1 or len(dims) != 3:
        raise ConfigError(f"weight table must be cubic, got dims {dims}", key="dims")
    file_grid = Grid(dims[0] * spacing, dims[0])
    if grid is not None and (grid.n != file_grid.n or not np.isclose(grid.L, file_grid.L)):
        raise ConfigError("weight table does not match the simulation grid", key="dims")
    raw = np.fromfile(path, dtype="<f8").reshape(file_grid.shape)
    return make_weight("tabulated", grid or file_grid, raw, C_w, P_w)


# ---------------------------------------------------------------------------
# class membership report


@dataclass
class WeightClassReport:
    ratios: np.ndarray
    bounds: np.ndarray
    reverse_ok: np.ndarray
    forward_ok: np.ndarray

    @property
    def violations(self):
        return np.flatnonzero(~(self.forward_ok & self.reverse_ok)).tolist()

    @property
    def passed(self):
        return not self.violations


def weight_class_report(w, sample_pairs, rtol=1e-12):
    """Check both sides of the translation bound at sample pairs ``(x, y)``.

    Forward: ``w(x+y)/w(x) <= (1 + C_w|y|)^P_w``.  Reverse:
    ``(1 + C_w|y|)^(-P_w) w(x) <= w(x+y)``.
    """
    pairs = np.asarray(sample_pairs, dtype=float).reshape(-1, 2, 3)
    if len(pairs) == 0:
        raise StructureError("sample_pairs is empty")
    x, y = pairs[:, 0], pairs[:, 1]
    wx, wxy = w(x), w(x + y)
    bound = (1.0 + w.C_w * np.linalg.norm(y, axis=-1)) ** w.P_w
    ratios = wxy / wx
    forward = ratios <= bound * (1 + rtol)
    reverse = wx / bound <= wxy * (1 + rtol)
    return WeightClassReport(ratios, bound, reverse, forward)


# ---------------------------------------------------------------------------
# norms


def multi_indices(order):
    """All multi-indices ``a`` in N^3 with ``|a| == order``."""
    out = []
    for a in range(order, -1, -1):
        for b in range(order - a, -1, -1):
            out.append((a, b, order - a - b))
    return out


def _weighted_sq(arr, w):
    """``sum w |F|^2 dx^3`` over the last three axes, summed over the rest."""
    sq = arr * arr
    if sq.ndim > 3:
        sq = np.sum(sq.reshape((-1,) + sq.shape[-3:]), axis=0)
    if not w.is_constant:
        sq = sq * w.values
    return float(np.sum(sq)) * w.grid.cell_volume


def field_norm_orders(field, w, grid, k):
    """Cumulative ``H^j_w`` norms for ``j = 0..k`` of a real field.

    ``field`` has shape ``(n, n, n)`` or ``(c, n, n, n)``.
    """
    if k < 0 or k > MAX_SOBOLEV_ORDER:
        raise DomainError(f"derivative order {k} outside [0, {MAX_SOBOLEV_ORDER}]")
    field = np.asarray(field, dtype=float)
    if field.shape[-3:] != grid.shape:
        raise StructureError(f"field shape {field.shape} does not match grid {grid.shape}")
    if w.grid != grid:
        raise StructureError("weight and field live on different grids")
    total = _weighted_sq(field, w)
    out = [np.sqrt(total)]
    if k == 0:
        return out
    F_hat = grid.fft(field)
    ik = 1j * grid.kvec
    for order in range(1, k + 1):
        for a in multi_indices(order):
            sym = ik[0] ** a[0] * ik[1] ** a[1] * ik[2] ** a[2]
            total += _weighted_sq(grid.ifft(sym * F_hat), w)
        out.append(np.sqrt(total))
    return out


def field_norm(field, w, grid, k=0):
    """``(sum_{|a|<=k} int w |D^a F|^2)^(1/2)`` by midpoint rule, spectral derivatives."""
    return field_norm_orders(field, w, grid, k)[-1]


def phase_norm(phi, w):
    """``sqrt(sum_i |q_i|^2 + |p_i|^2 + ||E_i||_w^2 + ||B_i||_w^2)``."""
    if len(phi.particles) != len(phi.fields):
        raise StructureError("particle and field counts differ")
    total = 0.0
    for pt, fp in zip(phi.particles, phi.fields):
        total += float(pt.q @ pt.q + pt.p @ pt.p)
        total += _weighted_sq(fp.E, w) + _weighted_sq(fp.B, w)
    return float(np.sqrt(total))


@dataclass
class NormReport:
    l2: float
    l2w: float
    hkw: list
    phase_norm: float


def norm_report(obj, w, kmax=2):
    """Norm summary of a :class:`FieldPair` or a phase-space point."""
    unit = make_weight("constant", w.grid)
    if isinstance(obj, FieldPair):
        fields, particle_sq = [obj], 0.0
    else:
        fields = list(obj.fields)
        particle_sq = float(sum(pt.q @ pt.q + pt.p @ pt.p for pt in obj.particles))
    l2_sq = l2w_sq = 0.0
    hk_sq = np.zeros(kmax + 1)
    for fp in fields:
        stacked = fp.stacked()
        l2_sq += _weighted_sq(stacked, unit)
        orders = field_norm_orders(stacked, w, w.grid, kmax)
        l2w_sq += orders[0] ** 2
        hk_sq += np.asarray(orders) ** 2
    return NormReport(
        l2=float(np.sqrt(l2_sq)),
        l2w=float(np.sqrt(l2w_sq)),
        hkw=[float(v) for v in np.sqrt(hk_sq)],
        phase_norm=float(np.sqrt(particle_sq + l2w_sq)),
    )


def weight_function(kind):
    """Grid-free callable for the closed-form weights (used off the grid)."""
    if kind == "constant":
        return lambda x: np.ones(np.shape(x)[:-1])
    if kind == "inverse_quadratic":
        return lambda x: 1.0 / (1.0 + np.sum(np.asarray(x, dtype=float) ** 2, axis=-1))
    raise ConfigError(f"no closed form for weight kind {kind!r}", key="weight")
