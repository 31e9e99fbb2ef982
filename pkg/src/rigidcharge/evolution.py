"""Time evolution of ``phi' = A phi + J(phi)``.

Two integrators share one array representation of the state (positions,
momenta and half spectra of every charge's fields):

* ``picard``: fixed-point iteration of the Duhamel map
  ``S[phi](t) = W_t phi0 + int_0^t W_{t-s} J(phi_s) ds`` on the nodes of a
  composite trapezoid rule, each node propagated by the exact free flow.
* ``strang``: half free flow, classical RK4 for ``phi' = J(phi)``, half free
  flow.

Usage::

    system = System(grid, shapes, CouplingMatrix.ml(2), make_weight("constant", grid))
    result = evolve(system, phi0, EvolveConfig(dt=0.01, T=1.0))
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, ConvergenceError, HorizonError, StepRejected
from .sources import empirical_j_lipschitz, j_bound_check, velocity
from .spectral import FieldPair, propagate_spectra
from .state import PhaseSpacePoint

SCHEMES = ("picard", "strang")


@dataclass
class EvolveConfig:
    scheme: str = "picard"
    dt: float = 0.01
    T: float = 1.0
    picard_tol: float = 1e-10
    picard_max_iter: int = 50
    quad_nodes: int = 4
    contraction_guard: bool = True
    dt_min: float = None
    check_horizon: bool = True

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown scheme {self.scheme!r}", key="evolve.scheme")
        if not self.dt > 0:
            raise ConfigError(f"dt must be positive, got {self.dt}", key="evolve.dt")
        if not (0 < self.picard_tol <= 1e-2):
            raise ConfigError(f"picard_tol must lie in (0, 1e-2], got {self.picard_tol}",
                              key="evolve.picard_tol")
        if int(self.quad_nodes) != self.quad_nodes or self.quad_nodes < 2:
            raise ConfigError(f"quad_nodes must be an integer >= 2, got {self.quad_nodes}",
                              key="evolve.quad_nodes")
        if int(self.picard_max_iter) < 1:
            raise ConfigError("picard_max_iter must be >= 1", key="evolve.picard_max_iter")
        self.quad_nodes = int(self.quad_nodes)
        self.picard_max_iter = int(self.picard_max_iter)
        if self.dt_min is None:
            self.dt_min = self.dt / 64.0


@dataclass
class StepReport:
    """Per-step record; ``factors[m]`` is ``differences[m+1] / differences[m]``."""

    iterations: int
    factors: list
    differences: list
    dt: float
    rejected: int = 0


# ---------------------------------------------------------------------------
# array state


@dataclass
class ArrayState:
    q: np.ndarray
    p: np.ndarray
    E: np.ndarray
    B: np.ndarray
    m: np.ndarray


def to_arrays(phi):
    grid = phi.grid
    if phi.N == 0:
        empty = np.zeros((0, 3) + grid.spectral_shape, dtype=complex)
        return ArrayState(np.zeros((0, 3)), np.zeros((0, 3)), empty, empty.copy(), np.zeros(0))
    return ArrayState(
        phi.positions(),
        phi.momenta(),
        np.stack([f.E_hat for f in phi.fields]),
        np.stack([f.B_hat for f in phi.fields]),
        phi.masses(),
    )


def from_arrays(st, template):
    parts = [pt.replace(q=st.q[i], p=st.p[i]) for i, pt in enumerate(template.particles)]
    grid = template.grid
    fields = [FieldPair.from_spectra(grid, st.E[i], st.B[i]) for i in range(len(parts))]
    return PhaseSpacePoint(parts, fields, grid)


def _field_sq(system, E, B):
    """Weighted squared norm of stacked field spectra ``(N, 3, ...)``."""
    grid, w = system.grid, system.weight
    if E.shape[0] == 0:
        return 0.0
    if w.is_constant:
        return float(np.sum(grid.spectral_sq_norm(E)) + np.sum(grid.spectral_sq_norm(B)))
    total = 0.0
    for i in range(E.shape[0]):
        for F in (E[i], B[i]):
            real = grid.ifft(F)
            total += float(np.sum(np.sum(real * real, axis=0) * w.values))
    return total * grid.cell_volume


def array_norm(system, q, p, E, B):
    return float(np.sqrt(np.sum(q * q) + np.sum(p * p) + _field_sq(system, E, B)))


# ---------------------------------------------------------------------------
# Picard step


def _transverse(j, grid):
    khat = grid.khat
    return j - khat * np.sum(khat * j, axis=-4, keepdims=True)


def _duhamel_map(system, st, free, J0, nodes, h):
    """One application of the discrete Duhamel map to node values.

    ``nodes`` is ``(q, p, E, B)``, each a list over the ``K + 1`` time nodes;
    node 0 is the initial state.  Returns the new node lists.

    The free flow leaves longitudinal modes fixed, so the longitudinal part of
    the current integral is taken exactly from the node positions; only the
    transverse part uses the trapezoid rule.  This keeps the Gauss residual
    constant up to rounding.
    """
    model = system.model
    grid = system.grid
    q, p, E, B = nodes
    K = len(q) - 1
    Js = [J0] + [model.self_consistent_J(q[k], p[k], st.m, E[k], B[k]) for k in range(1, K + 1)]
    jT = [_transverse(J[2], grid) for J in Js]
    L0 = model.longitudinal_field(st.q)
    new_q, new_p, new_E, new_B = [st.q], [st.p], [E[0]], [B[0]]
    acc_v = 0.5 * Js[0][0]
    acc_F = 0.5 * Js[0][1]
    IE = np.zeros_like(st.E)
    IB = np.zeros_like(st.B)
    for k in range(1, K + 1):
        v_k, F_k, _ = Js[k]
        IE, IB = propagate_spectra(IE + 0.5 * h * jT[k - 1], IB, h, grid)
        IE = IE + 0.5 * h * jT[k]
        qk = st.q + h * (acc_v + 0.5 * v_k)
        new_q.append(qk)
        new_p.append(st.p + h * (acc_F + 0.5 * F_k))
        acc_v = acc_v + v_k
        acc_F = acc_F + F_k
        new_E.append(free[k][0] + IE + (model.longitudinal_field(qk) - L0))
        new_B.append(free[k][1] + IB)
    return new_q, new_p, new_E, new_B


def _node_distance(system, a, b):
    qa, pa, Ea, Ba = a
    qb, pb, Eb, Bb = b
    return max(
        (array_norm(system, qa[k] - qb[k], pa[k] - pb[k], Ea[k] - Eb[k], Ba[k] - Bb[k])
         for k in range(1, len(qa))),
        default=0.0,
    )


def _picard_arrays(system, st, dt, cfg, return_nodes=False):
    model = system.model
    grid = system.grid
    K = cfg.quad_nodes
    h = dt / K
    free = [propagate_spectra(st.E, st.B, k * h, grid) for k in range(K + 1)]
    norm0 = array_norm(system, st.q, st.p, st.E, st.B)
    threshold = cfg.picard_tol * norm0
    J0 = model.self_consistent_J(st.q, st.p, st.m, st.E, st.B)
    # explicit Euler predictor as the starting iterate
    nodes = (
        [st.q + k * h * J0[0] for k in range(K + 1)],
        [st.p + k * h * J0[1] for k in range(K + 1)],
        [f[0] + k * h * J0[2] for k, f in enumerate(free)],
        [f[1] for f in free],
    )

    diffs, factors = [], []
    above = 0
    for it in range(1, cfg.picard_max_iter + 1):
        new = _duhamel_map(system, st, free, J0, nodes, h)
        d = _node_distance(system, new, nodes)
        nodes = new
        if diffs:
            factor = d / diffs[-1] if diffs[-1] > 0 else 0.0
            factors.append(factor)
            above = above + 1 if factor >= 1.0 else 0
        diffs.append(d)
        if d <= threshold:
            report = StepReport(it, factors, diffs, dt)
            q, p, E, B = nodes
            out = ArrayState(q[K], p[K], E[K], B[K], st.m)
            if return_nodes:
                return out, report, (free, J0, nodes, h)
            return out, report
        if cfg.contraction_guard and above >= 2:
            raise StepRejected(f"Picard iteration not contracting at dt={dt}", dt=dt, iteration=it)
    raise ConvergenceError(
        f"Picard iteration did not reach tolerance in {cfg.picard_max_iter} iterations",
        dt=dt, last_difference=diffs[-1],
    )


def picard_step(system, phi, dt, cfg):
    """One Picard step of length ``dt``; returns ``(state, StepReport)``."""
    st, report = _picard_arrays(system, to_arrays(phi), dt, cfg)
    return from_arrays(st, phi), report


def fixed_point_defect(system, phi, dt, cfg):
    """Converge one Picard step, then apply the Duhamel map once more.

    Returns ``(defect, norm0)`` where ``defect`` is the sup-over-nodes
    distance moved by the extra application.
    """
    st = to_arrays(phi)
    _, _, (free, J0, nodes, h) = _picard_arrays(system, st, dt, cfg, return_nodes=True)
    again = _duhamel_map(system, st, free, J0, nodes, h)
    return _node_distance(system, again, nodes), array_norm(system, st.q, st.p, st.E, st.B)


# ---------------------------------------------------------------------------
# Strang step


def _strang_arrays(system, st, dt):
    model = system.model
    grid = system.grid
    masses = st.m
    E, B = propagate_spectra(st.E, st.B, 0.5 * dt, grid)
    q, p = st.q, st.p

    def rhs(q_, p_, E_):
        return model.self_consistent_J(q_, p_, masses, E_, B)

    k1 = rhs(q, p, E)
    k2 = rhs(q + 0.5 * dt * k1[0], p + 0.5 * dt * k1[1], E + 0.5 * dt * k1[2])
    k3 = rhs(q + 0.5 * dt * k2[0], p + 0.5 * dt * k2[1], E + 0.5 * dt * k2[2])
    k4 = rhs(q + dt * k3[0], p + dt * k3[1], E + dt * k3[2])
    w = dt / 6.0
    q = q + w * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
    p = p + w * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
    E = E + w * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
    E, B = propagate_spectra(E, B, 0.5 * dt, grid)
    return ArrayState(q, p, E, B, st.m)


def strang_step(system, phi, dt):
    """One Strang splitting step of length ``dt``."""
    return from_arrays(_strang_arrays(system, to_arrays(phi), dt), phi)


# ---------------------------------------------------------------------------
# driver


def safe_horizon(system, dt):
    """Largest run length allowed by the wrap-around condition."""
    r_max = max((s.R for s in system.shapes), default=0.0)
    return 0.5 * (system.grid.L / 2.0 - 2.0 * r_max - dt)


def check_horizon(system, T, dt):
    """Require ``|T| + dt < L/2 - 2 R_max - |T|`` (excursion bounded by ``|T|``)."""
    limit = safe_horizon(system, dt)
    if abs(T) >= limit:
        raise HorizonError(
            f"run length {abs(T)} reaches the wrap-around horizon; safe T < {limit:.6g}",
            T=abs(T), safe_T=f"{limit:.6g}",
        )


@dataclass
class EvolveResult:
    times: list
    q: list
    p: list
    v: list
    reports: list = field(default_factory=list)
    states: list = field(default_factory=list)
    final: object = None
    rejected: int = 0

    def positions(self):
        return np.array(self.q)

    def momenta(self):
        return np.array(self.p)


def evolve(system, phi0, cfg, callbacks=(), keep_every=0, t0=0.0):
    """March ``phi0`` from ``t0`` to ``t0 + cfg.T`` (``T`` may be negative).

    ``callbacks`` are called as ``cb(t, phi)`` on the initial and every
    accepted state.  With ``keep_every = k > 0`` every k-th accepted state
    is stored in ``result.states``.  Raises :class:`HorizonError` before
    starting if the run is too long for the box, and
    :class:`ConvergenceError` (with ``.partial`` holding the trajectory so
    far) if step halving falls below ``cfg.dt_min``.
    """
    if phi0.N != system.N:
        raise ConfigError(f"state has {phi0.N} charges, system has {system.N}")
    if cfg.check_horizon and system.N:
        check_horizon(system, cfg.T, cfg.dt)
    direction = 1.0 if cfg.T >= 0 else -1.0
    total = abs(cfg.T)
    st = to_arrays(phi0)
    masses = st.m
    res = EvolveResult(times=[t0], q=[st.q.copy()], p=[st.p.copy()], v=[velocity(st.p, masses) if system.N else st.p.copy()])
    needs_state = bool(callbacks) or keep_every > 0

    def emit(t, state, count):
        phi = from_arrays(state, phi0) if needs_state or count < 0 else None
        for cb in callbacks:
            cb(t, phi)
        if keep_every and count % keep_every == 0:
            res.states.append((t, phi))
        return phi

    emit(t0, st, 0)
    elapsed = 0.0
    h_nom = cfg.dt
    h = h_nom
    count = 0
    eps = 1e-12 * max(total, 1.0)
    while elapsed < total - eps:
        step = min(h, total - elapsed)
        try:
            if cfg.scheme == "picard":
                new, report = _picard_arrays(system, st, direction * step, cfg)
            else:
                new = _strang_arrays(system, st, direction * step)
                report = StepReport(1, [], [], direction * step)
        except StepRejected:
            h = 0.5 * h
            res.rejected += 1
            if h < cfg.dt_min:
                err = ConvergenceError(
                    f"step rejected down to dt={h:.3g} below dt_min={cfg.dt_min:.3g}",
                    t=t0 + direction * elapsed,
                )
                res.final = from_arrays(st, phi0)
                err.partial = res
                raise err from None
            continue
        st = new
        elapsed = elapsed + step if total - (elapsed + step) > eps else total
        count += 1
        t = t0 + direction * elapsed
        res.reports.append(report)
        res.times.append(t)
        res.q.append(st.q.copy())
        res.p.append(st.p.copy())
        res.v.append(velocity(st.p, masses) if system.N else st.p.copy())
        emit(t, st, count)
        h = min(2.0 * h, h_nom)
    res.final = from_arrays(st, phi0)
    return res


# ---------------------------------------------------------------------------
# a-priori step-size estimate


def contraction_budget(system, phi, dt, rng=None, trials=6):
    """``T e^(gamma T) (2 C1 + C2)`` for a step of length ``T = |dt|``.

    ``C1`` is the measured ``||J(phi)||`` (left side of the J-bound check)
    and ``C2`` the largest observed difference quotient of J near ``phi``.
    The smoothness index of the abstract estimate is taken as ``n = 1``.
    Advisory only.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    T = abs(dt)
    w = system.weight
    C1 = j_bound_check(phi, system.shapes, system.coupling, w).lhs
    C2 = empirical_j_lipschitz(phi, system.shapes, system.coupling, w, rng, trials=trials)
    return T * np.exp(w.gamma * T) * (2.0 * C1 + C2)
