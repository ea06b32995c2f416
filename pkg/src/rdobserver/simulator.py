"""Closed-loop simulation: PDE by the method of lines, observer in lockstep.

The plant ``z_t = (p z_x)_x - q_tilde z`` is discretized with the same
vertex-centred stencils as the eigensolver.  The boundary input
``u_phi = phi(K Zhat^{N0})`` enters through the last row (Robin end) or as
the Dirichlet value at x = 1; the measurement is the node value at x = 0.

Time stepping is Crank-Nicolson for the PDE and the trapezoid rule for
the observer.  Because both updates are affine in the new input value,
each step reduces to one scalar equation ``v = c0 + c1 phi(v)`` for
``v = K Zhat^{N0}``, solved by safeguarded Newton iterations (exactly for
the linear design).
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.linalg as sla

from .nonlinearity import SectorNonlinearity
from .spectral import LiftingData, StabilityModel, lifting_coefficients, lifting_denominator
from .sturm_liouville import OperatorSpec, SpectralBasis, assemble_operator, quadrature_weights
from .synthesis import GainSet

SCHEMA_VERSION = 1


class SimulationError(RuntimeError):
    pass


def default_initial_profile(x: np.ndarray) -> np.ndarray:
    """``cos(pi x / 2)`` scaled to unit H1 norm (exactly, in the continuum)."""
    # ||cos||^2 = 1/2, ||d/dx cos||^2 = (pi/2)^2 / 2
    scale = 1.0 / math.sqrt(0.5 + 0.5 * (math.pi / 2) ** 2)
    return scale * np.cos(0.5 * math.pi * x)


@dataclass
class SimConfig:
    """Discretization and initial data.

    Parameters
    ----------
    mesh_nodes : int
        Spatial nodes on [0, 1].
    t_final, dt : float
    z0 : callable or array, optional
        Initial profile (callable of x, or values on the mesh).  Default:
        :func:`default_initial_profile`.
    zhat0 : array, optional
        Observer initial state (length N); zero by default.
    record_stride : int
        Keep every ``record_stride``-th step.
    amplitude : float
        Multiplies the initial profile.
    open_loop : bool
        Force ``u = 0`` (the observer still runs).
    enforce_compatibility : bool
        Add a boundary-layer correction so that ``z0`` meets the boundary
        conditions at t = 0.
    divergence_ratio, overflow : float
        A run is flagged diverged once the state norm exceeds
        ``divergence_ratio`` times its initial value; it stops when
        ``||z||_{L2}`` passes ``overflow``.
    """

    mesh_nodes: int = 201
    t_final: float = 10.0
    dt: float = 1e-3
    z0: object = None
    zhat0: Optional[np.ndarray] = None
    record_stride: int = 10
    amplitude: float = 1.0
    open_loop: bool = False
    enforce_compatibility: bool = True
    compat_tol: float = 1e-8
    divergence_ratio: float = 1e3
    overflow: float = 1e12
    keep_profiles: bool = False

    def __post_init__(self):
        if self.mesh_nodes < 9:
            raise ValueError("mesh_nodes must be >= 9")
        if self.dt <= 0 or self.t_final <= 0:
            raise ValueError("dt and t_final must be positive")
        if self.record_stride < 1:
            raise ValueError("record_stride must be >= 1")

    def to_dict(self) -> dict:
        return {
            "mesh_nodes": self.mesh_nodes, "t_final": self.t_final, "dt": self.dt,
            "record_stride": self.record_stride, "amplitude": self.amplitude,
            "open_loop": self.open_loop, "enforce_compatibility": self.enforce_compatibility,
            "divergence_ratio": self.divergence_ratio, "overflow": self.overflow,
            "z0": "default" if self.z0 is None else "custom",
            "zhat0": None if self.zhat0 is None else np.asarray(self.zhat0).tolist(),
        }


@dataclass
class Trajectory:
    times: np.ndarray
    x: np.ndarray
    zhat: np.ndarray
    u: np.ndarray
    u_phi: np.ndarray
    l2: np.ndarray
    h1: np.ndarray
    z_modes: np.ndarray
    w_modes: np.ndarray
    e_modes: np.ndarray
    link_residual: np.ndarray
    energy: np.ndarray          # discrete <A w, w> (used for the Lyapunov tail)
    diverged: bool
    stopped_early: bool
    initial_norm: float
    compat_correction: float
    profiles: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    @property
    def state_norm(self) -> np.ndarray:
        """``sqrt(||z||_{H1}^2 + |zhat|^2)``."""
        return np.sqrt(self.h1**2 + np.sum(self.zhat**2, axis=1))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["t", "l2", "h1", "state_norm", "u", "u_phi"])
        sn = self.state_norm
        for i in range(self.times.size):
            w.writerow([repr(float(v)) for v in
                        (self.times[i], self.l2[i], self.h1[i], sn[i], self.u[i], self.u_phi[i])])
        return buf.getvalue()

    def summary(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "t_end": float(self.times[-1]),
            "samples": int(self.times.size),
            "diverged": self.diverged,
            "stopped_early": self.stopped_early,
            "initial_norm": self.initial_norm,
            "final_norm": float(self.state_norm[-1]),
            "max_norm": float(np.max(self.state_norm)),
            "max_link_residual": float(np.max(self.link_residual)) if self.link_residual.size else 0.0,
            "compat_correction": self.compat_correction,
            **self.meta,
        }


# ---------------------------------------------------------------------------
# compatibility


def _one_sided(f: Callable, x0: float, direction: float, h: float = 1e-4) -> float:
    # second-order one-sided difference, staying inside [0, 1]
    f0, f1, f2 = (float(np.asarray(f(np.array([x0 + direction * k * h])))[0]) for k in range(3))
    return direction * (-3 * f0 + 4 * f1 - f2) / (2 * h)


def boundary_residuals(spec: OperatorSpec, z0: Callable, u0: float):
    """Residuals of the two boundary conditions for a callable profile."""
    z_0 = float(np.asarray(z0(np.array([0.0])))[0])
    z_1 = float(np.asarray(z0(np.array([1.0])))[0])
    d0 = _one_sided(z0, 0.0, 1.0)
    d1 = _one_sided(z0, 1.0, -1.0)
    r0 = math.cos(spec.theta1) * z_0 - math.sin(spec.theta1) * d0
    r1 = math.cos(spec.theta2) * z_1 + math.sin(spec.theta2) * d1 - u0
    return r0, r1


def compatible_profile(spec: OperatorSpec, z0: Callable, u0: float, width: float = 0.2):
    """Add cubic boundary layers so that ``z0`` meets both conditions.

    Returns the corrected callable and the largest correction amplitude.
    """
    r0, r1 = boundary_residuals(spec, z0, u0)
    # layer at 0: eta(0) = 1, eta'(0) = -3/width; at 1: eta(1) = 1, eta'(1) = 3/width
    c0 = -r0 / (math.cos(spec.theta1) + math.sin(spec.theta1) * 3.0 / width)
    c1 = -r1 / (math.cos(spec.theta2) + math.sin(spec.theta2) * 3.0 / width)

    def corrected(x):
        x = np.asarray(x, dtype=float)
        left = np.clip((width - x) / width, 0.0, None) ** 3
        right = np.clip((x - 1.0 + width) / width, 0.0, None) ** 3
        return z0(x) + c0 * left + c1 * right

    return corrected, max(abs(c0), abs(c1))


# ---------------------------------------------------------------------------
# the time stepper


class _Plant:
    """Semi-discrete plant ``W dz/dt = -(S - q_c W) z + g u`` on the active nodes."""

    def __init__(self, spec: OperatorSpec, n_nodes: int, dt: float):
        op = assemble_operator(spec, n_nodes)
        self.op = op
        self.x = op.x
        n = op.n_unknowns
        self.n = n
        self.dirichlet = op.dirichlet_right
        g = np.zeros(n)
        if self.dirichlet:
            g[-1] = op.flux_p[-1] / op.h
        else:
            g[-1] = float(spec.p(1.0)) / math.sin(spec.theta2)
        self.g = g
        d = op.diag - spec.q_c * op.mass
        e = op.offdiag
        self.d, self.e = d, e
        half = 0.5 * dt
        # banded (W + dt/2 S') for solve_banded
        ab = np.zeros((3, n))
        ab[0, 1:] = half * e
        ab[1] = op.mass + half * d
        ab[2, :-1] = half * e
        self.ab = ab
        self.half = half
        self.zb = self.solve(half * g * 1.0)

    def stiff_apply(self, v):
        out = self.d * v
        out[:-1] += self.e * v[1:]
        out[1:] += self.e * v[:-1]
        return out

    def explicit_part(self, v, u_old):
        return self.op.mass * v - self.half * self.stiff_apply(v) + self.half * self.g * u_old

    def solve(self, rhs):
        return sla.solve_banded((1, 1), self.ab, rhs)

    def full(self, v, u):
        """Values on all mesh nodes (appends the Dirichlet node)."""
        return np.append(v, u) if self.dirichlet else v

    def energy(self, wfull):
        """Discrete ``<A w, w>`` with q = q_tilde + q_c (flux form)."""
        op = self.op
        dv = np.diff(wfull)
        val = float(np.sum(op.flux_p * dv**2) / op.h)
        wt = np.full(wfull.size, op.h)
        wt[0] = wt[-1] = op.h / 2
        val += float(np.sum(wt * op.q_nodes * wfull**2))
        val += op.robin0 * wfull[0] ** 2 + op.robin1 * wfull[-1] ** 2
        return val


def _norms(x, z):
    h = x[1] - x[0]
    w = quadrature_weights(x)
    l2 = float(np.sqrt(w @ z**2))
    dz = np.diff(z) / h
    h1 = float(np.sqrt(l2**2 + h * np.sum(dz**2)))
    return l2, h1


def simulate_closed_loop(spec: OperatorSpec, basis: SpectralBasis, gains: GainSet,
                         phi: Optional[SectorNonlinearity], config: Optional[SimConfig] = None,
                         lifting: Optional[LiftingData] = None) -> Trajectory:
    """Simulate plant plus observer-based controller.

    Parameters
    ----------
    spec, basis, gains
        Plant, its eigenbasis (at least N modes) and the controller gains.
    phi : SectorNonlinearity or None
        Input nonlinearity.  ``None`` selects the linear design, in which
        the applied input is ``k_phi * u``.
    config : SimConfig
    lifting : LiftingData, optional
        Provides ``b_n`` and ``beta_n``; recomputed from ``basis`` if absent.
    """
    cfg = SimConfig() if config is None else config
    if lifting is None:
        lifting = lifting_coefficients(spec, basis)
    N0, N = gains.N0, gains.N
    if basis.n_modes < N:
        raise ValueError(f"basis has {basis.n_modes} modes, observer needs {N}")
    lam = basis.lambdas[:N]
    phi0 = basis.phi0[:N]
    beta = lifting.beta_n[:N]
    b = lifting.b_n[:N]
    K = np.zeros(N)
    K[:N0] = gains.K.ravel()
    lvec = np.zeros(N)
    lvec[:N0] = gains.L.ravel()
    cb = float(phi0 @ b)
    # observer: dzhat/dt = At zhat + cu u_phi + lvec y
    At = np.diag(-lam + spec.q_c) - np.outer(lvec, phi0)
    cu = beta - lvec * cb

    plant = _Plant(spec, cfg.mesh_nodes, cfg.dt)
    x = plant.x
    dt, half = cfg.dt, plant.half
    Im = np.eye(N)
    Mminus = Im - half * At
    lu = sla.lu_factor(Mminus)
    Mplus = Im + half * At

    if phi is None:
        kphi = gains.k_phi
        apply_phi = lambda v: kphi * v  # noqa: E731
        dphi = lambda v: kphi  # noqa: E731
        linear = True
    else:
        apply_phi = phi
        dphi = phi.deriv
        linear = False
    if cfg.open_loop:
        apply_phi = lambda v: 0.0  # noqa: E731
        dphi = lambda v: 0.0  # noqa: E731
        linear = True
        kphi = 0.0

    # initial data
    zhat = np.zeros(N) if cfg.zhat0 is None else np.asarray(cfg.zhat0, dtype=float).copy()
    if zhat.size != N:
        raise ValueError(f"zhat0 must have length N={N}")
    u_old = float(K @ zhat)
    uphi_old = float(apply_phi(u_old))
    z0 = default_initial_profile if cfg.z0 is None else cfg.z0
    corr = 0.0
    if callable(z0):
        f0 = (lambda xx, f=z0: cfg.amplitude * np.asarray(f(xx), dtype=float))
        r0, r1 = boundary_residuals(spec, f0, uphi_old)
        if max(abs(r0), abs(r1)) > cfg.compat_tol:
            if cfg.enforce_compatibility:
                f0, corr = compatible_profile(spec, f0, uphi_old)
            else:
                warnings.warn(f"initial profile violates the boundary conditions ({r0:.2e}, {r1:.2e})")
        zfull = f0(x)
    else:
        zfull = cfg.amplitude * np.asarray(z0, dtype=float).copy()
        if zfull.size != x.size:
            raise ValueError("z0 array must match mesh_nodes")
    v = zfull[: plant.n].copy()
    zfull = plant.full(v, uphi_old)

    # modal tools on the simulation mesh
    wq = quadrature_weights(x)
    Phi = basis.evaluate(x, N)                      # (N, nodes)
    proj = Phi * wq[None, :]
    den = lifting_denominator(spec.theta2)
    x2 = x**2 / den

    n_steps = int(round(cfg.t_final / dt))
    n_rec = n_steps // cfg.record_stride + 1
    rec = {k: np.zeros(n_rec) for k in ("t", "u", "uphi", "l2", "h1", "energy", "link")}
    rec_zhat = np.zeros((n_rec, N))
    rec_z = np.zeros((n_rec, N))
    rec_w = np.zeros((n_rec, N))
    profiles = np.zeros((n_rec, x.size)) if cfg.keep_profiles else None

    def record(i, t, zf, zh, u, up):
        l2, h1 = _norms(x, zf)
        zn = proj @ zf
        wf = zf - x2 * up
        wn = proj @ wf
        rec["t"][i], rec["u"][i], rec["uphi"][i] = t, u, up
        rec["l2"][i], rec["h1"][i] = l2, h1
        rec["energy"][i] = plant.energy(wf)
        rec["link"][i] = float(np.max(np.abs(wn - zn - b * up)))
        rec_zhat[i] = zh
        rec_z[i] = zn
        rec_w[i] = wn
        if profiles is not None:
            profiles[i] = zf
        return math.sqrt(h1**2 + float(zh @ zh))

    init_norm = record(0, 0.0, zfull, zhat, u_old, uphi_old)
    i_rec = 1
    diverged = stopped = False
    y_old = zfull[0]
    t = 0.0
    zb0 = plant.zb[0]
    for step in range(1, n_steps + 1):
        # z_new = za + zb * uphi_new
        za = plant.solve(plant.explicit_part(v, uphi_old))
        ya, yb = za[0], zb0
        # zhat_new = ha + hb * uphi_new
        rhs = Mplus @ zhat + half * (cu * uphi_old + lvec * (y_old + ya))
        ha = sla.lu_solve(lu, rhs)
        hb = sla.lu_solve(lu, half * (cu + lvec * yb))
        c0 = float(K @ ha)
        c1 = float(K @ hb)
        if linear:
            kk = kphi
            vnew = c0 / (1.0 - c1 * kk)
        else:
            vnew = _scalar_solve(c0, c1, apply_phi, dphi)
        uphi = float(apply_phi(vnew))
        zhat = ha + hb * uphi
        v = za + plant.zb * uphi
        u_new = float(K @ zhat)
        t = step * dt
        zfull = plant.full(v, uphi)
        y_old = zfull[0]
        uphi_old = uphi
        if step % cfg.record_stride == 0 and i_rec < n_rec:
            nrm = record(i_rec, t, zfull, zhat, u_new, uphi)
            i_rec += 1
            if nrm > cfg.divergence_ratio * max(init_norm, 1e-300) and init_norm > 0:
                diverged = True
            if not np.isfinite(nrm) or rec["l2"][i_rec - 1] > cfg.overflow:
                diverged = stopped = True
                break
    sl = slice(0, i_rec)
    return Trajectory(
        rec["t"][sl], x, rec_zhat[sl], rec["u"][sl], rec["uphi"][sl], rec["l2"][sl], rec["h1"][sl],
        rec_z[sl], rec_w[sl], rec_z[sl] - rec_zhat[sl], rec["link"][sl], rec["energy"][sl],
        diverged, stopped, init_norm, corr, None if profiles is None else profiles[sl],
        {"mesh_nodes": cfg.mesh_nodes, "dt": dt, "N": N, "N0": N0, "linear_path": phi is None,
         "open_loop": cfg.open_loop},
    )


def _scalar_solve(c0, c1, f, df, tol=1e-15, max_iter=60):
    """Root of ``v - c0 - c1 f(v)`` (monotone when ``|c1| sup|f'| < 1``)."""
    v = c0 + c1 * float(f(c0))
    for _ in range(max_iter):
        g = v - c0 - c1 * float(f(v))
        dg = 1.0 - c1 * float(df(v))
        if dg <= 0:
            raise SimulationError("input equation not monotone; reduce dt")
        step = g / dg
        v -= step
        if abs(step) <= tol * max(1.0, abs(v)):
            return v
    raise SimulationError("input equation did not converge; reduce dt")


def simulate_linear(spec, basis, gains, config=None, lifting=None) -> Trajectory:
    """Linear design (applied input ``k_phi * u``)."""
    return simulate_closed_loop(spec, basis, gains, None, config, lifting)


# ---------------------------------------------------------------------------
# diagnostics


@dataclass
class DecayFit:
    rate: float
    intercept: float
    residual: float
    window: tuple
    diverged: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def decay_rate_fit(traj: Trajectory, t_window=(1.0, 8.0), quantity: str = "state") -> DecayFit:
    """Least-squares rate of ``sqrt(||z||_{H1}^2 + |zhat|^2)`` over a window.

    A positive rate means decay; growth gives a negative rate.
    ``quantity`` may also be ``"h1"`` or ``"l2"`` to fit the plant norm alone.
    """
    t0, t1 = t_window
    m = (traj.times >= t0) & (traj.times <= t1)
    if m.sum() < 2:
        raise ValueError("fewer than two samples in the fit window")
    series = {"state": traj.state_norm, "h1": traj.h1, "l2": traj.l2}
    if quantity not in series:
        raise ValueError(f"quantity must be one of {sorted(series)}")
    s = series[quantity][m]
    if np.any(s <= 0) or not np.all(np.isfinite(s)):
        raise ValueError("non-positive norm in fit window")
    A = np.vstack([traj.times[m], np.ones(m.sum())]).T
    coef, res, *_ = np.linalg.lstsq(A, np.log(s), rcond=None)
    resid = float(np.sqrt(res[0] / m.sum())) if res.size else 0.0
    return DecayFit(float(-coef[0]), float(coef[1]), resid, (t0, t1), traj.diverged)


@dataclass
class LyapunovReport:
    times: np.ndarray
    V: np.ndarray
    violations: int
    worst_ratio: float
    eps: float

    def to_dict(self) -> dict:
        return {"violations": self.violations, "worst_ratio": self.worst_ratio, "eps": self.eps,
                "V0": float(self.V[0]), "V_end": float(self.V[-1])}


def lyapunov_trace(traj: Trajectory, cert, model: StabilityModel, basis: SpectralBasis,
                   eps: float = 1e-2) -> LyapunovReport:
    """``V = X^T P X + gamma sum_{n>N} lam_n w_n^2`` along the trajectory.

    The tail sum is the discrete energy of w minus its first N modes.
    Counts steps with ``V(t+) > V(t) exp(-2 delta dt) (1 + eps)``.
    """
    N0, N = model.N0, model.N
    lam = basis.lambdas[:N]
    zhat = traj.zhat
    e = traj.e_modes
    X = np.hstack([
        zhat[:, :N0], e[:, :N0], zhat[:, N0:N] / lam[None, N0:N], np.sqrt(lam[None, N0:N]) * e[:, N0:N],
    ])
    quad = np.einsum("ij,jk,ik->i", X, cert.P, X)
    head = traj.w_modes[:, :N] ** 2 @ lam
    tail = np.maximum(traj.energy - head, 0.0)
    V = quad + cert.gamma * tail
    dt = np.diff(traj.times)
    bound = V[:-1] * np.exp(-2 * model.delta * dt) * (1 + eps)
    bad = V[1:] > bound + 1e-14 * np.max(np.abs(V))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(V[:-1] > 0, V[1:] / (V[:-1] * np.exp(-2 * model.delta * dt)), 0.0)
    return LyapunovReport(traj.times, V, int(bad.sum()), float(np.max(ratio)) if ratio.size else 0.0, eps)


@dataclass
class MeshStudy:
    levels: list
    differences: list
    orders: list

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def mesh_convergence(spec, basis, gains, phi, config: SimConfig, levels: Sequence[int],
                     lifting=None, reference: Optional[Callable] = None) -> MeshStudy:
    """Refinement study of the ``||z||_{L2}`` time series.

    ``levels`` are node counts (each ``2 m - 1`` of the previous for nested
    meshes).  With ``reference(t) -> ||z(t)||_{L2}`` the errors are taken
    against it; otherwise between consecutive levels.  Orders are
    ``log2`` of successive error ratios.
    """
    levels = list(levels)
    if len(levels) < 3:
        raise ValueError("need at least three levels")
    series = []
    for m in levels:
        cfg = SimConfig(**{**config.__dict__, "mesh_nodes": int(m)})
        tr = simulate_closed_loop(spec, basis, gains, phi, cfg, lifting)
        series.append((tr.times, tr.l2))
    if reference is not None:
        diffs = [float(np.max(np.abs(l2 - reference(t)))) for t, l2 in series]
    else:
        diffs = [float(np.max(np.abs(series[i + 1][1] - series[i][1]))) for i in range(len(series) - 1)]
    orders = [float(math.log2(diffs[i] / diffs[i + 1])) if diffs[i + 1] > 0 else float("inf")
              for i in range(len(diffs) - 1)]
    return MeshStudy(levels, diffs, orders)


def write_plot_script(csv_name: str) -> str:
    """Small matplotlib script that plots a trajectory CSV (not executed here)."""
    return f'''"""Plot {csv_name}; run with: python3 plot_{csv_name.rsplit('.', 1)[0]}.py"""
import csv
import matplotlib.pyplot as plt

rows = list(csv.DictReader(open("{csv_name}")))
t = [float(r["t"]) for r in rows]
fig, ax = plt.subplots(2, 1, sharex=True, figsize=(6, 5))
ax[0].semilogy(t, [float(r["state_norm"]) for r in rows], label="state norm")
ax[0].semilogy(t, [float(r["h1"]) for r in rows], label="H1 norm of z")
ax[0].legend()
ax[1].plot(t, [float(r["u"]) for r in rows], label="u")
ax[1].plot(t, [float(r["u_phi"]) for r in rows], label="phi(u)")
ax[1].set_xlabel("t")
ax[1].legend()
fig.tight_layout()
fig.savefig("{csv_name.rsplit('.', 1)[0]}.png", dpi=120)
'''
