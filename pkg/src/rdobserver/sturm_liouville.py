"""Sturm-Liouville eigenstructure of ``A f = -(p f')' + q f`` on (0, 1).

Boundary conditions are the Robin pair

    cos(theta1) f(0) - sin(theta1) f'(0) = 0,
    cos(theta2) f(1) + sin(theta2) f'(1) = 0,

with theta1 in (0, pi/2] and theta2 in [0, pi/2].

The numerical solver is a vertex-centred second-order scheme (central
differences, ghost nodes eliminated at Robin ends, which gives half-cell
rows and a symmetric tridiagonal pencil).  Eigenvalues are polished with a
flux-form Rayleigh quotient and, together with traces and samples,
Richardson-extrapolated over three nested grids.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.linalg as sla
from scipy.interpolate import CubicSpline, PPoly

HALF_PI = 0.5 * math.pi
_ANGLE_TOL = 1e-14


class EigenSolveError(RuntimeError):
    """Raised when the discrete eigenproblem is unusable."""


# ---------------------------------------------------------------------------
# coefficients


@dataclass(frozen=True)
class Coefficient:
    """Piecewise polynomial coefficient on [0, 1].

    ``coeffs[j]`` lists increasing powers of ``(x - breaks[j])`` on the
    interval ``[breaks[j], breaks[j + 1]]``.
    """

    breaks: tuple
    coeffs: tuple

    def __post_init__(self):
        if len(self.breaks) != len(self.coeffs) + 1:
            raise ValueError("need one coefficient row per interval")
        if self.breaks[0] != 0.0 or self.breaks[-1] != 1.0:
            raise ValueError("breaks must span [0, 1]")
        if any(b1 <= b0 for b0, b1 in zip(self.breaks, self.breaks[1:])):
            raise ValueError("breaks must be strictly increasing")

    @classmethod
    def constant(cls, value: float) -> "Coefficient":
        return cls((0.0, 1.0), ((float(value),),))

    @classmethod
    def polynomial(cls, powers: Sequence[float]) -> "Coefficient":
        """Single polynomial ``sum_k powers[k] x**k`` on [0, 1]."""
        return cls((0.0, 1.0), (tuple(float(c) for c in powers),))

    @classmethod
    def piecewise(cls, breaks, coeffs) -> "Coefficient":
        return cls(tuple(float(b) for b in breaks),
                   tuple(tuple(float(c) for c in row) for row in coeffs))

    @property
    def is_constant(self) -> bool:
        first = self.coeffs[0][0]
        return all(row[0] == first and all(c == 0.0 for c in row[1:]) for row in self.coeffs)

    def _ppoly(self, deriv=0):
        degree = max(len(row) for row in self.coeffs)
        c = np.zeros((degree, len(self.coeffs)))
        for j, row in enumerate(self.coeffs):
            # PPoly wants decreasing powers
            c[degree - len(row):, j] = row[::-1]
        pp = PPoly(c, np.asarray(self.breaks), extrapolate=True)
        return pp.derivative(deriv) if deriv else pp

    def __call__(self, x, deriv: int = 0):
        x = np.asarray(x, dtype=float)
        if self.is_constant:
            value = self.coeffs[0][0] if deriv == 0 else 0.0
            return np.full(x.shape, value) if x.ndim else float(value)
        out = self._ppoly(deriv)(x)
        return out if x.ndim else float(out)

    def to_dict(self) -> dict:
        return {"breaks": list(self.breaks), "coeffs": [list(r) for r in self.coeffs]}

    @classmethod
    def from_dict(cls, d: dict) -> "Coefficient":
        return cls.piecewise(d["breaks"], d["coeffs"])


def as_coefficient(value) -> Coefficient:
    if isinstance(value, Coefficient):
        return value
    return Coefficient.constant(float(value))


# ---------------------------------------------------------------------------
# operator specification


@dataclass(frozen=True)
class OperatorSpec:
    """Plant data: diffusion ``p``, reaction ``q_tilde`` and the split ``q = q_tilde + q_c``.

    The eigenproblem is posed for ``q``, which must be positive.
    """

    theta1: float
    theta2: float
    p: Coefficient
    q_tilde: Coefficient
    q_c: float
    grid_resolution: int = 2001

    def __post_init__(self):
        object.__setattr__(self, "p", as_coefficient(self.p))
        object.__setattr__(self, "q_tilde", as_coefficient(self.q_tilde))
        object.__setattr__(self, "q_c", float(self.q_c))
        validate_operator_spec(self)

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.grid_resolution)

    def q(self, x):
        return self.q_tilde(x) + self.q_c

    @property
    def is_constant(self) -> bool:
        return self.p.is_constant and self.q_tilde.is_constant

    @property
    def p_min(self) -> float:
        return float(np.min(self.p(self.nodes)))

    @property
    def p_max(self) -> float:
        return float(np.max(self.p(self.nodes)))

    @property
    def q_max(self) -> float:
        return float(np.max(self.q(self.nodes)))

    def to_dict(self) -> dict:
        return {
            "theta1": self.theta1,
            "theta2": self.theta2,
            "p": self.p.to_dict(),
            "q_tilde": self.q_tilde.to_dict(),
            "q_c": self.q_c,
            "grid_resolution": self.grid_resolution,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "OperatorSpec":
        return cls(
            theta1=float(d["theta1"]),
            theta2=float(d["theta2"]),
            p=Coefficient.from_dict(d["p"]),
            q_tilde=Coefficient.from_dict(d["q_tilde"]),
            q_c=float(d["q_c"]),
            grid_resolution=int(d.get("grid_resolution", 2001)),
        )


def validate_operator_spec(spec: OperatorSpec) -> None:
    if not (0.0 < spec.theta1 <= HALF_PI + _ANGLE_TOL):
        raise ValueError(f"theta1={spec.theta1!r} outside the admissible range (0, pi/2]")
    if not (-_ANGLE_TOL <= spec.theta2 <= HALF_PI + _ANGLE_TOL):
        raise ValueError(f"theta2={spec.theta2!r} outside the admissible range [0, pi/2]")
    if spec.grid_resolution < 9 or spec.grid_resolution % 2 == 0:
        raise ValueError("grid_resolution must be an odd integer >= 9")
    x = spec.nodes
    if np.min(spec.p(x)) <= 0.0:
        raise ValueError("p must be positive on [0, 1]")
    if np.min(spec.q(x)) <= 0.0:
        raise ValueError("q = q_tilde + q_c must be positive on [0, 1]; increase q_c")


def _cot(theta: float) -> float:
    return math.cos(theta) / math.sin(theta)


def _is_dirichlet(theta: float) -> bool:
    return abs(theta) <= _ANGLE_TOL


def quadrature_weights(x: np.ndarray) -> np.ndarray:
    """Composite Simpson weights on a uniform grid with an odd node count."""
    n = x.size
    h = (x[-1] - x[0]) / (n - 1)
    if n % 2 == 0:
        w = np.full(n, h)
        w[0] = w[-1] = h / 2
        return w
    w = np.full(n, 2.0)
    w[1:-1:2] = 4.0
    w[0] = w[-1] = 1.0
    return w * h / 3.0


def trapezoid_weights(x: np.ndarray) -> np.ndarray:
    h = x[1] - x[0]
    w = np.full(x.size, h)
    w[0] = w[-1] = h / 2
    return w


# ---------------------------------------------------------------------------
# discrete operator


@dataclass(frozen=True)
class DiscreteOperator:
    """Symmetric pencil ``S v = lam W v`` of the finite-difference scheme.

    ``active`` masks the nodes that carry unknowns (the x=1 node is dropped
    for a Dirichlet condition there).  ``flux_p`` holds p at cell midpoints,
    ``robin0``/``robin1`` the ghost-node boundary contributions.
    """

    x: np.ndarray
    diag: np.ndarray
    offdiag: np.ndarray
    mass: np.ndarray
    flux_p: np.ndarray
    q_nodes: np.ndarray
    robin0: float
    robin1: float
    dirichlet_right: bool

    @property
    def h(self) -> float:
        return float(self.x[1] - self.x[0])

    @property
    def n_unknowns(self) -> int:
        return self.diag.size

    def apply(self, v: np.ndarray) -> np.ndarray:
        """``W^{-1} S v`` on the active nodes (v given on active nodes)."""
        out = self.diag[:, None] * v if v.ndim == 2 else self.diag * v
        if v.ndim == 2:
            out[:-1] += self.offdiag[:, None] * v[1:]
            out[1:] += self.offdiag[:, None] * v[:-1]
            return out / self.mass[:, None]
        out[:-1] += self.offdiag * v[1:]
        out[1:] += self.offdiag * v[:-1]
        return out / self.mass

    def matrix(self):
        """Sparse ``W^{-1} S`` in CSR format."""
        import scipy.sparse as sp

        S = sp.diags([self.offdiag, self.diag, self.offdiag], [-1, 0, 1], format="csr")
        return sp.diags(1.0 / self.mass) @ S


def assemble_operator(spec: OperatorSpec, n_nodes: Optional[int] = None) -> DiscreteOperator:
    n = spec.grid_resolution if n_nodes is None else int(n_nodes)
    x = np.linspace(0.0, 1.0, n)
    h = x[1] - x[0]
    w = trapezoid_weights(x)
    pm = spec.p(x[:-1] + 0.5 * h)
    qx = spec.q(x)
    diag = np.zeros(n)
    diag[:-1] += pm / h
    diag[1:] += pm / h
    diag += w * qx
    off = -pm / h
    robin0 = float(spec.p(0.0)) * _cot(spec.theta1)
    diag[0] += robin0
    dirichlet_right = _is_dirichlet(spec.theta2)
    if dirichlet_right:
        robin1 = 0.0
        diag, off, w = diag[:-1], off[:-1], w[:-1]
    else:
        robin1 = float(spec.p(1.0)) * _cot(spec.theta2)
        diag[-1] += robin1
    return DiscreteOperator(x, diag, off, w, pm, qx, robin0, robin1, dirichlet_right)


def _fd_level(op: DiscreteOperator, n_modes: int):
    """Eigenpairs of one grid; returns (rayleigh_lams, vectors on all nodes)."""
    s = 1.0 / np.sqrt(op.mass)
    d = op.diag * s * s
    e = op.offdiag[: d.size - 1] * s[:-1] * s[1:]
    if n_modes > d.size:
        raise EigenSolveError("more modes requested than grid unknowns")
    try:
        _, y = sla.eigh_tridiagonal(d, e, select="i", select_range=(0, n_modes - 1))
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise EigenSolveError(f"tridiagonal eigensolve failed: {exc}") from exc
    v = y * s[:, None]
    v *= np.where(v[0] < 0, -1.0, 1.0)
    if op.dirichlet_right:
        v = np.vstack([v, np.zeros((1, n_modes))])
    # flux form avoids the cancellation in diag - offdiag for low modes
    dv = np.diff(v, axis=0)
    w = trapezoid_weights(op.x)
    num = (op.flux_p[:, None] * dv**2).sum(0) / op.h
    num += (w[:, None] * op.q_nodes[:, None] * v**2).sum(0)
    num += op.robin0 * v[0] ** 2 + op.robin1 * v[-1] ** 2
    den = (w[:, None] * v**2).sum(0)
    return num / den, v


def _one_sided_derivative(v: np.ndarray, h: float) -> np.ndarray:
    """Fourth-order backward difference at the last node, per column."""
    return (25 * v[-1] - 48 * v[-2] + 36 * v[-3] - 16 * v[-4] + 3 * v[-5]) / (12 * h)


def _richardson(coarse, mid, fine):
    r1 = (4.0 * mid - coarse) / 3.0
    r2 = (4.0 * fine - mid) / 3.0
    return (16.0 * r2 - r1) / 15.0


# ---------------------------------------------------------------------------
# spectral basis


@dataclass(frozen=True)
class SpectralBasis:
    """Eigenpairs with boundary traces and grid samples (rows are modes)."""

    lambdas: np.ndarray
    phi0: np.ndarray
    phi1: np.ndarray
    dphi1: np.ndarray
    x: np.ndarray
    samples: np.ndarray
    method: str = "fd-richardson"
    n_refined: int = 0
    wavenumbers: Optional[np.ndarray] = None
    phase0: Optional[np.ndarray] = None
    norms: Optional[np.ndarray] = None
    _spline: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n_modes(self) -> int:
        return int(self.lambdas.size)

    @property
    def weights(self) -> np.ndarray:
        return quadrature_weights(self.x)

    def project(self, f: np.ndarray, n: Optional[int] = None) -> np.ndarray:
        """Inner products <f, phi_k> for k < n, with f sampled on ``x``."""
        n = self.n_modes if n is None else n
        return self.samples[:n] @ (self.weights * f)

    def evaluate(self, xq, n: Optional[int] = None) -> np.ndarray:
        """Eigenfunctions at arbitrary points; shape (n, len(xq))."""
        n = self.n_modes if n is None else n
        xq = np.asarray(xq, dtype=float)
        if self.wavenumbers is not None:
            k = self.wavenumbers[:n, None]
            return np.cos(k * xq[None, :] - self.phase0[:n, None]) / self.norms[:n, None]
        if "spline" not in self._spline:
            self._spline["spline"] = CubicSpline(self.x, self.samples.T, axis=0)
        return self._spline["spline"](xq).T[:n]

    def truncated(self, n: int) -> "SpectralBasis":
        """First ``n`` modes only."""
        sl = slice(0, n)
        opt = lambda a: None if a is None else a[sl]  # noqa: E731
        return SpectralBasis(
            self.lambdas[sl], self.phi0[sl], self.phi1[sl], self.dphi1[sl], self.x,
            self.samples[sl], self.method, min(self.n_refined, n),
            opt(self.wavenumbers), opt(self.phase0), opt(self.norms),
        )

    def to_dict(self, include_samples: bool = False) -> dict:
        out = {
            "method": self.method,
            "n_modes": self.n_modes,
            "n_refined": self.n_refined,
            "lambdas": self.lambdas.tolist(),
            "phi0": self.phi0.tolist(),
            "phi1": self.phi1.tolist(),
            "dphi1": self.dphi1.tolist(),
        }
        if include_samples:
            out["x"] = self.x.tolist()
            out["samples"] = self.samples.tolist()
        return out


def solve_eigenproblem(spec: OperatorSpec, n_modes: int, n_refined: Optional[int] = None) -> SpectralBasis:
    """Numerical eigenbasis of the operator described by ``spec``.

    Parameters
    ----------
    spec : OperatorSpec
    n_modes : int
        Number of eigenpairs returned.
    n_refined : int, optional
        Leading modes that are Richardson-extrapolated over grids with
        M, 2M-1 and 4M-3 nodes (M = ``spec.grid_resolution``).  The
        remaining modes keep second-order accuracy from the M-node grid.
        Defaults to ``min(n_modes, 64)``.

    Raises
    ------
    EigenSolveError
        If the eigensolve fails or a computed eigenvalue leaves the bracket
        ``pi^2 (n-1)^2 p_* <= lam_n <= pi^2 n^2 p^* + q^*``.
    """
    if n_modes < 1:
        raise ValueError("n_modes must be >= 1")
    m = spec.grid_resolution
    if n_modes > (m - 1) // 4:
        raise EigenSolveError(f"grid of {m} nodes resolves at most {(m - 1) // 4} modes")
    n_ref = min(n_modes, 64) if n_refined is None else min(int(n_refined), n_modes)

    base = assemble_operator(spec, m)
    lam, v = _fd_level(base, n_modes)
    h = base.h
    dphi1 = _boundary_derivative(spec, v, h)
    lambdas = lam.copy()
    samples = v.T.copy()
    phi0 = v[0].copy()
    phi1 = v[-1].copy()

    if n_ref > 0:
        levels = [(lam[:n_ref], v[:, :n_ref], h)]
        for factor in (2, 4):
            op = assemble_operator(spec, factor * (m - 1) + 1)
            lf, vf = _fd_level(op, n_ref)
            levels.append((lf, vf[::factor], op.h, vf))
        lambdas[:n_ref] = _richardson(*(lv[0] for lv in levels))
        traces = []
        for i, lv in enumerate(levels):
            full = lv[1] if i == 0 else lv[3]
            traces.append((full[0], full[-1], _boundary_derivative(spec, full, lv[2])))
        phi0[:n_ref] = _richardson(*(t[0] for t in traces))
        phi1[:n_ref] = _richardson(*(t[1] for t in traces))
        dphi1[:n_ref] = _richardson(*(t[2] for t in traces))
        samples[:n_ref] = _richardson(*(lv[1] for lv in levels)).T
        if base.dirichlet_right:
            phi1[:n_ref] = 0.0

    basis = SpectralBasis(lambdas, phi0, phi1, dphi1, base.x, samples, "fd-richardson", n_ref)
    bad = bracket_violations(basis, spec)
    if bad.size:
        raise EigenSolveError(
            f"eigenvalue bracket violated for modes {(bad + 1).tolist()[:5]}; "
            "discretization too coarse"
        )
    if np.any(np.diff(lambdas) <= 0):
        raise EigenSolveError("computed eigenvalues are not strictly increasing")
    return basis


def _boundary_derivative(spec: OperatorSpec, v: np.ndarray, h: float) -> np.ndarray:
    if _is_dirichlet(spec.theta2):
        return _one_sided_derivative(v, h)
    # Robin end: the condition itself gives the derivative
    return -_cot(spec.theta2) * v[-1]


def bracket_violations(basis, spec: OperatorSpec, rtol: float = 1e-10) -> np.ndarray:
    n = np.arange(1, basis.lambdas.size + 1)
    lo = math.pi**2 * (n - 1) ** 2 * spec.p_min
    hi = math.pi**2 * n**2 * spec.p_max + spec.q_max
    lam = basis.lambdas
    return np.flatnonzero((lam < lo * (1 - rtol)) | (lam > hi * (1 + rtol)))


# ---------------------------------------------------------------------------
# closed form (constant coefficients)


def _phase(k, theta):
    return np.arctan2(math.cos(theta), k * math.sin(theta))


def constant_coefficient_wavenumbers(theta1: float, theta2: float, n_modes: int) -> np.ndarray:
    """Roots ``k_n`` of ``k - phase(k, theta1) - phase(k, theta2) = (n - 1) pi``.

    With ``phi = cos(k x - phase(k, theta1))`` the left condition holds for
    every k; the right one selects the roots.  The left-hand side is
    strictly increasing, so each root is bracketed in ``[(n-1) pi, n pi]``
    and all modes are bisected together.
    """
    target = np.arange(n_modes) * math.pi

    def g(k):
        return k - _phase(k, theta1) - _phase(k, theta2) - target

    lo = np.maximum(target, 1e-300)
    hi = target + math.pi
    glo, ghi = g(lo), g(hi)
    zero = np.abs(glo) < 1e-15
    if np.any((glo > 0) & ~zero) or np.any(ghi < 0):
        bad = int(np.flatnonzero(((glo > 0) & ~zero) | (ghi < 0))[0])
        raise EigenSolveError(f"root bracket failure for mode {bad + 1}")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        pos = g(mid) > 0
        hi = np.where(pos, mid, hi)
        lo = np.where(pos, lo, mid)
        if np.all(hi - lo <= 4 * np.finfo(float).eps * np.maximum(hi, 1.0)):
            break
    k = 0.5 * (lo + hi)
    k[zero] = np.where(target[zero] == 0.0, 0.0, lo[zero])
    return k


def closed_form_basis(spec: OperatorSpec, n_modes: int, n_nodes: Optional[int] = None) -> SpectralBasis:
    """Analytic eigenpairs for constant ``p`` and ``q``.

    ``phi_n(x) = cos(k_n x - a_n) / ||cos(k_n . - a_n)||`` with
    ``lam_n = p k_n^2 + q``; sign fixed so that ``phi_n(0) > 0``.
    """
    if not spec.is_constant:
        raise ValueError("closed_form_basis needs constant p and q")
    p = float(spec.p(0.0))
    q = float(spec.q(0.0))
    k = constant_coefficient_wavenumbers(spec.theta1, spec.theta2, n_modes)
    a = _phase(k, spec.theta1)
    with np.errstate(divide="ignore", invalid="ignore"):
        sq = 0.5 + (np.sin(2 * k - 2 * a) + np.sin(2 * a)) / (4 * k)
    sq = np.where(k == 0.0, np.cos(a) ** 2, sq)
    norms = np.sqrt(sq)
    x = np.linspace(0.0, 1.0, spec.grid_resolution if n_nodes is None else n_nodes)
    samples = np.cos(np.outer(k, x) - a[:, None]) / norms[:, None]
    phi0 = np.cos(a) / norms
    phi1 = np.cos(k - a) / norms
    dphi1 = -k * np.sin(k - a) / norms
    return SpectralBasis(p * k**2 + q, phi0, phi1, dphi1, x, samples, "closed-form",
                         n_modes, k, a, norms)


# ---------------------------------------------------------------------------
# traces only (tail sums)


@dataclass(frozen=True)
class TraceSpectrum:
    """Eigenvalues and ``phi_n(0)`` for many modes, used by tail sums."""

    lambdas: np.ndarray
    phi0: np.ndarray
    method: str


def trace_spectrum(spec: OperatorSpec, n_modes: int, chunk: int = 512) -> TraceSpectrum:
    """``lam_n`` and ``phi_n(0)`` for n = 1..n_modes.

    Constant coefficients use the closed form.  Otherwise the M-node scheme
    is used with M >= 4 n_modes + 1; its top eigenvalues sit below the
    exact ones, which errs on the large side for sums of ``phi^2 / lam``.
    """
    if spec.is_constant:
        p = float(spec.p(0.0))
        q = float(spec.q(0.0))
        k = constant_coefficient_wavenumbers(spec.theta1, spec.theta2, n_modes)
        a = _phase(k, spec.theta1)
        with np.errstate(divide="ignore", invalid="ignore"):
            sq = 0.5 + (np.sin(2 * k - 2 * a) + np.sin(2 * a)) / (4 * k)
        sq = np.where(k == 0.0, np.cos(a) ** 2, sq)
        return TraceSpectrum(p * k**2 + q, np.cos(a) / np.sqrt(sq), "closed-form")
    m = max(spec.grid_resolution, 4 * n_modes + 1)
    op = assemble_operator(spec, m)
    s = 1.0 / np.sqrt(op.mass)
    d = op.diag * s * s
    e = op.offdiag[: d.size - 1] * s[:-1] * s[1:]
    lams, phis = [], []
    for lo in range(0, n_modes, chunk):
        hi = min(n_modes, lo + chunk) - 1
        lam, y = sla.eigh_tridiagonal(d, e, select="i", select_range=(lo, hi))
        lams.append(lam)
        phis.append(np.abs(y[0]) * s[0])
    return TraceSpectrum(np.concatenate(lams), np.concatenate(phis), "fd")


# ---------------------------------------------------------------------------
# diagnostics


@dataclass
class BasisReport:
    residuals: np.ndarray
    gram_deviation: float
    bracket_violations: list
    monotone: bool
    residual_tol: float
    gram_tol: float

    @property
    def passed(self) -> bool:
        return (
            bool(np.all(self.residuals <= self.residual_tol))
            and self.gram_deviation <= self.gram_tol
            and not self.bracket_violations
            and self.monotone
        )

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "max_residual": float(np.max(self.residuals)) if self.residuals.size else 0.0,
            "residuals": self.residuals.tolist(),
            "gram_deviation": self.gram_deviation,
            "bracket_violations": self.bracket_violations,
            "monotone": self.monotone,
        }


def eigen_residuals(basis: SpectralBasis, spec: OperatorSpec) -> np.ndarray:
    """Relative residuals ``||A phi_n - lam_n phi_n||_{L2} / lam_n``.

    Closed-form bases are checked analytically (``phi'' = -k^2 phi``);
    numerical ones with the grid operator, so the value measures the
    O(h^2) consistency of the samples with the extrapolated eigenvalue.
    """
    w = basis.weights
    if basis.wavenumbers is not None and spec.is_constant:
        p = float(spec.p(0.0))
        q = float(spec.q(0.0))
        coef = p * basis.wavenumbers**2 + q - basis.lambdas
        norm = np.sqrt((basis.samples**2) @ w)
        return np.abs(coef) * norm / basis.lambdas
    op = assemble_operator(spec, basis.x.size)
    v = basis.samples.T[: op.n_unknowns]
    r = op.apply(v) - basis.lambdas[None, :] * v
    ww = w[: op.n_unknowns]
    return np.sqrt((r**2 * ww[:, None]).sum(0)) / basis.lambdas


def verify_basis(basis: SpectralBasis, spec: OperatorSpec, residual_tol: float = 5e-2,
                 gram_tol: float = 1e-6) -> BasisReport:
    """Residual, orthonormality, bracket and monotonicity checks (report only)."""
    res = eigen_residuals(basis, spec)
    gram = basis.samples @ (basis.weights[:, None] * basis.samples.T)
    n_gram = min(basis.n_modes, max(basis.n_refined, 1))
    dev = float(np.max(np.abs(gram[:n_gram, :n_gram] - np.eye(n_gram))))
    viol = bracket_violations(basis, spec).tolist()
    mono = bool(np.all(np.diff(basis.lambdas) > 0))
    return BasisReport(res, dev, viol, mono, residual_tol, gram_tol)
