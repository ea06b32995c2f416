"""Gain synthesis: reaction split, unstable modes, pole placement, Lyapunov solves."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .sturm_liouville import Coefficient, OperatorSpec, SpectralBasis, as_coefficient


class SynthesisError(ValueError):
    """Raised when gains cannot be produced for the requested data."""


@dataclass(frozen=True)
class GainSet:
    """Controller data shared by the certificate search and the simulator.

    Attributes
    ----------
    N0 : int
        Number of modes driven by the state feedback.
    N : int
        Observer dimension, ``N >= N0 + 1``.
    K : ndarray, shape (1, N0)
    L : ndarray, shape (N0, 1)
    delta : float
        Target decay rate.
    k_phi : float
        Center slope of the input nonlinearity (1 for the linear design).
    target_poles : tuple
        Requested closed-loop poles, shared by feedback and observer.
    """

    N0: int
    N: int
    K: np.ndarray
    L: np.ndarray
    delta: float
    k_phi: float = 1.0
    target_poles: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "K", np.asarray(self.K, dtype=float).reshape(1, self.N0))
        object.__setattr__(self, "L", np.asarray(self.L, dtype=float).reshape(self.N0, 1))
        object.__setattr__(self, "target_poles", tuple(float(p) for p in self.target_poles))
        if self.N0 < 1:
            raise ValueError("N0 must be >= 1")
        if self.N < self.N0 + 1:
            raise ValueError(f"N={self.N} must be at least N0+1={self.N0 + 1}")
        if self.delta <= 0:
            raise ValueError("delta must be positive")
        if self.k_phi <= 0:
            raise ValueError("k_phi must be positive")

    def with_N(self, N: int) -> "GainSet":
        return GainSet(self.N0, int(N), self.K, self.L, self.delta, self.k_phi, self.target_poles)

    def to_dict(self) -> dict:
        return {
            "N0": self.N0,
            "N": self.N,
            "K": self.K.ravel().tolist(),
            "L": self.L.ravel().tolist(),
            "delta": self.delta,
            "k_phi": self.k_phi,
            "target_poles": list(self.target_poles),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GainSet":
        return cls(int(d["N0"]), int(d["N"]), d["K"], d["L"], float(d["delta"]),
                   float(d.get("k_phi", 1.0)), tuple(d.get("target_poles", ())))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "GainSet":
        return cls.from_dict(json.loads(text))


# ---------------------------------------------------------------------------


def select_qc(q_tilde, n_check: int = 20001):
    """Split ``q_tilde = q - q_c`` with ``q_c = ceil(max(0, -min q_tilde)) + 1``.

    Returns
    -------
    q : Coefficient
    q_c : float
    """
    qt = as_coefficient(q_tilde)
    x = np.linspace(0.0, 1.0, n_check)
    qmin = float(np.min(qt(x)))
    q_c = float(math.ceil(max(0.0, -qmin)) + 1)
    q = Coefficient.piecewise(qt.breaks, [(row[0] + q_c,) + tuple(row[1:]) for row in qt.coeffs])
    return q, q_c


def make_operator_spec(theta1, theta2, p, q_tilde, q_c=None, grid_resolution=2001) -> OperatorSpec:
    """Plant spec with the default reaction split when ``q_c`` is omitted."""
    if q_c is None:
        _, q_c = select_qc(q_tilde)
    return OperatorSpec(theta1, theta2, p, q_tilde, q_c, grid_resolution)


def unstable_mode_count(lambdas, q_c: float, delta: float) -> int:
    """Smallest ``N0 >= 1`` with ``-lam_n + q_c < -delta`` for every ``n > N0``.

    ``lambdas`` may be a basis or an increasing array.  Since the
    eigenvalues increase, it suffices that the last computed mode satisfies
    the condition.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    lam = np.asarray(getattr(lambdas, "lambdas", lambdas), dtype=float)
    ok = -lam + q_c < -delta
    if not ok[-1]:
        raise SynthesisError(
            f"-lam_n + q_c < -delta fails at the last computed mode ({lam.size}); compute more modes"
        )
    bad = np.flatnonzero(~ok)
    return max(1, int(bad[-1]) + 1) if bad.size else 1


def _ackermann(A: np.ndarray, B: np.ndarray, poles: Sequence[float]) -> np.ndarray:
    """Row K with ``eig(A + B K) = poles`` (single input)."""
    n = A.shape[0]
    poles = np.asarray(poles, dtype=complex)
    if poles.size != n:
        raise SynthesisError(f"need {n} poles, got {poles.size}")
    ctrb = np.hstack([np.linalg.matrix_power(A, j) @ B for j in range(n)])
    if np.linalg.matrix_rank(ctrb) < n:
        raise SynthesisError("pair is not controllable (zero input coefficient)")
    cond = np.linalg.cond(ctrb)
    if cond > 1e12:
        raise SynthesisError(f"controllability matrix ill-conditioned (cond={cond:.2e})")
    coeffs = np.real_if_close(np.poly(poles))
    if np.iscomplexobj(coeffs):
        raise SynthesisError("poles must come in conjugate pairs")
    pA = np.zeros_like(A)
    for c in coeffs:
        pA = pA @ A + c * np.eye(n)
    e_last = np.zeros((1, n))
    e_last[0, -1] = 1.0
    return -e_last @ np.linalg.solve(ctrb, pA)


def place_poles_feedback(A0, B0_eff, poles) -> np.ndarray:
    """Feedback row K (1 x N0) placing ``eig(A0 + B0_eff K)`` at ``poles``."""
    A0 = np.atleast_2d(np.asarray(A0, dtype=float))
    B = np.asarray(B0_eff, dtype=float).reshape(-1, 1)
    if np.any(B == 0):
        raise SynthesisError("zero input coefficient beta_n; mode not controllable")
    return _ackermann(A0, B, poles)


def place_poles_observer(A0, C0, poles) -> np.ndarray:
    """Observer column L (N0 x 1) placing ``eig(A0 - L C0)`` at ``poles``."""
    A0 = np.atleast_2d(np.asarray(A0, dtype=float))
    C = np.asarray(C0, dtype=float).reshape(1, -1)
    if np.any(C == 0):
        raise SynthesisError("zero measurement coefficient phi_n(0); mode not observable")
    Kd = _ackermann(A0.T, C.T, poles)
    return -Kd.T


def synthesize_gains(spec: OperatorSpec, basis: SpectralBasis, beta_n, delta: float, N: int,
                     poles: Optional[Sequence[float]] = None, k_phi: float = 1.0,
                     N0: Optional[int] = None) -> GainSet:
    """Full gain design for the reduced pair ``(A0, B0)`` and ``(A0, C0)``.

    Default poles sit at ``-(delta + 1)``; a single value is repeated
    ``N0`` times.
    """
    if N0 is None:
        N0 = unstable_mode_count(basis, spec.q_c, delta)
    if poles is None:
        poles = [-(delta + 1.0)] * N0
    poles = [float(p) for p in np.atleast_1d(poles)]
    if len(poles) == 1 and N0 > 1:
        # repeated poles make Ackermann ill-posed in floating point; spread them
        poles = [poles[0] - 0.1 * j for j in range(N0)]
    if any(p >= -delta for p in poles):
        raise SynthesisError(f"poles {poles} must lie left of -delta={-delta}")
    lam = basis.lambdas[:N0]
    A0 = np.diag(-lam + spec.q_c)
    B0 = np.asarray(beta_n[:N0], dtype=float).reshape(-1, 1)
    C0 = basis.phi0[:N0].reshape(1, -1)
    K = place_poles_feedback(A0, k_phi * B0, poles)
    L = place_poles_observer(A0, C0, poles)
    return GainSet(N0, N, K, L, delta, k_phi, tuple(poles))


# ---------------------------------------------------------------------------


def _vech_basis(n: int):
    iu = np.triu_indices(n)
    return iu


def solve_shifted_lyapunov(F: np.ndarray, delta: float, rhs: Optional[np.ndarray] = None,
                           tol: float = 1e-10) -> np.ndarray:
    """Symmetric P with ``F^T P + P F + 2 delta P = -rhs`` (default ``rhs = I``).

    The unknowns are the upper-triangular entries of P, so the linear
    system has ``n(n+1)/2`` rows; it is solved densely.

    Raises
    ------
    SynthesisError
        If ``F + delta I`` is not Hurwitz, or the residual or definiteness
        check fails.
    """
    F = np.asarray(F, dtype=float)
    n = F.shape[0]
    Fs = F + delta * np.eye(n)
    if np.max(np.linalg.eigvals(Fs).real) >= 0:
        raise SynthesisError("F + delta I is not Hurwitz; no positive definite solution")
    Q = np.eye(n) if rhs is None else np.asarray(rhs, dtype=float)
    iu = _vech_basis(n)
    m = iu[0].size
    # column j is the operator applied to the symmetric basis matrix E_j
    G = np.zeros((m, m))
    for j, (r, c) in enumerate(zip(*iu)):
        Ej = np.zeros((n, n))
        Ej[r, c] = Ej[c, r] = 1.0
        Ej = Fs.T @ Ej + Ej @ Fs
        G[:, j] = Ej[iu]
    sol = np.linalg.solve(G, -Q[iu])
    P = np.zeros((n, n))
    P[iu] = sol
    P = P + np.triu(P, 1).T
    res = np.linalg.norm(F.T @ P + P @ F + 2 * delta * P + Q)
    if res > tol * max(1.0, np.linalg.norm(P)):
        raise SynthesisError(f"Lyapunov residual {res:.3e} above tolerance")
    if rhs is None and np.min(np.linalg.eigvalsh(P)) <= 0:
        raise SynthesisError("Lyapunov solution is not positive definite")
    return P


@dataclass
class Lemma1Study:
    N: list
    norms: list
    min_norm: float = field(init=False)
    max_norm: float = field(init=False)

    def __post_init__(self):
        self.min_norm = float(min(self.norms))
        self.max_norm = float(max(self.norms))

    @property
    def ratio(self) -> float:
        return self.max_norm / self.min_norm

    @property
    def ratio_to_first(self) -> float:
        return self.max_norm / self.norms[0]

    def to_dict(self) -> dict:
        return {"N": self.N, "norm_P": self.norms, "min": self.min_norm,
                "max": self.max_norm, "ratio": self.ratio}


def lemma1_bound_study(spec: OperatorSpec, basis: SpectralBasis, lifting, gains: GainSet,
                       N_range: Iterable[int], includes_psi: bool = False) -> Lemma1Study:
    """Spectral norm of ``P^N`` solving the shifted Lyapunov equation, per N.

    K and L are kept fixed while N varies.
    """
    from .spectral import build_stability_model

    Ns, norms = [], []
    for N in N_range:
        model = build_stability_model(spec, basis, lifting, gains.with_N(N),
                                      includes_psi=includes_psi, tails=(0.0, 0.0))
        P = solve_shifted_lyapunov(model.F, gains.delta)
        Ns.append(int(N))
        norms.append(float(np.linalg.norm(P, 2)))
    if not Ns:
        raise ValueError("empty N_range")
    return Lemma1Study(Ns, norms)
