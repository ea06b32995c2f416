"""Lifting coefficients, tail constants and the stability-analysis matrices.

The boundary input is moved into the domain with
``w = z - x^2 u / (cos(theta2) + 2 sin(theta2))``, which produces the
in-domain profiles ``a`` and ``b``.  The closed-loop analysis state is
``X = col(Zhat^{N0}, E^{N0}, Ztilde^{N-N0}, Etilde^{N-N0})``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .sturm_liouville import OperatorSpec, SpectralBasis, TraceSpectrum, trace_spectrum


class LiftingError(ValueError):
    """The two expressions of the input coefficients disagree."""


class TailBoundError(RuntimeError):
    """The analytic remainder of a tail sum is too large to be useful."""


class HurwitzError(ValueError):
    """Gains do not meet the required decay margin."""


# ---------------------------------------------------------------------------
# lifting


@dataclass(frozen=True)
class LiftingData:
    a_fun: np.ndarray
    b_fun: np.ndarray
    a_n: np.ndarray
    b_n: np.ndarray
    beta_n: np.ndarray
    a_norm_sq: float
    b_norm_sq: float
    identity_residual: np.ndarray

    def to_dict(self) -> dict:
        return {
            "a_n": self.a_n.tolist(),
            "b_n": self.b_n.tolist(),
            "beta_n": self.beta_n.tolist(),
            "a_norm_sq": self.a_norm_sq,
            "b_norm_sq": self.b_norm_sq,
        }


def lifting_denominator(theta2: float) -> float:
    return math.cos(theta2) + 2.0 * math.sin(theta2)


def lifting_profiles(spec: OperatorSpec, x: np.ndarray):
    """Return ``(a(x), b(x))`` sampled at ``x``."""
    den = lifting_denominator(spec.theta2)
    a = (2.0 * spec.p(x) + 2.0 * x * spec.p(x, deriv=1) - x**2 * spec.q_tilde(x)) / den
    b = -(x**2) / den
    return a, b


def input_coefficients(spec: OperatorSpec, basis: SpectralBasis) -> np.ndarray:
    """``beta_n = p(1) (-cos(theta2) phi_n'(1) + sin(theta2) phi_n(1))``."""
    return float(spec.p(1.0)) * (-math.cos(spec.theta2) * basis.dphi1 + math.sin(spec.theta2) * basis.phi1)


def lifting_coefficients(spec: OperatorSpec, basis: SpectralBasis, tol: float = 1e-6) -> LiftingData:
    """Project ``a`` and ``b`` on the basis and cross-check ``beta_n``.

    The trace formula for ``beta_n`` must agree with
    ``a_n + (-lam_n + q_c) b_n`` to ``tol (1 + lam_n)`` on every refined
    mode; otherwise :class:`LiftingError` is raised.
    """
    a, b = lifting_profiles(spec, basis.x)
    w = basis.weights
    a_n = basis.samples @ (w * a)
    b_n = basis.samples @ (w * b)
    beta = input_coefficients(spec, basis)
    resid = np.abs(beta - (a_n + (-basis.lambdas + spec.q_c) * b_n))
    n_chk = max(basis.n_refined, 1)
    bad = np.flatnonzero(resid[:n_chk] > tol * (1.0 + basis.lambdas[:n_chk]))
    if bad.size:
        n = int(bad[0])
        raise LiftingError(
            f"beta_n identity off by {resid[n]:.3e} at mode {n + 1} "
            f"(allowed {tol * (1 + basis.lambdas[n]):.3e})"
        )
    return LiftingData(a, b, a_n, b_n, beta, float(w @ a**2), float(w @ b**2), resid)


def tail_norms(lifting: LiftingData, N: int, tol: float = 1e-9):
    """``(||R_N a||^2, ||R_N b||^2)`` as Parseval complements.

    Parameters
    ----------
    lifting : LiftingData
    N : int
        Number of leading modes removed; must not exceed the computed modes.
    tol : float
        Relative slack for negative round-off before it is treated as an
        inconsistent quadrature.
    """
    if N > lifting.a_n.size:
        raise ValueError(f"N={N} exceeds the {lifting.a_n.size} computed modes")
    out = []
    for norm_sq, coef in ((lifting.a_norm_sq, lifting.a_n), (lifting.b_norm_sq, lifting.b_n)):
        r = norm_sq - float(np.sum(coef[:N] ** 2))
        if r < -tol * max(norm_sq, 1.0):
            raise ValueError(f"negative tail norm {r:.3e}: quadrature inconsistent")
        out.append(max(r, 0.0))
    return tuple(out)


# ---------------------------------------------------------------------------
# tail sums of phi_n(0)^2 / lam_n^e


@dataclass(frozen=True)
class TailSum:
    value: float
    partial: float
    remainder: float
    n_tail: int
    exponent: float


def tail_mphi(spectrum, N: int, exponent: float, spec: OperatorSpec,
              max_remainder_ratio: float = 0.1, safety: float = 1.5) -> TailSum:
    """Upper estimate of ``sum_{n > N} phi_n(0)^2 / lam_n^exponent``.

    ``spectrum`` is anything with ``lambdas`` and ``phi0`` arrays.  The
    computed modes give a partial sum; the rest is bounded with
    ``|phi_n(0)| <= safety * max_computed |phi_n(0)|`` and
    ``lam_n >= pi^2 (n-1)^2 p_*``.  Over-estimation is the safe direction
    for the feasibility constraints.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    if exponent <= 0.5:
        raise ValueError("series diverges for exponent <= 1/2")
    lam = np.asarray(spectrum.lambdas)
    phi0 = np.asarray(spectrum.phi0)
    n_tail = lam.size
    if n_tail < N + 200:
        raise TailBoundError(f"need at least N+200={N + 200} modes, have {n_tail}")
    partial = float(np.sum(phi0[N:] ** 2 / lam[N:] ** exponent))
    c_sup = safety * float(np.max(np.abs(phi0)))
    scale = (math.pi**2 * spec.p_min) ** exponent
    rem = c_sup**2 / scale * (n_tail - 1) ** (1.0 - 2.0 * exponent) / (2.0 * exponent - 1.0)
    if rem > max_remainder_ratio * partial:
        raise TailBoundError(
            f"remainder bound {rem:.3e} exceeds {max_remainder_ratio:.0%} of partial sum "
            f"{partial:.3e} with {n_tail} modes"
        )
    return TailSum(partial + rem, partial, rem, n_tail, exponent)


def tail_constants(spec: OperatorSpec, N: int, spectrum: Optional[TraceSpectrum] = None,
                   max_modes: int = 200_000):
    """``(m_tail, m_tail34)``, growing the trace spectrum until both bounds hold."""
    n = max(N + 200, 1024) if spectrum is None else spectrum.lambdas.size
    while True:
        if spectrum is None or spectrum.lambdas.size < n:
            spectrum = trace_spectrum(spec, n)
        try:
            m1 = tail_mphi(spectrum, N, 1.0, spec)
            m34 = tail_mphi(spectrum, N, 0.75, spec)
            return m1, m34, spectrum
        except TailBoundError:
            if n >= max_modes:
                raise
            n = min(4 * n, max_modes)


# ---------------------------------------------------------------------------
# stability model


@dataclass(frozen=True)
class StabilityModel:
    """Finite-dimensional model ``dX/dt = F X + L_cal zeta (+ L_psi psi)``."""

    N0: int
    N: int
    A0: np.ndarray
    A1: np.ndarray
    B0: np.ndarray
    B1_tilde: np.ndarray
    C0: np.ndarray
    C1_tilde: np.ndarray
    K: np.ndarray
    L: np.ndarray
    F: np.ndarray
    L_cal: np.ndarray
    L_psi: np.ndarray
    K_tilde: np.ndarray
    E: np.ndarray
    r_a: float
    r_b: float
    a_norm_sq: float
    m_tail: float
    m_tail34: float
    lambda_next: float
    q_c: float
    delta: float
    k_phi: float
    includes_psi: bool

    @property
    def dim(self) -> int:
        return 2 * self.N

    def to_dict(self) -> dict:
        arr = lambda a: np.asarray(a).tolist()  # noqa: E731
        return {
            "N0": self.N0, "N": self.N,
            "A0": arr(self.A0), "A1": arr(self.A1), "B0": arr(self.B0),
            "B1_tilde": arr(self.B1_tilde), "C0": arr(self.C0), "C1_tilde": arr(self.C1_tilde),
            "K": arr(self.K), "L": arr(self.L), "F": arr(self.F),
            "L_cal": arr(self.L_cal), "L_psi": arr(self.L_psi),
            "K_tilde": arr(self.K_tilde), "E": arr(self.E),
            "r_a": self.r_a, "r_b": self.r_b, "a_norm_sq": self.a_norm_sq,
            "m_tail": self.m_tail, "m_tail34": self.m_tail34,
            "lambda_next": self.lambda_next, "q_c": self.q_c, "delta": self.delta,
            "k_phi": self.k_phi, "includes_psi": self.includes_psi,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StabilityModel":
        kw = dict(d)
        for key in ("A0", "A1", "B0", "B1_tilde", "C0", "C1_tilde", "K", "L", "F",
                    "L_cal", "L_psi", "K_tilde", "E"):
            kw[key] = np.asarray(d[key], dtype=float)
        return cls(**kw)


def spectral_abscissa(M: np.ndarray) -> float:
    return float(np.max(np.linalg.eigvals(M).real)) if M.size else -np.inf


def build_stability_model(spec: OperatorSpec, basis: SpectralBasis, lifting: LiftingData,
                          gains, includes_psi: bool = True, spectrum: Optional[TraceSpectrum] = None,
                          tails=None) -> StabilityModel:
    """Assemble F, the coupling columns, E and the tail constants.

    ``gains`` is a :class:`~rdobserver.synthesis.GainSet`.  For the linear
    design (``includes_psi=False``) the sector slope is taken as 1 and E
    has no psi column.  ``tails`` may carry precomputed
    ``(m_tail, m_tail34)`` values.
    """
    N0, N = gains.N0, gains.N
    if N < N0 + 1:
        raise ValueError(f"N={N} must be at least N0+1={N0 + 1}")
    if N + 1 > basis.n_modes:
        raise ValueError(f"basis has {basis.n_modes} modes, N+1={N + 1} needed")
    k_phi = gains.k_phi if includes_psi else 1.0
    delta = gains.delta
    lam = basis.lambdas
    q_c = spec.q_c
    K = np.asarray(gains.K, dtype=float).reshape(1, N0)
    L = np.asarray(gains.L, dtype=float).reshape(N0, 1)

    A0 = np.diag(-lam[:N0] + q_c)
    A1 = np.diag(-lam[N0:N] + q_c)
    B0 = lifting.beta_n[:N0].reshape(N0, 1)
    B1t = (lifting.beta_n[N0:N] / lam[N0:N]).reshape(N - N0, 1)
    C0 = basis.phi0[:N0].reshape(1, N0)
    C1t = (basis.phi0[N0:N] / np.sqrt(lam[N0:N])).reshape(1, N - N0)

    tail_rate = -lam[N0:] + q_c
    if np.any(tail_rate >= -delta):
        n_bad = int(np.flatnonzero(tail_rate >= -delta)[0]) + N0 + 1
        raise HurwitzError(f"mode {n_bad} has -lam+q_c={-lam[n_bad - 1] + q_c:.4f} >= -delta; N0 too small")
    for name, M in (("A0 + k_phi B0 K", A0 + k_phi * B0 @ K), ("A0 - L C0", A0 - L @ C0)):
        eig = np.linalg.eigvals(M)
        worst = eig[np.argmax(eig.real)]
        if worst.real >= -delta:
            raise HurwitzError(f"{name} has eigenvalue {worst:.6g} with real part >= -delta={-delta}")

    m = N - N0
    Z = np.zeros
    F = np.block([
        [A0 + k_phi * B0 @ K, L @ C0, Z((N0, m)), L @ C1t],
        [Z((N0, N0)), A0 - L @ C0, Z((N0, m)), -L @ C1t],
        [k_phi * B1t @ K, Z((m, N0)), A1, Z((m, m))],
        [Z((m, N0)), Z((m, N0)), Z((m, m)), A1],
    ])
    L_cal = np.vstack([L, -L, Z((2 * m, 1))])
    L_psi = np.vstack([B0, Z((N0, 1)), B1t, Z((m, 1))])
    K_tilde = np.hstack([K, Z((1, 2 * N - N0))])
    cols = [A0 + k_phi * B0 @ K, L @ C0, Z((N0, m)), L @ C1t, L]
    if includes_psi:
        cols.append(B0)
    E = K @ np.hstack(cols)

    r_a, r_b = tail_norms(lifting, N)
    if tails is None:
        m1, m34, _ = tail_constants(spec, N, spectrum)
        tails = (m1.value, m34.value)
    return StabilityModel(
        N0=N0, N=N, A0=A0, A1=A1, B0=B0, B1_tilde=B1t, C0=C0, C1_tilde=C1t, K=K, L=L,
        F=F, L_cal=L_cal, L_psi=L_psi, K_tilde=K_tilde, E=E, r_a=r_a, r_b=r_b,
        a_norm_sq=lifting.a_norm_sq, m_tail=float(tails[0]), m_tail34=float(tails[1]),
        lambda_next=float(lam[N]), q_c=q_c, delta=delta, k_phi=k_phi, includes_psi=includes_psi,
    )
