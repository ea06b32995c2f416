"""Matrix-inequality certificates for the observer-based closed loop.

Four certificate families are supported:

* ``T1_H1_linear`` -- H1 stability, linear input,
* ``T2_L2_linear`` -- L2 stability, linear input,
* ``T3_H1_sector`` -- H1 stability, sector-bounded input nonlinearity,
* ``C4_L2_sector`` -- L2 stability, sector-bounded input nonlinearity.

With ``gamma = 1`` every constraint is affine in ``(P, beta, tau)`` and
affine or convex in ``alpha`` (through ``1/alpha``), so the search is a
single semidefinite program that maximizes a common margin ``t``.  The
returned parameters are then checked again with plain eigenvalue
computations, independently of the solver.
"""

from __future__ import annotations

import enum
import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .spectral import StabilityModel, build_stability_model, tail_constants
from .synthesis import GainSet, solve_shifted_lyapunov

SCHEMA_VERSION = 1

THETA1_TOL = 1e-9
THETA2_TOL = 1e-12
THETA3_TOL = 1e-12


class TheoremId(str, enum.Enum):
    T1_H1_linear = "t1"
    T2_L2_linear = "t2"
    T3_H1_sector = "t3"
    C4_L2_sector = "c4"

    @property
    def sector(self) -> bool:
        return self in (TheoremId.T3_H1_sector, TheoremId.C4_L2_sector)

    @property
    def l2(self) -> bool:
        return self in (TheoremId.T2_L2_linear, TheoremId.C4_L2_sector)

    @property
    def alpha_min(self) -> float:
        return {"t1": 1.0, "t2": 0.0, "t3": 1.5, "c4": 0.0}[self.value]

    @classmethod
    def parse(cls, value) -> "TheoremId":
        if isinstance(value, cls):
            return value
        v = str(value).strip().lower()
        for t in cls:
            if v in (t.value, t.name.lower()):
                return t
        raise ValueError(f"unknown theorem {value!r}; expected one of t1, t2, t3, c4")


@dataclass(frozen=True)
class SectorSpec:
    """Sector ``(k_phi - dk_phi)|x| <= sign(x) phi(x) <= (k_phi + dk_phi)|x|``."""

    k_phi: float
    dk_phi: float
    phi_deriv_bound: float

    def __post_init__(self):
        if not (0.0 < self.dk_phi < self.k_phi):
            raise ValueError(f"need 0 < dk_phi < k_phi, got dk_phi={self.dk_phi}, k_phi={self.k_phi}")
        if self.phi_deriv_bound <= 0:
            raise ValueError("phi_deriv_bound must be positive")

    def to_dict(self) -> dict:
        return {"k_phi": self.k_phi, "dk_phi": self.dk_phi, "phi_deriv_bound": self.phi_deriv_bound}

    @classmethod
    def from_dict(cls, d: dict) -> "SectorSpec":
        return cls(float(d["k_phi"]), float(d["dk_phi"]), float(d["phi_deriv_bound"]))


@dataclass
class ThetaBlocks:
    theta1: np.ndarray
    theta2: float
    theta3: Optional[float] = None


def _check_pair(model: StabilityModel, theorem: TheoremId, sector: Optional[SectorSpec]):
    if theorem.sector:
        if sector is None:
            raise ValueError(f"{theorem.name} needs a SectorSpec")
        if not model.includes_psi:
            raise ValueError(f"{theorem.name} needs a model built with includes_psi=True")
        if abs(sector.k_phi - model.k_phi) > 1e-12:
            raise ValueError("sector k_phi differs from the slope used to build the model")
    else:
        if sector is not None:
            raise ValueError(f"{theorem.name} takes no sector")
        if model.includes_psi:
            raise ValueError(f"{theorem.name} needs a linear model (includes_psi=False)")


def assemble_theta(model: StabilityModel, theorem, P, alpha: float, beta: float, gamma: float,
                   tau: float = 0.0, sector: Optional[SectorSpec] = None) -> ThetaBlocks:
    """Numerical Theta blocks for given certificate parameters.

    Returns
    -------
    ThetaBlocks
        ``theta1`` of size 2N+1 (linear) or 2N+2 (sector), the scalar
        ``theta2`` and, for the L2 variants, ``theta3``.
    """
    theorem = TheoremId.parse(theorem)
    _check_pair(model, theorem, sector)
    P = np.asarray(P, dtype=float)
    n = model.dim
    if P.shape != (n, n):
        raise ValueError(f"P has shape {P.shape}, model needs {(n, n)}")
    F, Lc, Kt, E = model.F, model.L_cal, model.K_tilde, model.E
    lam, qc, delta = model.lambda_next, model.q_c, model.delta
    KK = Kt.T @ Kt
    core = F.T @ P + P @ F + 2 * delta * P
    PL = P @ Lc
    if not theorem.sector:
        T = np.block([[core + alpha * gamma * model.r_a * KK, PL], [PL.T, np.array([[-beta]])]])
        T = T + alpha * gamma * model.r_b * (E.T @ E)
    else:
        kphi, dk, M = sector.k_phi, sector.dk_phi, sector.phi_deriv_bound
        PLp = P @ model.L_psi
        T11 = core + (alpha * gamma * kphi**2 * model.r_a + tau * dk**2) * KK
        T = np.block([
            [T11, PL, PLp],
            [PL.T, np.array([[-beta]]), np.zeros((1, 1))],
            [PLp.T, np.zeros((1, 1)), np.array([[alpha * gamma * model.r_a - tau]])],
        ])
        T = T + alpha * gamma * model.r_b * M**2 * (E.T @ E)
    T = 0.5 * (T + T.T)

    theta3 = None
    if theorem is TheoremId.T1_H1_linear:
        theta2 = 2 * gamma * (-(1 - 1 / alpha) * lam + qc + delta) + beta * model.m_tail
    elif theorem is TheoremId.T3_H1_sector:
        theta2 = 2 * gamma * (-(1 - 1.5 / alpha) * lam + qc + delta) + beta * model.m_tail
    else:
        shift = 1.0 / alpha if theorem is TheoremId.T2_L2_linear else 1.5 / alpha
        theta2 = 2 * gamma * (-lam + qc + delta + shift) + beta * model.m_tail34 * lam**0.75
        theta3 = 2 * gamma - beta * model.m_tail34 / lam**0.25
    return ThetaBlocks(T, float(theta2), None if theta3 is None else float(theta3))


# ---------------------------------------------------------------------------
# certificates


@dataclass
class Margins:
    lambda_max_theta1: float
    theta2: float
    theta3: Optional[float]
    min_eig_P: float
    alpha_ok: bool

    @property
    def feasible(self) -> bool:
        ok = (self.lambda_max_theta1 <= THETA1_TOL and self.theta2 <= THETA2_TOL
              and self.min_eig_P > 0 and self.alpha_ok)
        if self.theta3 is not None:
            ok = ok and self.theta3 >= -THETA3_TOL
        return bool(ok)

    def to_dict(self) -> dict:
        return {
            "lambda_max_theta1": self.lambda_max_theta1,
            "theta2": self.theta2,
            "theta3": self.theta3,
            "min_eig_P": self.min_eig_P,
            "alpha_ok": self.alpha_ok,
            "feasible": self.feasible,
        }


@dataclass
class FeasibilityCertificate:
    """Parameters ``(P, alpha, beta, gamma, tau)`` with their verified margins."""

    theorem: TheoremId
    P: np.ndarray
    alpha: float
    beta: float
    gamma: float
    tau: Optional[float]
    margins: Margins
    N: int
    delta: float
    sector: Optional[SectorSpec] = None
    method: str = "search"
    search_margin: Optional[float] = None
    info: dict = field(default_factory=dict)

    @property
    def feasible(self) -> bool:
        return self.margins.feasible

    def rescaled(self, gamma: float = 1.0) -> "FeasibilityCertificate":
        """Equivalent certificate at another ``gamma`` (P, beta, tau scale with gamma)."""
        s = gamma / self.gamma
        tau = None if self.tau is None else s * self.tau
        return FeasibilityCertificate(self.theorem, s * self.P, self.alpha, s * self.beta, gamma, tau,
                                      self.margins, self.N, self.delta, self.sector,
                                      self.method + "+rescaled", self.search_margin, dict(self.info))

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": "feasibility_certificate",
            "theorem": self.theorem.value,
            "N": self.N,
            "delta": self.delta,
            "sector": None if self.sector is None else self.sector.to_dict(),
            "alpha": self.alpha,
            "beta": self.beta,
            "gamma": self.gamma,
            "tau": self.tau,
            "P": self.P.tolist(),
            "margins": self.margins.to_dict(),
            "method": self.method,
            "search_margin": self.search_margin,
            "info": self.info,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeasibilityCertificate":
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported certificate schema_version {d.get('schema_version')!r}")
        m = d["margins"]
        margins = Margins(m["lambda_max_theta1"], m["theta2"], m["theta3"], m["min_eig_P"], m["alpha_ok"])
        sector = None if d.get("sector") is None else SectorSpec.from_dict(d["sector"])
        return cls(TheoremId.parse(d["theorem"]), np.asarray(d["P"], dtype=float), float(d["alpha"]),
                   float(d["beta"]), float(d["gamma"]), None if d["tau"] is None else float(d["tau"]),
                   margins, int(d["N"]), float(d["delta"]), sector, d.get("method", "search"),
                   d.get("search_margin"), d.get("info", {}))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "FeasibilityCertificate":
        return cls.from_dict(json.loads(text))


def compute_margins(model: StabilityModel, theorem, P, alpha, beta, gamma, tau=None,
                    sector: Optional[SectorSpec] = None) -> Margins:
    theorem = TheoremId.parse(theorem)
    P = np.asarray(P, dtype=float)
    blocks = assemble_theta(model, theorem, P, alpha, beta, gamma, 0.0 if tau is None else tau, sector)
    lmax = float(np.max(np.linalg.eigvalsh(blocks.theta1)))
    sym_err = float(np.max(np.abs(P - P.T))) if P.size else 0.0
    min_eig = float(np.min(np.linalg.eigvalsh(0.5 * (P + P.T))))
    if sym_err > 1e-9 * max(1.0, float(np.max(np.abs(P)))):
        min_eig = -np.inf  # an unsymmetric P is not a certificate
    alpha_ok = alpha > theorem.alpha_min and beta > 0 and gamma > 0
    if theorem.sector:
        alpha_ok = alpha_ok and tau is not None and tau > 0
    return Margins(lmax, blocks.theta2, blocks.theta3, min_eig, bool(alpha_ok))


def verify_certificate(cert: FeasibilityCertificate, model: StabilityModel) -> Margins:
    """Recompute the margins of ``cert`` against ``model`` from scratch."""
    if cert.N != model.N:
        raise ValueError(f"certificate is for N={cert.N}, model has N={model.N}")
    return compute_margins(model, cert.theorem, cert.P, cert.alpha, cert.beta, cert.gamma,
                           cert.tau, cert.sector)


# ---------------------------------------------------------------------------
# constructive recipes


def _recipe(theorem: TheoremId, N: int):
    if theorem is TheoremId.T1_H1_linear:
        return 2.0, math.sqrt(N), 1.0 / N
    if theorem is TheoremId.T3_H1_sector:
        return 2.0, math.sqrt(N), 1.0 / N
    # L2 variants
    return 1.0, N ** 0.125, N ** -0.25


def constructive_certificate(model: StabilityModel, theorem, sector: Optional[SectorSpec] = None
                             ) -> FeasibilityCertificate:
    """Certificate from the asymptotic recipes; margins are reported as found.

    ``P`` solves ``F^T P + P F + 2 delta P = -I``.  The sector variants
    use ``tau = 1 + 4 ||P||^2 ||L_psi||^2 + ||a||^2``.
    """
    theorem = TheoremId.parse(theorem)
    _check_pair(model, theorem, sector)
    P = solve_shifted_lyapunov(model.F, model.delta)
    alpha, beta, gamma = _recipe(theorem, model.N)
    tau = None
    if theorem.sector:
        MP = np.linalg.norm(P, 2)
        Mpsi = np.linalg.norm(model.L_psi)
        tau = 1.0 + 4 * MP**2 * Mpsi**2 + model.a_norm_sq
    margins = compute_margins(model, theorem, P, alpha, beta, gamma, tau, sector)
    return FeasibilityCertificate(theorem, P, alpha, beta, gamma, tau, margins, model.N,
                                  model.delta, sector, "constructive")


# ---------------------------------------------------------------------------
# semidefinite search


class _SearchProblem:
    """Parametrized SDP for one model; reused across sector widths."""

    def __init__(self, model: StabilityModel, theorem: TheoremId, fixed_alpha: Optional[float]):
        import cvxpy as cp

        self.cp = cp
        self.model = model
        self.theorem = theorem
        n = model.dim
        F, Lc, Kt, E = model.F, model.L_cal, model.K_tilde, model.E
        KK = Kt.T @ Kt
        EE = E.T @ E
        EE = 0.5 * (EE + EE.T)
        lam, qc, delta = model.lambda_next, model.q_c, model.delta

        P = cp.Variable((n, n), symmetric=True)
        beta = cp.Variable()
        t = cp.Variable()
        self.P, self.beta, self.t = P, beta, t
        if fixed_alpha is None:
            alpha = cp.Variable()
            inv_alpha = cp.inv_pos(alpha)
        else:
            alpha = cp.Constant(float(fixed_alpha))
            inv_alpha = 1.0 / float(fixed_alpha)
        self.alpha = alpha
        self.dk2 = cp.Parameter(nonneg=True, value=0.0)
        self.cE = cp.Parameter(nonneg=True, value=model.r_b)  # r_b M_phi^2 for sectors

        core = F.T @ P + P @ F + 2 * delta * P
        PL = P @ Lc
        one = np.ones((1, 1))
        cons = [P >> t * np.eye(n), beta >= t, t <= 1]
        if theorem.sector:
            tau = cp.Variable()
            self.tau = tau
            kphi = model.k_phi
            PLp = P @ model.L_psi
            T11 = core + (kphi**2 * model.r_a) * alpha * KK + self.dk2 * tau * KK
            T = cp.bmat([
                [T11, PL, PLp],
                [PL.T, -beta * one, 0 * one],
                [PLp.T, 0 * one, (model.r_a * alpha - tau) * one],
            ])
            T = T + self.cE * alpha * EE
            cons.append(tau >= t)
        else:
            self.tau = None
            T = cp.bmat([[core + model.r_a * alpha * KK, PL], [PL.T, -beta * one]])
            T = T + self.cE * alpha * EE
        m = T.shape[0]
        cons.append(0.5 * (T + T.T) << -t * np.eye(m))

        if theorem is TheoremId.T1_H1_linear:
            th2 = 2 * (-lam + qc + delta) + 2 * lam * inv_alpha + beta * model.m_tail
        elif theorem is TheoremId.T3_H1_sector:
            th2 = 2 * (-lam + qc + delta) + 3 * lam * inv_alpha + beta * model.m_tail
        else:
            c = 2.0 if theorem is TheoremId.T2_L2_linear else 3.0
            th2 = 2 * (-lam + qc + delta) + c * inv_alpha + beta * model.m_tail34 * lam**0.75
            cons.append(2 - beta * model.m_tail34 / lam**0.25 >= t)
        cons.append(th2 <= -t)
        if fixed_alpha is None:
            cons.append(alpha - theorem.alpha_min >= t)
        self.problem = cp.Problem(cp.Maximize(t), cons)

    def solve(self, sector: Optional[SectorSpec], solver: Optional[str] = None):
        if sector is not None:
            self.dk2.value = sector.dk_phi**2
            self.cE.value = self.model.r_b * sector.phi_deriv_bound**2
        order = [solver] if solver else ["CLARABEL", "SCS"]
        last = None
        for name in order:
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    self.problem.solve(solver=name)
            except Exception as exc:  # solver failure: try the next one
                last = exc
                continue
            if self.t.value is not None:
                return name
        raise RuntimeError(f"no SDP solver produced a solution ({last})")


def search_certificate(model: StabilityModel, theorem, sector: Optional[SectorSpec] = None,
                       alpha: Optional[float] = None, solver: Optional[str] = None,
                       problem: Optional[_SearchProblem] = None) -> FeasibilityCertificate:
    """Margin-maximizing certificate at ``gamma = 1``.

    Parameters
    ----------
    model : StabilityModel
    theorem : TheoremId or str
    sector : SectorSpec, optional
        Required for the sector variants.
    alpha : float, optional
        Fix alpha instead of optimizing it jointly.
    solver : str, optional
        cvxpy solver name; CLARABEL with SCS fallback by default.

    Returns
    -------
    FeasibilityCertificate
        Always returned; ``feasible`` reflects the independent eigenvalue
        check and ``search_margin`` the solver's best margin ``t`` (negative
        when the program has no strictly feasible point).
    """
    theorem = TheoremId.parse(theorem)
    _check_pair(model, theorem, sector)
    if problem is None:
        problem = _SearchProblem(model, theorem, alpha)
    used = problem.solve(sector, solver)
    t = float(problem.t.value)
    P = 0.5 * (problem.P.value + problem.P.value.T)
    a = float(problem.alpha.value)
    b = float(problem.beta.value)
    tau = None if problem.tau is None else float(problem.tau.value)
    margins = compute_margins(model, theorem, P, a, b, 1.0, tau, sector)
    info = {"solver": used, "status": problem.problem.status, "alpha_mode": "fixed" if alpha else "joint"}
    return FeasibilityCertificate(theorem, P, a, b, 1.0, tau, margins, model.N, model.delta,
                                  sector, "sdp", t, info)


def certify(model: StabilityModel, theorem, sector: Optional[SectorSpec] = None,
            **kw) -> FeasibilityCertificate:
    """Constructive recipe first, SDP search if the recipe is not feasible."""
    cert = constructive_certificate(model, theorem, sector)
    if cert.feasible:
        return cert
    return search_certificate(model, theorem, sector, **kw)


# ---------------------------------------------------------------------------
# scans


@dataclass
class ScanResult:
    N: Optional[int]
    certificate: Optional[FeasibilityCertificate]
    history: list

    def to_dict(self) -> dict:
        return {
            "N": self.N,
            "history": self.history,
            "certificate": None if self.certificate is None else self.certificate.to_dict(),
        }


def min_feasible_N(spec, basis, lifting, gains: GainSet, theorem, sector: Optional[SectorSpec] = None,
                   N_max: int = 20, N_min: Optional[int] = None, method: str = "search") -> ScanResult:
    """Ascending scan over N; stops at the first verified certificate.

    ``method`` is ``"search"`` (SDP) or ``"constructive"`` (recipes only).
    Returns ``ScanResult(N=None, ...)`` when nothing up to ``N_max`` works.
    """
    theorem = TheoremId.parse(theorem)
    N_min = gains.N0 + 1 if N_min is None else max(N_min, gains.N0 + 1)
    if N_max < N_min:
        raise ValueError(f"N_max={N_max} below the smallest admissible N={N_min}")
    spectrum = None
    history = []
    for N in range(N_min, N_max + 1):
        m1, m34, spectrum = tail_constants(spec, N, spectrum)
        model = build_stability_model(spec, basis, lifting, gains.with_N(N), includes_psi=theorem.sector,
                                      tails=(m1.value, m34.value))
        if method == "constructive":
            cert = constructive_certificate(model, theorem, sector)
        else:
            cert = search_certificate(model, theorem, sector)
        history.append({"N": N, "feasible": cert.feasible, "search_margin": cert.search_margin,
                        "lambda_max_theta1": cert.margins.lambda_max_theta1})
        if cert.feasible:
            return ScanResult(N, cert, history)
    return ScanResult(None, None, history)


@dataclass
class SectorSweepPoint:
    dk_max: float
    lower: float
    upper: float
    evaluations: int
    certificate: Optional[FeasibilityCertificate]

    def to_dict(self) -> dict:
        return {"dk_max": self.dk_max, "lower": self.lower, "upper": self.upper,
                "evaluations": self.evaluations}


class SectorInfeasibleError(RuntimeError):
    pass


def max_sector_size(model: StabilityModel, k_phi: float, phi_deriv_bound: float,
                    theorem=TheoremId.T3_H1_sector, resolution: float = 1e-3,
                    solver: Optional[str] = None) -> SectorSweepPoint:
    """Largest verified sector half-width by bisection on ``(0, k_phi)``.

    The SDP is compiled once for the model and only the width parameter
    changes between evaluations.  ``dk_max`` is the last verified width.
    """
    theorem = TheoremId.parse(theorem)
    if not theorem.sector:
        raise ValueError("max_sector_size needs a sector theorem")
    prob = _SearchProblem(model, theorem, None)

    def ok(dk):
        cert = search_certificate(model, theorem, SectorSpec(k_phi, dk, phi_deriv_bound),
                                  solver=solver, problem=prob)
        return cert.feasible, cert

    lo, hi = 0.0, k_phi
    evals = 0
    best = None
    first = resolution
    feas, cert = ok(first)
    evals += 1
    if not feas:
        raise SectorInfeasibleError(f"no certificate even at dk_phi={first}")
    lo, best = first, cert
    while hi - lo > resolution:
        mid = 0.5 * (lo + hi)
        feas, cert = ok(mid)
        evals += 1
        if feas:
            lo, best = mid, cert
        else:
            hi = mid
    return SectorSweepPoint(lo, lo, hi, evals, best)
