"""Estimator-style front end tying the stages together.

>>> ctrl = ReactionDiffusionController(q_tilde=-3.0, N=3).fit()
>>> round(float(ctrl.gains_.K[0, 0]), 4)
-0.825
"""

from __future__ import annotations

import math
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator

from .feasibility import (FeasibilityCertificate, SectorSpec, TheoremId, certify, min_feasible_N,
                          search_certificate)
from .nonlinearity import SectorNonlinearity, make_default_phi
from .simulator import SimConfig, Trajectory, simulate_closed_loop
from .spectral import build_stability_model, lifting_coefficients, tail_constants
from .sturm_liouville import OperatorSpec, as_coefficient, closed_form_basis, solve_eigenproblem
from .synthesis import select_qc, synthesize_gains
from .validation import (check_int, check_is_fitted, check_poles, check_scalar, check_theta1,
                         check_theta2)


class ReactionDiffusionController(BaseEstimator):
    """Observer-based boundary controller for a 1-D reaction-diffusion plant.

    ``fit`` takes no data: it computes the eigenbasis, the lifting
    coefficients and the gains from the constructor parameters.

    Parameters
    ----------
    theta1, theta2 : float
        Boundary angles.
    p, q_tilde : float or Coefficient
        Diffusion and reaction coefficients.
    q_c : float, optional
        Reaction shift; chosen by :func:`~rdobserver.synthesis.select_qc` if None.
    delta : float
        Target decay rate.
    poles : sequence of float
        Closed-loop poles for both feedback and observer.
    N : int
        Observer dimension.
    N0 : int, optional
        Modes under feedback; computed from delta if None.
    k_phi : float
        Center slope of the input nonlinearity.
    n_modes, grid_resolution : int
        Eigenbasis size and finite-difference grid.
    method : {"numeric", "closed-form"}
        Eigenbasis source (closed form needs constant coefficients).

    Attributes
    ----------
    spec_, basis_, lifting_, gains_
    """

    def __init__(self, theta1=math.pi / 2, theta2=0.0, p=1.0, q_tilde=-3.0, q_c=None, delta=0.3,
                 poles=(-1.3,), N=3, N0=None, k_phi=1.0, n_modes=64, grid_resolution=2001,
                 method="numeric"):
        self.theta1 = theta1
        self.theta2 = theta2
        self.p = p
        self.q_tilde = q_tilde
        self.q_c = q_c
        self.delta = delta
        self.poles = poles
        self.N = N
        self.N0 = N0
        self.k_phi = k_phi
        self.n_modes = n_modes
        self.grid_resolution = grid_resolution
        self.method = method

    def _validate(self):
        check_theta1(self.theta1)
        check_theta2(self.theta2)
        check_scalar(self.delta, "delta", lo=0.0, lo_open=True)
        check_poles(self.poles, self.delta)
        check_int(self.N, "N", lo=2)
        check_int(self.n_modes, "n_modes", lo=self.N + 1)
        check_scalar(self.k_phi, "k_phi", lo=0.0, lo_open=True)
        if self.method not in ("numeric", "closed-form"):
            raise ValueError(f"method must be 'numeric' or 'closed-form', got {self.method!r}")

    def fit(self, X=None, y=None):
        self._validate()
        qt = as_coefficient(self.q_tilde)
        q_c = select_qc(qt)[1] if self.q_c is None else float(self.q_c)
        self.spec_ = OperatorSpec(self.theta1, self.theta2, self.p, qt, q_c, self.grid_resolution)
        if self.method == "closed-form":
            self.basis_ = closed_form_basis(self.spec_, self.n_modes)
        else:
            self.basis_ = solve_eigenproblem(self.spec_, self.n_modes)
        self.lifting_ = lifting_coefficients(self.spec_, self.basis_)
        self.gains_ = synthesize_gains(self.spec_, self.basis_, self.lifting_.beta_n, self.delta,
                                       self.N, self.poles, self.k_phi, self.N0)
        self._tails = {}
        return self

    # ------------------------------------------------------------------

    def model(self, N: Optional[int] = None, sector: bool = True):
        check_is_fitted(self, ("gains_",))
        N = self.gains_.N if N is None else int(N)
        if N not in self._tails:
            m1, m34, _ = tail_constants(self.spec_, N)
            self._tails[N] = (m1.value, m34.value)
        return build_stability_model(self.spec_, self.basis_, self.lifting_, self.gains_.with_N(N),
                                     includes_psi=sector, tails=self._tails[N])

    def certify(self, theorem="t3", sector: Optional[SectorSpec] = None, N: Optional[int] = None,
                search: bool = True) -> FeasibilityCertificate:
        """Certificate for the fitted gains; the SDP search is used when ``search``."""
        th = TheoremId.parse(theorem)
        if th.sector and sector is None:
            sector = SectorSpec(self.k_phi, 0.5 * self.k_phi, 9.02 * self.k_phi)
        md = self.model(N, th.sector)
        if search:
            return search_certificate(md, th, sector if th.sector else None)
        return certify(md, th, sector if th.sector else None)

    def min_feasible_N(self, theorem="t3", sector: Optional[SectorSpec] = None, N_max: int = 20):
        check_is_fitted(self, ("gains_",))
        th = TheoremId.parse(theorem)
        return min_feasible_N(self.spec_, self.basis_, self.lifting_, self.gains_, th,
                              sector if th.sector else None, N_max)

    def simulate(self, phi: Optional[SectorNonlinearity] = None, config: Optional[SimConfig] = None,
                 linear: bool = False) -> Trajectory:
        """Closed-loop run; ``phi`` defaults to the reference nonlinearity."""
        check_is_fitted(self, ("gains_",))
        if phi is None and not linear:
            phi = make_default_phi(self.k_phi, 0.5 * self.k_phi)
        return simulate_closed_loop(self.spec_, self.basis_, self.gains_, None if linear else phi,
                                    config, self.lifting_)

    def predict(self, X) -> np.ndarray:
        """Control ``u = K Zhat^{N0}`` for observer states given as rows of ``X``."""
        check_is_fitted(self, ("gains_",))
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] < self.gains_.N0:
            raise ValueError(f"rows must hold at least N0={self.gains_.N0} observer states")
        return X[:, : self.gains_.N0] @ self.gains_.K.ravel()
