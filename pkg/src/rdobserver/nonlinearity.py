"""Odd C1 sector nonlinearities built from cubic Hermite pieces.

A nonlinearity is stored by its knots on ``x >= 0`` (abscissa, value,
slope), extended by oddness to ``x < 0`` and by a straight line beyond the
last knot.  All checks are exact per cubic piece, with a dense sample
added as a cross-check.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from .feasibility import SectorSpec

SCHEMA_VERSION = 1

# Default shape on x >= 0 for k_phi = 1, dk_phi = 0.5: a linear start
# just above the lower sector line, a steep rise, a flat plateau, a
# descending stretch and a climb back to the 0.5 x tail at x = 6.
DEFAULT_KNOTS = (
    # x,    phi,   phi'
    (0.0, 0.0, 0.55),
    (0.9, 0.495, 0.55),
    (1.2, 1.3, 9.0),
    (1.45, 2.0, 0.0),
    (2.6, 2.0, 0.0),
    (3.4, 1.8, 0.0),
    (4.6, 2.45, 0.5),
    (6.0, 3.0, 0.5),
)
DEFAULT_K_PHI = 1.0
DEFAULT_DK_PHI = 0.5
PLATEAU = (1.45, 2.6)
DESCENT = (2.6, 3.4)


class SectorConstructionError(ValueError):
    pass


def _piece_extrema(spline: CubicHermiteSpline, shift_slope: float = 0.0, deriv: int = 0):
    """Exact (min, argmin, max, argmax) of ``spline^(deriv)(x) - shift_slope*x`` over its knots."""
    pp = spline.derivative(deriv) if deriv else spline
    xs = spline.x
    lo, lo_x, hi, hi_x = np.inf, None, -np.inf, None
    for j in range(xs.size - 1):
        a, b = xs[j], xs[j + 1]
        c = pp.c[:, j].copy()  # decreasing powers of (x - a)
        if deriv == 0 and shift_slope:
            c[-2] -= shift_slope
            c[-1] -= shift_slope * a
        poly = np.poly1d(c)
        cand = [0.0, b - a]
        for r in poly.deriv().r:
            if abs(r.imag) < 1e-14 and 0.0 < r.real < b - a:
                cand.append(r.real)
        vals = [float(poly(s)) for s in cand]
        i, k = int(np.argmin(vals)), int(np.argmax(vals))
        if vals[i] < lo:
            lo, lo_x = vals[i], a + cand[i]
        if vals[k] > hi:
            hi, hi_x = vals[k], a + cand[k]
    return lo, lo_x, hi, hi_x


@dataclass(frozen=True, eq=False)
class SectorNonlinearity:
    """Odd piecewise-cubic ``phi`` with linear tails.

    Attributes
    ----------
    knots : ndarray, shape (m, 3)
        Rows ``(x, phi(x), phi'(x))`` for ``0 = x_0 < ... < x_{m-1}``.
    k_phi, dk_phi : float
        Sector the function was built for (``dk_phi = 0`` for a line).
    """

    knots: np.ndarray
    k_phi: float
    dk_phi: float

    def __post_init__(self):
        kn = np.asarray(self.knots, dtype=float)
        object.__setattr__(self, "knots", kn)
        if kn.ndim != 2 or kn.shape[1] != 3 or kn.shape[0] < 2:
            raise SectorConstructionError("knots must be an (m >= 2, 3) array")
        if kn[0, 0] != 0.0 or kn[0, 1] != 0.0:
            raise SectorConstructionError("first knot must be (0, 0, slope)")
        if np.any(np.diff(kn[:, 0]) <= 0):
            raise SectorConstructionError("knot abscissae must increase")
        object.__setattr__(self, "_spline", CubicHermiteSpline(kn[:, 0], kn[:, 1], kn[:, 2]))

    # evaluation -----------------------------------------------------------

    @property
    def x_end(self) -> float:
        return float(self.knots[-1, 0])

    @property
    def tail_slope(self) -> float:
        return float(self.knots[-1, 2])

    @property
    def tail_offset(self) -> float:
        x, y, d = self.knots[-1]
        return float(y - d * x)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        ax = np.abs(x)
        inner = self._spline(np.minimum(ax, self.x_end))
        out = np.where(ax <= self.x_end, inner, self.tail_slope * ax + self.tail_offset)
        out = np.sign(x) * out
        return out if out.ndim else float(out)

    def eval(self, x):
        return self(x)

    def deriv(self, x):
        x = np.asarray(x, dtype=float)
        ax = np.abs(x)
        inner = self._spline(np.minimum(ax, self.x_end), 1)
        out = np.where(ax <= self.x_end, inner, self.tail_slope)
        return out if out.ndim else float(out)

    @property
    def breakpoints(self) -> np.ndarray:
        xs = self.knots[:, 0]
        return np.concatenate([-xs[:0:-1], xs])

    @property
    def phi_deriv_bound(self) -> float:
        """Exact ``sup |phi'|`` (maximum over pieces and the tail slope)."""
        lo, _, hi, _ = _piece_extrema(self._spline, deriv=1)
        return float(max(abs(lo), abs(hi), abs(self.tail_slope)))

    def sector_spec(self, phi_deriv_bound: Optional[float] = None) -> SectorSpec:
        return SectorSpec(self.k_phi, self.dk_phi,
                          self.phi_deriv_bound if phi_deriv_bound is None else phi_deriv_bound)

    @property
    def spec(self) -> SectorSpec:
        return self.sector_spec()

    # serialization --------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": "sector_nonlinearity",
            "k_phi": self.k_phi,
            "dk_phi": self.dk_phi,
            "knots": self.knots.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SectorNonlinearity":
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema_version {d.get('schema_version')!r}")
        return cls(np.asarray(d["knots"], dtype=float), float(d["k_phi"]), float(d["dk_phi"]))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "SectorNonlinearity":
        return cls.from_dict(json.loads(text))


# ---------------------------------------------------------------------------
# validation


@dataclass
class SectorReport:
    k_phi: float
    dk_phi: float
    lower_margin: float      # min over x > 0 of phi(x) - (k - dk) x
    upper_margin: float      # min over x > 0 of (k + dk) x - phi(x)
    psi_margin: float        # min over grid of dk^2 x^2 - psi(x)^2
    knot_margin: float       # min slope distance phi(x)/x to the sector lines at interior knots
    two_sided_pass_grid: bool
    psi_pass_grid: bool
    deriv_sup: float
    tail_ok: bool
    odd: bool
    tol: float

    @property
    def passed(self) -> bool:
        return (self.lower_margin >= -self.tol and self.upper_margin >= -self.tol
                and self.two_sided_pass_grid and self.psi_pass_grid and self.tail_ok and self.odd)

    @property
    def forms_agree(self) -> bool:
        return self.two_sided_pass_grid == self.psi_pass_grid

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["passed"] = self.passed
        return d


def validate_sector(phi: SectorNonlinearity, k_phi: Optional[float] = None, dk_phi: Optional[float] = None,
                    n_grid: int = 20001, half_width: Optional[float] = None, tol: float = 1e-12) -> SectorReport:
    """Check ``(k - dk)|x| <= sign(x) phi(x) <= (k + dk)|x|``.

    Exact per-piece extrema on the knot range, an analytic check of the
    linear tail and a dense symmetric grid (default ``[-120, 120]``) on
    which the two-sided form and ``psi(x)^2 <= dk^2 x^2`` are both tested.
    Report only; nothing is raised.
    """
    k = phi.k_phi if k_phi is None else float(k_phi)
    dk = phi.dk_phi if dk_phi is None else float(dk_phi)
    lo_s, hi_s = k - dk, k + dk
    lower, _, _, _ = _piece_extrema(phi._spline, lo_s)
    _, _, upper_max, _ = _piece_extrema(phi._spline, hi_s)
    upper = -upper_max
    # tail: s x + c on x >= x_end must stay inside; linear, so endpoints and slope decide
    s, c, xe = phi.tail_slope, phi.tail_offset, phi.x_end
    tail_ok = (lo_s - tol <= s <= hi_s + tol) and (s * xe + c >= lo_s * xe - tol) and (s * xe + c <= hi_s * xe + tol)
    if c < -tol and s <= lo_s + tol:
        tail_ok = False
    if c > tol and s >= hi_s - tol:
        tail_ok = False

    L = 20.0 * max(phi.x_end, 1.0) if half_width is None else half_width
    x = np.linspace(-L, L, n_grid)
    y = phi(x)
    ax = np.abs(x)
    sx = np.sign(x) * y
    scale = 1.0 + ax
    two = bool(np.all(sx >= lo_s * ax - tol * scale) and np.all(sx <= hi_s * ax + tol * scale))
    psi = y - k * x
    pm = dk**2 * x**2 - psi**2
    psi_ok = bool(np.all(pm >= -tol * scale**2 * (1 + k + dk)))
    odd = bool(np.max(np.abs(phi(-x) + y)) <= 1e-12 * (1 + np.max(np.abs(y))))
    inner = phi.knots[1:-1]
    if inner.size:
        ratio = inner[:, 1] / inner[:, 0]
        knot_margin = float(min(np.min(ratio - lo_s), np.min(hi_s - ratio)))
    else:
        knot_margin = float("inf")
    return SectorReport(k, dk, float(lower), float(upper), float(np.min(pm)), knot_margin, two, psi_ok,
                        phi.phi_deriv_bound, bool(tail_ok), odd, tol)


# ---------------------------------------------------------------------------
# constructors


def _rescaled_knots(knots: np.ndarray, k: float, r: float) -> np.ndarray:
    out = knots.copy()
    x = knots[:, 0]
    out[:, 1] = k * x + r * (knots[:, 1] - k * x)
    out[:, 2] = k + r * (knots[:, 2] - k)
    return out


def make_default_phi(k_phi: float = DEFAULT_K_PHI, dk_phi: float = DEFAULT_DK_PHI) -> SectorNonlinearity:
    """Default odd nonlinearity for the sector ``(k_phi, dk_phi)``.

    The reference knots (``DEFAULT_KNOTS``, built for ``k_phi = 1``,
    ``dk_phi = 0.5``) are mapped affinely about the center line, so the
    plateau, the descending stretch and the ``(k_phi - dk_phi) x`` tails
    are kept for every admissible pair.
    """
    if not (0.0 < dk_phi < k_phi):
        raise ValueError(f"need 0 < dk_phi < k_phi, got {dk_phi}, {k_phi}")
    base = np.array(DEFAULT_KNOTS, dtype=float)
    # reference shape lives in the (1, 0.5) sector; scale vertically by k_phi first
    base[:, 1:] *= k_phi
    kn = _rescaled_knots(base, k_phi, (dk_phi / k_phi) / DEFAULT_DK_PHI)
    phi = SectorNonlinearity(kn, k_phi, dk_phi)
    rep = validate_sector(phi)
    if not rep.passed or rep.knot_margin < 1e-3 * dk_phi:
        raise SectorConstructionError(f"default knots violate the sector: {rep.to_dict()}")
    return phi


def linear_phi(k: float) -> SectorNonlinearity:
    """``phi(x) = k x``; passes the sector test for any ``dk_phi > 0``."""
    if k <= 0:
        raise ValueError("k must be positive")
    return SectorNonlinearity(np.array([[0.0, 0.0, k], [1.0, k, k]]), float(k), 0.0)


def rescale_sector(phi: SectorNonlinearity, new_dk: float) -> SectorNonlinearity:
    """Stretch ``phi - k_phi x`` by ``new_dk / dk_phi`` at every knot.

    Values and slopes are mapped by the same affine rule, so the result is
    again C1 and odd, with tails ``(k_phi - new_dk) x`` for the default
    shape.
    """
    if not (0.0 < new_dk < phi.k_phi):
        raise ValueError(f"need 0 < new_dk < k_phi={phi.k_phi}")
    if phi.dk_phi <= 0:
        raise ValueError("cannot rescale a nonlinearity with zero sector width")
    r = new_dk / phi.dk_phi
    out = SectorNonlinearity(_rescaled_knots(phi.knots, phi.k_phi, r), phi.k_phi, new_dk)
    rep = validate_sector(out)
    if not rep.passed:
        raise SectorConstructionError(f"rescaled nonlinearity violates its sector: {rep.to_dict()}")
    return out
