"""Closed-form phase-boundary formulas and the algebraic visit systems.

Everything here is deterministic algebra: the fluctuation criterion
F(p, lambda), the explicit lower/upper bound curves for the critical
blockade density, the quadratics pinning the visit probabilities in the
three regimes (one side saturated at 1, or both movers dying out), and
the fixed point p = F(p, lambda).

Functions accept exact rationals (``fractions.Fraction``) and then stay
exact wherever the algebra allows; square roots and bisection are carried
out in floats with explicit tolerances.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional, Union

from .model import AlphaTriple

Number = Union[Fraction, float, int]

FIXED_POINT_TOL = 1e-10
FORM_AGREEMENT_RTOL = 1e-12


def _is_exact(*xs) -> bool:
    return all(isinstance(x, (Fraction, int)) for x in xs)


def _half(exact: bool):
    return Fraction(1, 2) if exact else 0.5


def eval_F(p: Number, lam: Number, alpha: AlphaTriple) -> Number:
    """The fluctuation threshold function of (lambda, alpha).

    Computed as the max of the two saturation fractions, and re-derived in
    the shifted form 1/(4+ahat) + (2+ahat)/(4+ahat) * max(...); the two
    must agree to 12 significant digits (exactly, for rational inputs).
    The value does not depend on p; p is accepted so callers can phrase
    the fluctuation criterion p <= F(p, lambda) directly.
    """
    ar, al, ah = alpha.alpha_right, alpha.alpha_left, alpha.alpha_hat
    exact = _is_exact(lam, ar, al, ah)
    if exact:
        lam, ar, al, ah = Fraction(lam), Fraction(ar), Fraction(al), Fraction(ah)
    one = Fraction(1) if exact else 1.0

    d1 = lam * (2 + ah) + 1 + al - ar
    n1 = lam * (2 + ah) - ar
    d2 = (1 - lam) * (2 + ah) + 1 + ar - al
    n2 = (1 - lam) * (2 + ah) - al
    value = max(n1 / d1, n2 / d2)

    g = lam * (3 + ah) - 1 - ar
    rewritten = one / (4 + ah) + (2 + ah) / (4 + ah) * max(g / d1, -g / d2)
    if exact:
        if value != rewritten:
            raise AssertionError("the two closed forms disagree on exact input")
    else:
        scale = max(1.0, abs(float(value)))
        if abs(float(value) - float(rewritten)) > FORM_AGREEMENT_RTOL * scale:
            raise AssertionError(
                f"closed forms disagree beyond 1e-12: {value} vs {rewritten}"
            )
    return value


@dataclass
class BoundSet:
    """All closed-form bounds at one lambda (plus F when alpha is known).

    elementary_lower <= f_star_1 <= f_star_2 bound the fixation onset from
    below (f_star_2 valid for atomless spacings only), f_star_upper bounds
    it from above, and elementary_upper = 1/2 always fixates.
    """

    lam: Number
    elementary_lower: Number
    elementary_upper: Number
    f_star_1: Number
    f_star_2: Number
    f_star_upper: Number
    f_of_p: Optional[Number] = None

    def to_jsonable(self) -> dict:
        out = {
            "lambda": float(self.lam),
            "elementary_lower": float(self.elementary_lower),
            "elementary_upper": float(self.elementary_upper),
            "f_star_1": float(self.f_star_1),
            "f_star_2": float(self.f_star_2),
            "f_star_upper": float(self.f_star_upper),
        }
        if self.f_of_p is not None:
            out["F"] = float(self.f_of_p)
        return out


def eval_bound_functions(
    lam: Number, alpha: Optional[AlphaTriple] = None
) -> BoundSet:
    """Evaluate every closed-form bound curve at one lambda."""
    if not (0 < lam < 1):
        raise ValueError("lambda must lie in (0,1)")
    exact = _is_exact(lam)
    if exact:
        lam = Fraction(lam)
    zero = Fraction(0) if exact else 0.0
    fifth = Fraction(1, 5) if exact else 0.2
    quarter = Fraction(1, 4) if exact else 0.25

    left_walk = (1 - 2 * lam) / (2 - 2 * lam)
    right_walk = (2 * lam - 1) / (2 * lam)
    bounds = BoundSet(
        lam=lam,
        elementary_lower=max(left_walk, right_walk, zero),
        elementary_upper=_half(exact),
        f_star_1=max(left_walk, fifth, right_walk),
        f_star_2=max(left_walk, quarter, right_walk),
        f_star_upper=max((1 - lam) / (2 - lam), lam / (1 + lam)),
    )
    if alpha is not None:
        bounds.f_of_p = eval_F(zero, lam, alpha)
    return bounds


@dataclass
class QuadraticSolution:
    """One solved visit-probability quadratic.

    ``selected`` is the root in [0,1] picked by the sign conditions
    f(0) >= 0 >= f(1); when f(1) = 0 the unit root makes the selection
    ambiguous and ``degenerate`` is set instead of choosing silently.
    """

    coefficients: tuple
    roots: tuple
    selected: Optional[float]
    degenerate: bool
    f_at_0: Number
    f_at_1: Number

    def to_jsonable(self) -> dict:
        return {
            "coefficients": [float(c) for c in self.coefficients],
            "roots": [float(r) for r in self.roots],
            "selected": self.selected,
            "degenerate": self.degenerate,
            "f_at_0": float(self.f_at_0),
            "f_at_1": float(self.f_at_1),
        }


def _solve_quadratic(a, b, c):
    """Real roots of a x^2 + b x + c, ascending; handles the linear case."""
    if a == 0:
        if b == 0:
            return ()
        return (float(-c / b),)
    disc = float(b * b - 4 * a * c)
    if disc < 0:
        return ()
    s = math.sqrt(disc)
    r1 = (-float(b) - s) / (2 * float(a))
    r2 = (-float(b) + s) / (2 * float(a))
    return (min(r1, r2), max(r1, r2))


def _saturated_case(a, b, c) -> QuadraticSolution:
    roots = _solve_quadratic(a, b, c)
    f0 = c
    f1 = a + b + c
    degenerate = f1 == 0 or (not _is_exact(a, b, c) and abs(float(f1)) < 1e-14)
    selected = None
    in_unit = [r for r in roots if -1e-12 <= r <= 1 + 1e-12]
    if in_unit:
        selected = min(max(in_unit[0], 0.0), 1.0)
    return QuadraticSolution(
        coefficients=(a, b, c),
        roots=roots,
        selected=selected,
        degenerate=bool(degenerate),
        f_at_0=f0,
        f_at_1=f1,
    )


def solve_trichotomy_case1(p: Number, lam: Number, alpha: AlphaTriple):
    """Quadratic for the left-side visit probability when the right side
    saturates (every site is eventually visited from the left)."""
    ar, al = alpha.alpha_right, alpha.alpha_left
    return _saturated_case(
        p * ar,
        -(p * al + lam * (1 - p)),
        (1 - lam) * (1 - p),
    )


def solve_trichotomy_case2(p: Number, lam: Number, alpha: AlphaTriple):
    """Mirror of case 1: the left side saturates."""
    ar, al = alpha.alpha_right, alpha.alpha_left
    return _saturated_case(
        p * al,
        -(p * ar + (1 - lam) * (1 - p)),
        lam * (1 - p),
    )


@dataclass
class FluctuationSolution:
    """Joint solution of the two mover-extinction quadratics.

    Feasible means both roots land in (0,1); a root exactly at 1 flags the
    marginal case.  Infeasibility must coincide with the fluctuation
    criterion p <= F, which is reported alongside for cross-checking.
    """

    feasible: bool
    q_right: Optional[float]
    q_left: Optional[float]
    marginal: bool
    residuals: tuple
    F_value: float
    quadratics: dict = field(default_factory=dict)

    def to_jsonable(self) -> dict:
        return {
            "feasible": self.feasible,
            "q_right": self.q_right,
            "q_left": self.q_left,
            "marginal": self.marginal,
            "residuals": [float(r) for r in self.residuals],
            "F": self.F_value,
            "quadratics": {k: v.to_jsonable() for k, v in self.quadratics.items()},
        }


def solve_fluctuation_system(
    p: Number, lam: Number, alpha: AlphaTriple, root_tol: float = 1e-9
) -> FluctuationSolution:
    """Solve for (q_right, q_left) when both mover classes die out.

    Each quadratic is concave up and negative at 0, so it has exactly one
    positive root; the pair is feasible when both roots lie in (0,1].
    The returned pair is cross-validated against the bilinear system it
    was derived from.
    """
    ar, al = alpha.alpha_right, alpha.alpha_left
    quad_right = _saturated_case(
        p * al,
        ((1 - lam) * ar - lam * al) * (1 - p) + p,
        -(lam * (1 - p)),
    )
    quad_left = _saturated_case(
        p * ar,
        (lam * al - (1 - lam) * ar) * (1 - p) + p,
        -((1 - lam) * (1 - p)),
    )
    F_value = float(eval_F(p, lam, alpha))

    def positive_root(q: QuadraticSolution):
        pos = [r for r in q.roots if r > 0]
        return pos[0] if pos else None

    qr = positive_root(quad_right)
    ql = positive_root(quad_left)
    feasible = (
        qr is not None
        and ql is not None
        and qr <= 1 + root_tol
        and ql <= 1 + root_tol
    )
    marginal = feasible and (abs(qr - 1) <= root_tol or abs(ql - 1) <= root_tol)
    residuals = ()
    if feasible:
        qr = min(qr, 1.0)
        ql = min(ql, 1.0)
        p_, lam_ = float(p), float(lam)
        residuals = (
            p_ * float(al) * qr * ql + p_ * ql - (1 - lam_) * (1 - p_),
            p_ * float(ar) * qr * ql + p_ * qr - lam_ * (1 - p_),
        )
    return FluctuationSolution(
        feasible=feasible,
        q_right=qr if feasible else None,
        q_left=ql if feasible else None,
        marginal=marginal,
        residuals=residuals,
        F_value=F_value,
        quadratics={"right": quad_right, "left": quad_left},
    )


def fixed_point_pc(
    lam: Number,
    alpha: Union[AlphaTriple, Callable[[float], AlphaTriple]],
    tol: float = FIXED_POINT_TOL,
    scan_points: int = 1024,
) -> dict:
    """Solve p = F(p, lambda) by scanning for sign changes and bisecting.

    With a fixed alpha triple F is constant in p and the unique fixed
    point is F itself; a callable alpha (p-dependent ordering
    probabilities) is accepted for the general case.  All sign changes
    found on the scan grid are refined and reported; treating alpha as
    constant in p is an approximation and is flagged in the output.
    """
    if callable(alpha):
        alpha_at = alpha
        constant_alpha = False
    else:
        alpha_at = lambda _p: alpha
        constant_alpha = True

    def g(p: float) -> float:
        return float(eval_F(p, lam, alpha_at(p))) - p

    eps = 1e-9
    grid = [eps + (1 - 2 * eps) * i / scan_points for i in range(scan_points + 1)]
    values = [g(p) for p in grid]
    roots = []
    for (p0, v0), (p1, v1) in zip(zip(grid, values), zip(grid[1:], values[1:])):
        if v0 == 0:
            roots.append(p0)
            continue
        if v0 * v1 < 0:
            lo, hi = p0, p1
            flo = v0
            while hi - lo > tol:
                mid = (lo + hi) / 2
                fm = g(mid)
                if fm == 0:
                    lo = hi = mid
                    break
                if flo * fm < 0:
                    hi = mid
                else:
                    lo, flo = mid, fm
            roots.append((lo + hi) / 2)
    if values[-1] == 0:
        roots.append(grid[-1])
    if not roots:
        raise ValueError("no sign change of F(p) - p on (0,1)")
    return {
        "fixed_points": roots,
        "p_fixed": roots[0],
        "multiple": len(roots) > 1,
        "alpha_constant_in_p": constant_alpha,
        "caveat": (
            "alpha treated as constant in p; the true ordering probabilities "
            "vary with the parameters"
            if constant_alpha
            else None
        ),
    }
