"""Constitutive laws, caloric integrals, and the temperature truncation family.

The freezing model couples temperature, relative volume increment and
liquid fraction through a small set of constitutive functions:

* ``c(chi)``       -- dimensionless specific-heat factor of the phase mix,
* ``c1(theta)``    -- caloric density; its integrals give the internal
  energy density ``e1``, the entropy density ``s1`` and the free energy
  density ``f1 = e1 - theta*s1``,
* ``lam(chi)``     -- elastic modulus of the phase mix (non-increasing:
  ice is stiffer than water),
* ``kappa(chi)``   -- heat conductivity,
* ``gamma(theta)`` -- phase relaxation coefficient,
* ``h(x)``         -- boundary heat-transfer weight.

All caloric functions are extended by zero for non-positive temperature.
The solver never relies on negative-temperature values; the extension
only keeps every formula total.

A :class:`TruncationFamily` caps the caloric functions above a level
``B(R)`` so that every nonlinearity the time stepper sees is globally
Lipschitz.  A healthy run never reaches the cap; diagnostics check that
empirically (``max theta < B(R)``).

Model constants are normalized: latent heat 2, transition temperature 1,
and unit expansion/pressure/viscosity/density coefficients.  The solver
formulas bake these values in, so they are frozen (attempting to change
them is a configuration error); the container elasticity ``K_Gamma``,
effective gravity ``g`` and reference height ``zeta_Gamma`` stay free.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

__all__ = [
    "Constants",
    "HypothesisBounds",
    "PiecewisePoly",
    "CaloricForms",
    "MaterialModel",
    "TruncationFamily",
    "adaptive_simpson",
    "caloric_e1",
    "caloric_s1",
    "caloric_f1",
    "caloric_E2",
    "truncate_family",
    "validate_hypothesis",
    "make_material",
    "reference_material",
    "builtin_material",
    "estimate_bounds",
    "BUILTIN_MATERIALS",
]


# ---------------------------------------------------------------------------
# constants


_NORMALIZED = {"L": 2.0, "theta_c": 1.0, "alpha": 1.0, "beta": 1.0,
               "nu": 1.0, "rho0": 1.0}


@dataclass(frozen=True)
class Constants:
    """Model constants.  The first six are normalized and frozen."""

    L: float = 2.0            # latent heat
    theta_c: float = 1.0      # transition temperature
    alpha: float = 1.0        # relative expansion on freezing
    beta: float = 1.0         # thermal pressure coefficient
    nu: float = 1.0           # volume viscosity
    rho0: float = 1.0         # reference density
    g: float = 0.0            # effective gravity
    zeta_Gamma: float = 0.0   # elastic reference height of the container
    K_Gamma: float = 0.0      # container stiffness (0 = rigid reference)
    theta_star: float = 0.5   # lower data bound theta_*
    theta_sup: float = 1.5    # upper data bound theta^*

    def __post_init__(self):
        for name, value in _NORMALIZED.items():
            if getattr(self, name) != value:
                raise ValueError(
                    f"constant {name} is normalized to {value} and baked into "
                    f"the solver formulas; got {getattr(self, name)}")
        if not (0.0 < self.theta_star <= self.theta_sup):
            raise ValueError("data bounds must satisfy 0 < theta_star <= theta_sup")
        if self.K_Gamma < 0.0:
            raise ValueError("K_Gamma must be >= 0")


@dataclass(frozen=True)
class HypothesisBounds:
    """Declared structural constants of a material.

    ``validate_hypothesis`` checks the sampled constitutive functions
    against these declarations.
    """

    c_low: float              # c(chi) >= c_low > 0
    c1_low: float             # c1(theta) >= c1_low for theta >= 1
    cprime_low: float         # c'(chi) >= cprime_low > 0
    cprime_high: float        # c'(chi) <= cprime_high
    lambda_low: float         # lam(chi) >= lambda_low > 0
    lambda_high: float        # lam(chi) <= lambda_high
    lambda_prime_max: float   # lam'(chi) >= -lambda_prime_max, lam' <= 0
    kappa_low: float          # kappa(chi) >= kappa_low > 0
    gamma_low: float          # gamma(theta) >= gamma_low > 0


# ---------------------------------------------------------------------------
# piecewise polynomials (the config-level material description)


class PiecewisePoly:
    """Piecewise polynomial with ascending-power coefficients per piece.

    Piece ``i`` is valid on ``[breaks[i], breaks[i+1])``; the last piece
    extends to ``+inf``.  Below ``breaks[0]`` evaluation clamps to the
    domain start (callers that need a zero extension wrap it).
    """

    def __init__(self, breaks: Sequence[float], coeffs: Sequence[Sequence[float]]):
        self.breaks = [float(b) for b in breaks]
        self.coeffs = [np.asarray(c, dtype=float) for c in coeffs]
        if len(self.breaks) != len(self.coeffs):
            raise ValueError("need one coefficient row per break")
        if not self.breaks:
            raise ValueError("need at least one piece")
        if any(b2 <= b1 for b1, b2 in zip(self.breaks, self.breaks[1:])):
            raise ValueError("breaks must be strictly increasing")
        if any(c.ndim != 1 or c.size == 0 for c in self.coeffs):
            raise ValueError("coefficient rows must be non-empty 1-d sequences")

    def _piece_index(self, x):
        idx = np.searchsorted(self.breaks, x, side="right") - 1
        return np.clip(idx, 0, len(self.breaks) - 1)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        xc = np.maximum(x, self.breaks[0])
        idx = self._piece_index(xc)
        out = np.zeros_like(xc)
        for i, c in enumerate(self.coeffs):
            m = idx == i
            if np.any(m):
                out[m] = np.polynomial.polynomial.polyval(xc[m], c)
        return out if out.ndim else float(out)

    def derivative(self) -> "PiecewisePoly":
        dcoeffs = []
        for c in self.coeffs:
            if c.size == 1:
                dcoeffs.append(np.zeros(1))
            else:
                dcoeffs.append(c[1:] * np.arange(1, c.size))
        return PiecewisePoly(self.breaks, dcoeffs)

    def antiderivative(self) -> "PiecewisePoly":
        """Antiderivative vanishing at ``breaks[0]``, continuous across breaks."""
        acoeffs = []
        consts = []
        running = 0.0
        for i, c in enumerate(self.coeffs):
            a = np.concatenate([[0.0], c / np.arange(1, c.size + 1)])
            b = self.breaks[i]
            # shift so the piece starts at the running value
            start = np.polynomial.polynomial.polyval(b, a)
            a[0] = running - start
            acoeffs.append(a)
            consts.append(a[0])
            if i + 1 < len(self.breaks):
                running = np.polynomial.polynomial.polyval(self.breaks[i + 1], a)
        return PiecewisePoly(self.breaks, acoeffs)

    def to_dict(self):
        return {"breaks": list(self.breaks),
                "coeffs": [list(map(float, c)) for c in self.coeffs]}


class _LogPoly:
    """Antiderivative of ``poly(x)/x``: per-piece ``k*ln(x) + poly + const``."""

    def __init__(self, pp: PiecewisePoly):
        if pp.breaks[0] < 0:
            raise ValueError("caloric density must start at 0")
        self.breaks = list(pp.breaks)
        self.logk = []
        self.pcoeffs = []
        consts = []
        running = 0.0
        for i, c in enumerate(pp.coeffs):
            a0 = c[0]
            if i == 0 and self.breaks[0] == 0.0 and a0 != 0.0:
                raise ValueError(
                    "caloric density has a nonzero constant term at 0; the "
                    "entropy integral diverges")
            a = np.concatenate([[0.0], c[1:] / np.arange(1, c.size)]) if c.size > 1 \
                else np.zeros(1)
            b = self.breaks[i]
            if b == 0.0:
                # first piece starts exactly at 0: no log term, poly vanishes
                a[0] = running
            else:
                start = np.polynomial.polynomial.polyval(b, a) + a0 * math.log(b)
                a[0] = running - start
            self.logk.append(float(a0))
            self.pcoeffs.append(a)
            consts.append(a[0])
            if i + 1 < len(self.breaks):
                nb = self.breaks[i + 1]
                running = (np.polynomial.polynomial.polyval(nb, a)
                           + self.logk[i] * math.log(nb))
        self._consts = consts

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        xc = np.maximum(x, self.breaks[0])
        idx = np.clip(np.searchsorted(self.breaks, xc, side="right") - 1,
                      0, len(self.breaks) - 1)
        out = np.zeros_like(xc)
        for i, a in enumerate(self.pcoeffs):
            m = idx == i
            if np.any(m):
                val = np.polynomial.polynomial.polyval(xc[m], a)
                if self.logk[i] != 0.0:
                    val = val + self.logk[i] * np.log(xc[m])
                out[m] = val
        return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# quadrature fallback


def adaptive_simpson(f, a, b, tol=1e-12, max_depth=48):
    """Adaptive Simpson quadrature of a scalar function on [a, b]."""
    a, b = float(a), float(b)
    if a == b:
        return 0.0
    fa, fm, fb = f(a), f(0.5 * (a + b)), f(b)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    return _simpson_rec(f, a, b, fa, fm, fb, whole, tol, max_depth)


def _simpson_rec(f, a, b, fa, fm, fb, whole, tol, depth):
    m = 0.5 * (a + b)
    lm, rm = 0.5 * (a + m), 0.5 * (m + b)
    flm, frm = f(lm), f(rm)
    left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
    right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
    err = left + right - whole
    if depth <= 0 or abs(err) <= 15.0 * tol:
        return left + right + err / 15.0
    half = 0.5 * tol
    return (_simpson_rec(f, a, m, fa, flm, fm, left, half, depth - 1)
            + _simpson_rec(f, m, b, fm, frm, fb, right, half, depth - 1))


# ---------------------------------------------------------------------------
# material model


@dataclass(frozen=True)
class CaloricForms:
    """Closed-form caloric integrals (zero-extended for theta <= 0).

    ``E2`` is the second antiderivative of the caloric density (the
    antiderivative of ``e1``), used by the damped Newton line search.
    """

    e1: Callable
    s1: Callable
    E2: Callable


@dataclass(frozen=True)
class MaterialModel:
    name: str
    c: Callable
    c_prime: Callable
    c_second: Callable
    c1: Callable
    lam: Callable
    lam_prime: Callable
    lam_second: Callable
    kappa: Callable
    gamma: Callable
    h: Callable
    constants: Constants
    bounds: HypothesisBounds
    forms: Optional[CaloricForms] = None
    descriptor: dict = field(default_factory=dict)

    def with_constants(self, constants: Constants) -> "MaterialModel":
        return replace(self, constants=constants)


def _const_fn(v):
    v = float(v)
    return lambda x: np.full_like(np.asarray(x, dtype=float), v) \
        if np.ndim(x) else v


def _fd_derivative(f, delta=1e-6):
    def d(x):
        return (np.asarray(f(np.asarray(x, float) + delta))
                - np.asarray(f(np.asarray(x, float) - delta))) / (2.0 * delta)
    return d


def _as_fn(spec):
    """Normalize a constitutive input into (f, f', f'', descriptor)."""
    if isinstance(spec, PiecewisePoly):
        d1 = spec.derivative()
        d2 = d1.derivative()
        return spec, d1, d2, {"piecewise": spec.to_dict()}
    if isinstance(spec, (int, float)):
        z = _const_fn(0.0)
        return _const_fn(spec), z, z, {"const": float(spec)}
    if callable(spec):
        d1 = _fd_derivative(spec)
        d2 = _fd_derivative(d1, 1e-4)
        return spec, d1, d2, {"callable": getattr(spec, "__name__", "anonymous")}
    raise ValueError(f"cannot interpret constitutive input {spec!r}")


def _zero_extend(f):
    def g(x):
        x = np.asarray(x, dtype=float)
        out = np.where(x > 0.0, f(np.maximum(x, 0.0)), 0.0)
        return out if out.ndim else float(out)
    return g


def make_material(name, *, c, c1, lam, kappa, gamma, h=1.0,
                  constants: Optional[Constants] = None,
                  bounds: Optional[HypothesisBounds] = None,
                  descriptor: Optional[dict] = None) -> MaterialModel:
    """Assemble a material from constitutive inputs.

    Each input may be a :class:`PiecewisePoly`, a constant, or a plain
    callable (derivatives are then finite-differenced).  Caloric closed
    forms are derived exactly for piecewise-polynomial ``c1``; callable
    ``c1`` falls back to adaptive Simpson quadrature.
    """
    cf, cd1, cd2, cdesc = _as_fn(c)
    lf, ld1, ld2, ldesc = _as_fn(lam)
    kf = _as_fn(kappa)[0]
    gf = _as_fn(gamma)[0]
    hf = _as_fn(h)[0]

    forms = None
    if isinstance(c1, PiecewisePoly):
        if c1.breaks[0] != 0.0:
            raise ValueError("caloric density pieces must start at 0")
        e1_pp = c1.antiderivative()
        E2_pp = e1_pp.antiderivative()
        s1_lp = _LogPoly(c1)
        forms = CaloricForms(e1=_zero_extend(e1_pp), s1=_zero_extend(s1_lp),
                             E2=_zero_extend(E2_pp))
        c1_fn = _zero_extend(c1)
        c1_desc = {"piecewise": c1.to_dict()}
    elif callable(c1):
        c1_fn = _zero_extend(c1)
        c1_desc = {"callable": getattr(c1, "__name__", "anonymous")}
    else:
        raise ValueError("caloric density must be piecewise-polynomial or callable")

    desc = descriptor or {"name": name, "c": cdesc, "c1": c1_desc,
                          "lam": ldesc}
    con = constants or Constants()
    model = MaterialModel(
        name=name, c=cf, c_prime=cd1, c_second=cd2, c1=c1_fn,
        lam=lf, lam_prime=ld1, lam_second=ld2, kappa=kf, gamma=gf, h=hf,
        constants=con,
        bounds=bounds or HypothesisBounds(*[float("nan")] * 9),
        forms=forms, descriptor=desc)
    if bounds is None:
        object.__setattr__(model, "bounds", estimate_bounds(model))
    return model


def estimate_bounds(model: MaterialModel, n=801) -> HypothesisBounds:
    """Estimate the structural constants by dense sampling.

    Exact declarations are preferable; this is the fallback for
    user-overridden constitutive functions without declared bounds.
    """
    z = np.linspace(0.0, 1.0, n)
    cp = np.asarray(model.c_prime(z), dtype=float)
    lp = np.asarray(model.lam_prime(z), dtype=float)
    tgrid = np.geomspace(1e-6, 1e6, 241)
    t1 = np.linspace(1.0, 100.0, 397)
    return HypothesisBounds(
        c_low=float(np.min(model.c(z))),
        c1_low=float(np.min(model.c1(t1))),
        cprime_low=float(np.min(cp)),
        cprime_high=float(np.max(cp)),
        lambda_low=float(np.min(model.lam(z))),
        lambda_high=float(np.max(model.lam(z))),
        lambda_prime_max=float(max(0.0, -np.min(lp))),
        kappa_low=float(np.min(model.kappa(z))),
        gamma_low=float(np.min(model.gamma(tgrid))),
    )


def reference_material(constants: Optional[Constants] = None) -> MaterialModel:
    """The default water/ice material.

    ``c = 1 + chi``, ``c1 = theta`` up to the transition temperature and
    ``theta^2`` beyond, ``lam = 2 - chi``, ``kappa = 1 + chi/2``,
    ``gamma = 1``, ``h = 1``.  Caloric integrals are exact:
    ``e1(2) = 17/6``, ``s1(2) = 5/2``, ``f1(2) = -13/6``.
    """
    c1 = PiecewisePoly([0.0, 1.0], [[0.0, 1.0], [0.0, 0.0, 1.0]])
    bounds = HypothesisBounds(
        c_low=1.0, c1_low=1.0, cprime_low=1.0, cprime_high=1.0,
        lambda_low=1.0, lambda_high=2.0, lambda_prime_max=1.0,
        kappa_low=1.0, gamma_low=1.0)
    return make_material(
        "reference",
        c=PiecewisePoly([0.0], [[1.0, 1.0]]),
        c1=c1,
        lam=PiecewisePoly([0.0], [[2.0, -1.0]]),
        kappa=PiecewisePoly([0.0], [[1.0, 0.5]]),
        gamma=1.0,
        h=1.0,
        constants=constants,
        bounds=bounds,
        descriptor={"name": "reference"})


def builtin_material(name, constants: Optional[Constants] = None) -> MaterialModel:
    try:
        factory = BUILTIN_MATERIALS[name]
    except KeyError:
        raise ValueError(f"unknown material {name!r}; "
                         f"builtins: {sorted(BUILTIN_MATERIALS)}") from None
    return factory(constants)


def _reference_constant_kappa(constants=None):
    base = reference_material(constants)
    model = replace(base, name="reference-constant-kappa",
                    kappa=_const_fn(1.0),
                    descriptor={"name": "reference-constant-kappa"})
    return model


BUILTIN_MATERIALS = {
    "reference": reference_material,
    "reference-constant-kappa": _reference_constant_kappa,
}


# ---------------------------------------------------------------------------
# caloric integrals


def _check_theta(theta):
    th = np.asarray(theta, dtype=float)
    if not np.all(np.isfinite(th)):
        raise ValueError("non-finite temperature argument")
    return th


def _scalarize(out, theta):
    if np.ndim(theta) == 0:
        return float(out)
    return out


def caloric_e1(model: MaterialModel, theta):
    """Internal energy density: integral of the caloric density from 0."""
    th = _check_theta(theta)
    if model.forms is not None:
        return _scalarize(model.forms.e1(th), theta)
    flat = np.atleast_1d(th)
    out = np.array([adaptive_simpson(model.c1, 0.0, t) if t > 0.0 else 0.0
                    for t in flat])
    return _scalarize(out.reshape(th.shape), theta)


def _s1_integrand(model):
    lim = float(model.c1(1e-8)) / 1e-8

    def f(r):
        if r <= 0.0:
            return lim
        return float(model.c1(r)) / r
    return f


def caloric_s1(model: MaterialModel, theta):
    """Entropy density: integral of ``c1(r)/r`` from 0."""
    th = _check_theta(theta)
    if model.forms is not None:
        return _scalarize(model.forms.s1(th), theta)
    f = _s1_integrand(model)
    flat = np.atleast_1d(th)
    out = np.array([adaptive_simpson(f, 0.0, t) if t > 0.0 else 0.0
                    for t in flat])
    return _scalarize(out.reshape(th.shape), theta)


def caloric_f1(model: MaterialModel, theta):
    """Free energy density ``e1 - theta*s1`` (0 for theta <= 0)."""
    th = _check_theta(theta)
    e1 = np.asarray(caloric_e1(model, th))
    s1 = np.asarray(caloric_s1(model, th))
    out = e1 - th * s1
    return _scalarize(out, theta)


def caloric_E2(model: MaterialModel, theta):
    """Antiderivative of ``e1`` (line-search potential helper)."""
    th = _check_theta(theta)
    if model.forms is not None:
        return _scalarize(model.forms.E2(th), theta)
    e1 = lambda t: caloric_e1(model, float(t))
    flat = np.atleast_1d(th)
    out = np.array([adaptive_simpson(e1, 0.0, t, tol=1e-10) if t > 0.0 else 0.0
                    for t in flat])
    return _scalarize(out.reshape(th.shape), theta)


# ---------------------------------------------------------------------------
# truncation family


@dataclass(frozen=True)
class TruncationFamily:
    """Caloric functions capped above the cutoff ``B(R)``.

    Below the cutoff the members coincide with the untruncated caloric
    integrals; above it the energy continues affinely with slope
    ``c1(B)``, the entropy with slope ``c1(B)/B``, and the free energy
    freezes at its cutoff value.
    """

    model: MaterialModel
    R: float
    B: float
    e1B: float
    s1B: float
    f1B: float
    c1B: float
    E2B: float
    f1_theta_c: float
    cutoff_exceeds_R: bool

    def qr(self, theta):
        th = np.asarray(theta, dtype=float)
        out = np.clip(th, 0.0, self.B)
        return _scalarize(out, theta)

    def c1r(self, theta):
        return self.model.c1(self.qr(theta))

    def e1r(self, theta):
        th = np.asarray(theta, dtype=float)
        base = np.asarray(caloric_e1(self.model, np.minimum(th, self.B)))
        out = base + np.where(th > self.B, self.c1B * (th - self.B), 0.0)
        return _scalarize(out, theta)

    def s1r(self, theta):
        th = np.asarray(theta, dtype=float)
        base = np.asarray(caloric_s1(self.model, np.minimum(th, self.B)))
        slope = self.c1B / self.B if self.B > 0.0 else 0.0
        out = base + np.where(th > self.B, slope * (th - self.B), 0.0)
        return _scalarize(out, theta)

    def f1r(self, theta):
        th = np.asarray(theta, dtype=float)
        base = np.asarray(caloric_f1(self.model, np.minimum(th, self.B)))
        out = np.where(th > self.B, self.f1B, base)
        return _scalarize(out, theta)

    def E2r(self, theta):
        th = np.asarray(theta, dtype=float)
        base = np.asarray(caloric_E2(self.model, np.minimum(th, self.B)))
        ex = th - self.B
        out = base + np.where(th > self.B,
                              self.e1B * ex + 0.5 * self.c1B * ex * ex, 0.0)
        return _scalarize(out, theta)


def truncate_family(model: MaterialModel, R) -> TruncationFamily:
    """Build the truncation family at level ``R``.

    The cutoff is ``B(R) = sqrt(R) * min(e1(R), |f1(R)|)**(1/4)``; it
    grows super-linearly in ``R`` for admissible materials, so for large
    ``R`` the cap sits far above any temperature a healthy run reaches.
    """
    R = float(R)
    if not math.isfinite(R) or R <= 0.0:
        raise ValueError("truncation level R must be finite and positive")
    e1R = float(caloric_e1(model, R))
    f1R = float(caloric_f1(model, R))
    B = math.sqrt(R) * min(e1R, abs(f1R)) ** 0.25
    return TruncationFamily(
        model=model, R=R, B=B,
        e1B=float(caloric_e1(model, B)),
        s1B=float(caloric_s1(model, B)),
        f1B=float(caloric_f1(model, B)),
        c1B=float(model.c1(B)),
        E2B=float(caloric_E2(model, B)),
        f1_theta_c=float(caloric_f1(model, model.constants.theta_c)),
        cutoff_exceeds_R=B >= R)


# ---------------------------------------------------------------------------
# structural validation


@dataclass
class ClauseResult:
    key: str
    passed: bool
    detail: str


@dataclass
class ValidationReport:
    clauses: list
    heuristics: dict

    @property
    def passed(self):
        return all(c.passed for c in self.clauses)

    def clause(self, key):
        for c in self.clauses:
            if c.key == key:
                return c
        raise KeyError(key)

    def to_text(self):
        lines = ["material validation"]
        for c in self.clauses:
            lines.append(f"  clause ({c.key}): {'pass' if c.passed else 'FAIL'} -- {c.detail}")
        for k, v in self.heuristics.items():
            lines.append(f"  heuristic {k}: {v}")
        lines.append(f"  overall: {'pass' if self.passed else 'FAIL'}")
        return "\n".join(lines)


def validate_hypothesis(model: MaterialModel, samples=400) -> ValidationReport:
    """Check the structural hypotheses of the constitutive functions.

    Finitely checkable parts are pass/fail against the declared bounds
    (with finite-difference tolerances); the asymptotic growth clauses of
    the caloric density are reported as heuristics only.
    """
    b = model.bounds
    tol = 1e-6
    z = np.linspace(0.0, 1.0, samples)
    dz = z[1] - z[0]
    clauses = []

    def _convex(fvals):
        second = fvals[2:] - 2.0 * fvals[1:-1] + fvals[:-2]
        return float(second.min() / dz ** 2)

    # (i) specific heat: positive, Lipschitz-increasing, convex
    cv = np.asarray(model.c(z), dtype=float)
    cp = np.asarray(model.c_prime(z), dtype=float)
    ok_i = (b.c_low > 0.0
            and np.all(cv >= b.c_low - tol)
            and np.all(cv > tol)
            and np.all(cp >= -tol)
            and np.all(cp >= b.cprime_low - tol)
            and np.all(cp <= b.cprime_high + tol)
            and _convex(cv) >= -1e-5)
    clauses.append(ClauseResult(
        "i", bool(ok_i),
        f"c in [{cv.min():.6g}, {cv.max():.6g}], c' in [{cp.min():.6g}, "
        f"{cp.max():.6g}], min curvature {_convex(cv):.3g}"))

    # (ii) caloric density: continuous, bounded below beyond the
    # transition temperature, entropy integral finite at 0
    t1 = np.geomspace(1.0, 1e3, samples)
    c1v = np.asarray(model.c1(t1), dtype=float)
    try:
        s1_1 = float(caloric_s1(model, 1.0))
        s1_finite = math.isfinite(s1_1)
    except ValueError:
        s1_1, s1_finite = float("inf"), False
    tc = np.linspace(1e-3, 50.0, samples)
    probe = 1e-7
    jumps = np.abs(np.asarray(model.c1(tc + probe), dtype=float)
                   - np.asarray(model.c1(tc), dtype=float))
    scale = max(1.0, float(np.max(np.abs(model.c1(tc)))))
    continuous = float(jumps.max()) <= 1e-4 * scale
    ok_ii = bool(b.c1_low > 0.0 and np.all(c1v >= b.c1_low - tol)
                 and np.all(c1v > tol) and s1_finite and continuous)
    clauses.append(ClauseResult(
        "ii", ok_ii,
        f"min c1 on [1,1e3] = {c1v.min():.6g}, s1(1) = {s1_1:.6g}, "
        f"max probe jump {jumps.max():.3g}"))

    # (iii) elastic modulus: bounded, non-increasing, convex
    lv = np.asarray(model.lam(z), dtype=float)
    lp = np.asarray(model.lam_prime(z), dtype=float)
    ok_iii = (b.lambda_low > 0.0
              and np.all(lv >= b.lambda_low - tol)
              and np.all(lv > tol)
              and np.all(lv <= b.lambda_high + tol)
              and np.all(lp <= tol)
              and np.all(lp >= -b.lambda_prime_max - tol)
              and _convex(lv) >= -1e-5)
    clauses.append(ClauseResult(
        "iii", bool(ok_iii),
        f"lam in [{lv.min():.6g}, {lv.max():.6g}], lam' in [{lp.min():.6g}, "
        f"{lp.max():.6g}], min curvature {_convex(lv):.3g}"))

    # (iv) conductivity bounded below
    kv = np.asarray(model.kappa(z), dtype=float)
    ok_iv = bool(b.kappa_low > 0.0 and np.all(kv >= b.kappa_low - tol)
                 and np.all(kv > tol))
    clauses.append(ClauseResult(
        "iv", ok_iv, f"kappa in [{kv.min():.6g}, {kv.max():.6g}]"))

    # (v) boundary heat-transfer weight non-negative
    hx = np.linspace(0.0, 1.0, samples)
    hv = np.asarray(model.h(hx), dtype=float)
    ok_v = bool(np.all(hv >= -tol) and np.all(np.isfinite(hv)))
    clauses.append(ClauseResult(
        "v", ok_v, f"h in [{hv.min():.6g}, {hv.max():.6g}]"))

    # (vi) relaxation coefficient bounded below; sampling cannot prove a
    # uniform bound on an unbounded domain, so also reject a clear decay
    # trend over the last sampled decade
    tg = np.geomspace(1e-6, 1e6, samples)
    gv = np.asarray(model.gamma(tg), dtype=float)
    prev_decade = np.searchsorted(tg, 1e5)
    no_decay = bool(gv[-1] >= 0.5 * gv[prev_decade])
    ok_vi = bool(b.gamma_low > 0.0 and np.all(gv >= b.gamma_low - tol)
                 and np.all(gv > tol) and no_decay)
    clauses.append(ClauseResult(
        "vi", ok_vi,
        f"gamma in [{gv.min():.6g}, {gv.max():.6g}], "
        f"tail ratio {gv[-1] / max(gv[prev_decade], 1e-300):.3g}"))

    # heuristics for the asymptotic growth clauses of the caloric density
    tbig = np.geomspace(10.0, 1e5, 33)
    ratios = np.asarray(model.c1(tbig), dtype=float) / tbig
    superlinear = bool(np.all(np.diff(ratios) >= -1e-12 * np.abs(ratios[:-1])))
    eps = np.array([1e-2, 1e-4, 1e-6])
    lower_div = []
    f = _s1_integrand(model)
    for e in eps:
        lower_div.append(adaptive_simpson(lambda r: f(r) / max(r, e * 1e-6),
                                          e, 1.0, tol=1e-8))
    divergent = bool(lower_div[-1] > 2.0 * lower_div[0])
    heuristics = {
        "c1_superlinear_trend": superlinear,
        "entropy_slope_integral_divergent_trend": divergent,
    }
    return ValidationReport(clauses=clauses, heuristics=heuristics)
