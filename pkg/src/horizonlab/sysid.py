"""System-identification analyses over completed run logs.

Covers sinusoid response extraction into Bode points, fitting a
third-order-plus-dead-time transfer model by minimizing the sum of
absolute gain and phase differences with a Nelder-Mead simplex,
the RMSE-versus-velocity delay regression, and inertia estimation
from an identified natural frequency.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import AnalysisError


# ---------------------------------------------------------------------------
# Nelder-Mead simplex
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SimplexConfig:
    reflection: float = 1.0
    expansion: float = 2.0
    contraction: float = 0.5
    shrink: float = 0.5
    tol_x: float = 1e-10
    tol_f: float = 1e-13
    max_iter: Optional[int] = None    # default 200 * dim

    def validate(self) -> None:
        ok = (self.reflection > 0 and self.expansion > 1
              and self.expansion > self.reflection
              and 0 < self.contraction < 1 and 0 < self.shrink < 1)
        if not ok:
            raise AnalysisError("simplex coefficients violate the standard inequalities")


@dataclass(frozen=True)
class NMResult:
    x: np.ndarray
    fval: float
    iterations: int
    fevals: int
    converged: bool


def nelder_mead(objective: Callable[[np.ndarray], float], x0: Sequence[float],
                config: SimplexConfig = SimplexConfig(),
                initial_scale: float = 0.05) -> NMResult:
    """Minimize ``objective`` with the standard reflect/expand/contract/shrink
    iteration, starting from an axis-perturbed simplex around ``x0``.

    Terminates when both the simplex extent and the value spread fall below
    the configured tolerances, or flags non-convergence at max_iter.
    """
    config.validate()
    x0 = np.asarray(x0, dtype=float)
    n = x0.size
    max_iter = config.max_iter if config.max_iter is not None else 200 * n

    simplex = [x0.copy()]
    for k in range(n):
        v = x0.copy()
        v[k] = v[k] * (1.0 + initial_scale) if v[k] != 0.0 else initial_scale * 0.005
        simplex.append(v)
    fvals = [float(objective(v)) for v in simplex]
    fevals = n + 1
    if not all(math.isfinite(f) for f in fvals):
        raise AnalysisError("objective not finite on the initial simplex")

    def converged_now() -> bool:
        spread_f = max(fvals) - min(fvals)
        if spread_f == 0.0:
            return True   # exactly flat simplex (objective already minimal)
        best = simplex[int(np.argmin(fvals))]
        spread_x = max(float(np.max(np.abs(v - best))) for v in simplex)
        # require both: a value spread alone can vanish with vertices
        # straddling the minimum symmetrically
        return spread_f <= config.tol_f and spread_x <= config.tol_x

    iteration = 0
    while iteration < max_iter:
        if converged_now():
            break
        order = np.argsort(fvals, kind="stable")
        simplex = [simplex[i] for i in order]
        fvals = [fvals[i] for i in order]
        centroid = np.mean(simplex[:-1], axis=0)
        worst = simplex[-1]

        xr = centroid + config.reflection * (centroid - worst)
        fr = float(objective(xr)); fevals += 1
        if fr < fvals[0]:
            xe = centroid + config.expansion * (xr - centroid)
            fe = float(objective(xe)); fevals += 1
            if fe < fr:
                simplex[-1], fvals[-1] = xe, fe
            else:
                simplex[-1], fvals[-1] = xr, fr
        elif fr < fvals[-2]:
            simplex[-1], fvals[-1] = xr, fr
        else:
            if fr < fvals[-1]:   # outside contraction
                xc = centroid + config.contraction * (xr - centroid)
            else:                # inside contraction
                xc = centroid - config.contraction * (centroid - worst)
            fc = float(objective(xc)); fevals += 1
            if fc < min(fr, fvals[-1]):
                simplex[-1], fvals[-1] = xc, fc
            else:                # shrink toward the best vertex
                best = simplex[0]
                for i in range(1, n + 1):
                    simplex[i] = best + config.shrink * (simplex[i] - best)
                    fvals[i] = float(objective(simplex[i]))
                fevals += n
        iteration += 1

    i_best = int(np.argmin(fvals))
    return NMResult(x=simplex[i_best], fval=fvals[i_best], iterations=iteration,
                    fevals=fevals, converged=converged_now())


# ---------------------------------------------------------------------------
# Frequency response extraction
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BodePoint:
    omega: float       # rad/s
    gain_db: float
    phase_deg: float   # unwrapped against the previous frequency


def extract_response(t_s: np.ndarray, y: np.ndarray, omega: float,
                     amplitude: float, settle_s: float,
                     min_periods: int = 5,
                     prev_phase_deg: Optional[float] = None) -> BodePoint:
    """Least-squares sinusoid fit of a measured response.

    Fits y ~ a*sin(omega*t) + b*cos(omega*t) over whole periods after the
    transient cut; gain is relative to the input amplitude, phase is
    unwrapped to within 180 degrees of ``prev_phase_deg`` when given.
    """
    if omega <= 0 or amplitude <= 0:
        raise AnalysisError("omega and amplitude must be positive")
    t_s = np.asarray(t_s, dtype=float)
    y = np.asarray(y, dtype=float)
    period = 2.0 * math.pi / omega
    mask = t_s >= settle_s
    span = t_s[mask][-1] - settle_s if mask.any() else 0.0
    n_per = math.floor(span / period)
    if n_per < min_periods:
        raise AnalysisError(
            f"window too short: {n_per} whole periods after the transient cut, "
            f"need {min_periods}")
    mask &= t_s <= settle_s + n_per * period
    tw = t_s[mask]
    yw = y[mask]

    design = np.column_stack([np.sin(omega * tw), np.cos(omega * tw)])
    (a, b), *_ = np.linalg.lstsq(design, yw, rcond=None)
    mag = math.hypot(a, b)
    gain_db = 20.0 * math.log10(mag / amplitude)
    phase = math.degrees(math.atan2(b, a))
    if prev_phase_deg is not None:
        phase += 360.0 * round((prev_phase_deg - phase) / 360.0)
    return BodePoint(omega=omega, gain_db=gain_db, phase_deg=phase)


# ---------------------------------------------------------------------------
# Third-order-plus-dead-time model fitting
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TransferFit:
    """H(jw) = K * exp(-jw*T_d) / (1 + a1*(jw) + a2*(jw)^2 + a3*(jw)^3)."""

    K: float
    a1: float
    a2: float
    a3: float
    T_d: float     # s

    def response(self, omega: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """(gain_db, phase_deg) with phase continuous from DC."""
        omega = np.asarray(omega, dtype=float)
        # anchor the denominator angle near DC so unwrap matches the data
        w = np.concatenate([[min(1e-6, omega[0] * 1e-3)], omega])
        den = 1.0 - self.a2 * w * w + 1j * (self.a1 * w - self.a3 * w ** 3)
        angle = np.unwrap(np.angle(den))[1:]
        gain_db = 20.0 * np.log10(abs(self.K)) - 20.0 * np.log10(np.abs(den[1:]))
        phase = -np.degrees(angle) - np.degrees(omega * self.T_d)
        return gain_db, phase


@dataclass(frozen=True)
class TransferFitResult:
    fit: TransferFit
    residual: float
    converged: bool
    starts: int = 1


def _sad_objective(points: Sequence[BodePoint], phase_weight: float):
    omega = np.array([p.omega for p in points])
    gains = np.array([p.gain_db for p in points])
    phases = np.array([p.phase_deg for p in points])

    def objective(x: np.ndarray) -> float:
        K, a1, a2, a3, td = x
        viol = max(0.0, -a3) + max(0.0, -td) + max(0.0, -a1) + max(0.0, -a2) \
            + max(0.0, 1e-9 - K)
        if viol > 0.0:
            return 1e9 * (1.0 + viol)
        g, p = TransferFit(K, a1, a2, a3, td).response(omega)
        return float(np.sum(np.abs(g - gains)) + phase_weight * np.sum(np.abs(p - phases)))

    return objective


def initial_transfer_guess(points: Sequence[BodePoint]) -> TransferFit:
    """Heuristic start: K from the lowest-frequency gain, corner frequency
    from the -135 degree crossing, dead time from the high-frequency phase
    beyond the -270 degree asymptote."""
    pts = sorted(points, key=lambda p: p.omega)
    k0 = 10.0 ** (pts[0].gain_db / 20.0)
    omegas = np.array([p.omega for p in pts])
    phases = np.array([p.phase_deg for p in pts])
    if np.any(phases <= -135.0):
        wc = float(np.interp(-135.0, phases[::-1], omegas[::-1]))
    else:
        wc = float(omegas[-1])
    wc = max(wc, 1e-3)
    extra = -(math.radians(phases[-1] + 270.0)) / omegas[-1]
    td0 = min(max(extra, 1e-4), 0.1)
    return TransferFit(K=max(k0, 1e-6), a1=1.4 / wc, a2=1.0 / wc ** 2,
                       a3=0.2 / wc ** 3, T_d=td0)


def fit_transfer(points: Sequence[BodePoint], init: Optional[TransferFit] = None,
                 config: Optional[SimplexConfig] = None, n_starts: int = 5,
                 phase_weight: float = 1.0, seed: int = 0) -> TransferFitResult:
    """Fit the third-order-plus-delay model by sum-of-absolute-differences.

    Multi-start Nelder-Mead around the initial guess guards the non-convex
    objective; the best residual wins, ties break toward the smaller dead
    time.
    """
    if len(points) < 6:
        raise AnalysisError("need at least 6 Bode points")
    omegas = sorted(p.omega for p in points)
    if omegas[-1] / omegas[0] < 10.0:
        raise AnalysisError("Bode points must span at least one decade")
    if config is None:
        config = SimplexConfig(tol_x=1e-10, tol_f=1e-10, max_iter=4000)
    base = init if init is not None else initial_transfer_guess(points)
    objective = _sad_objective(points, phase_weight)
    rng = np.random.default_rng(seed)

    best: Optional[Tuple[float, float, NMResult]] = None
    x_base = np.array([base.K, base.a1, base.a2, base.a3, base.T_d])
    for start in range(max(1, n_starts)):
        if start == 0:
            x0 = x_base.copy()
        elif start == 1:
            # near-degenerate variant: data may be second order (a3 ~ 0)
            x0 = x_base.copy()
            x0[3] *= 1e-3
        else:
            x0 = x_base * rng.lognormal(0.0, 0.5, size=5)
            x0[4] = abs(x_base[4] + rng.normal(0.0, 0.004))
        res = nelder_mead(objective, x0, config)
        for _ in range(6):   # restart at the optimum until it stalls
            again = nelder_mead(objective, res.x, config)
            if again.fval >= res.fval * (1.0 - 1e-9):
                res = again if again.fval < res.fval else res
                break
            res = again
        key = (res.fval, res.x[4])
        if best is None or key < (best[0], best[1]):
            best = (res.fval, res.x[4], res)
    res = best[2]
    fit = TransferFit(K=res.x[0], a1=res.x[1], a2=res.x[2], a3=res.x[3], T_d=res.x[4])
    return TransferFitResult(fit=fit, residual=res.fval, converged=res.converged,
                             starts=max(1, n_starts))


def natural_frequency(fit: TransferFit) -> float:
    """Magnitude of the complex pole pair of the fitted denominator."""
    if fit.a3 > 1e-12:
        roots = np.roots([fit.a3, fit.a2, fit.a1, 1.0])
    else:
        roots = np.roots([fit.a2, fit.a1, 1.0])
    complex_roots = roots[np.abs(roots.imag) > 1e-9]
    if len(complex_roots):
        return float(np.abs(complex_roots[0]))
    if fit.a2 > 0:
        return 1.0 / math.sqrt(fit.a2)
    raise AnalysisError("fit has no oscillatory pole pair")


def inertia_from_bode(source: Union[TransferFit, float], k_p: float) -> float:
    """Invert the gain synthesis: tau = 1/omega_n, J = k_p * tau^2."""
    omega_n = natural_frequency(source) if isinstance(source, TransferFit) else float(source)
    if omega_n <= 0 or k_p <= 0:
        raise AnalysisError("omega_n and k_p must be positive")
    return k_p / omega_n ** 2


# ---------------------------------------------------------------------------
# Delay from the RMSE-versus-velocity regression
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DelayRegression:
    slope_ms: float
    stderr_ms: float
    intercept_deg: float
    used: List[bool] = field(default_factory=list)


def delay_from_rmse(samples: Sequence[Tuple[float, float]],
                    baseline_deg: float = 2.0) -> DelayRegression:
    """OLS line through the (speed, RMSE) points above the delay-free
    baseline; the slope in ms estimates the total sensing delay."""
    used = [rmse > baseline_deg for _, rmse in samples]
    pts = [(s, r) for (s, r), u in zip(samples, used) if u]
    if len(pts) < 3:
        raise AnalysisError(
            f"only {len(pts)} points above the {baseline_deg} deg baseline, need 3")
    x = np.array([p[0] for p in pts])
    y = np.array([p[1] for p in pts])
    sxx = float(np.sum((x - x.mean()) ** 2))
    slope = float(np.sum((x - x.mean()) * (y - y.mean())) / sxx)
    intercept = float(y.mean() - slope * x.mean())
    resid = y - (slope * x + intercept)
    dof = len(pts) - 2
    var = float(np.sum(resid ** 2) / dof) if dof > 0 else 0.0
    stderr = math.sqrt(var / sxx)
    return DelayRegression(slope_ms=slope * 1000.0, stderr_ms=stderr * 1000.0,
                           intercept_deg=intercept, used=used)
