"""Seasonal ARIMA baseline fitted by conditional sum of squares.

Conventions, with w the differenced series and mu its mean:

    phi(B) Phi(B^s) (w_t - mu) = theta(B) Theta(B^s) e_t
    phi(B) = 1 - sum phi_i B^i,    theta(B) = 1 + sum theta_j B^j

Pre-sample residuals are zero and pre-sample observations equal ``mu``, so the
residual recursion is a single IIR filter with zero initial state.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.signal import lfilter

from .errors import InsufficientHistory, InvalidConfig, NonFiniteInput, SeriesTooShort

PENALTY = 1e6
MAX_ITER = 500
TOLERANCE = 1e-8


@dataclass(frozen=True)
class SarimaSpec:
    p: int = 1
    d: int = 0
    q: int = 1
    P: int = 0
    D: int = 1
    Q: int = 1
    s: int = 288
    include_mean: bool = False

    def __post_init__(self):
        for name in ("p", "d", "q", "P", "D", "Q"):
            if int(getattr(self, name)) < 0:
                raise InvalidConfig(f"SARIMA order {name} must be non-negative")
        if int(self.s) < 1:
            raise InvalidConfig(f"seasonal period must be >= 1, got {self.s}")

    @property
    def n_diff(self) -> int:
        return self.d + self.D * self.s

    @property
    def n_params(self) -> int:
        return self.p + self.q + self.P + self.Q + int(self.include_mean)

    def label(self) -> str:
        return f"SARIMA({self.p},{self.d},{self.q})({self.P},{self.D},{self.Q})_{self.s}"


@dataclass(frozen=True)
class SarimaFit:
    spec: SarimaSpec
    ar: tuple = ()
    ma: tuple = ()
    sar: tuple = ()
    sma: tuple = ()
    mean: float = 0.0
    css: float = 0.0
    converged: bool = True
    iterations: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "SarimaFit":
        doc = dict(doc)
        spec = SarimaSpec(**doc.pop("spec"))
        return cls(spec, **{k: tuple(v) if isinstance(v, list) else v for k, v in doc.items()})


def difference(series, d: int, D: int = 0, s: int = 1) -> np.ndarray:
    """Apply (1 - B)^d (1 - B^s)^D."""
    x = np.asarray(series, dtype=float)
    if x.size <= d + D * s:
        raise SeriesTooShort(f"series of length {x.size} too short for d={d}, D={D}, s={s}")
    for _ in range(D):
        x = x[s:] - x[:-s]
    for _ in range(d):
        x = x[1:] - x[:-1]
    return x


def diff_polynomial(d: int, D: int, s: int) -> np.ndarray:
    """Coefficients of (1 - B)^d (1 - B^s)^D in ascending powers of B."""
    poly = np.array([1.0])
    for _ in range(d):
        poly = np.convolve(poly, [1.0, -1.0])
    seasonal = np.zeros(s + 1)
    seasonal[0], seasonal[s] = 1.0, -1.0
    for _ in range(D):
        poly = np.convolve(poly, seasonal)
    return poly


def integrate(diffed, head, d: int, D: int = 0, s: int = 1) -> np.ndarray:
    """Invert ``difference`` given the first ``d + D*s`` original values."""
    delta = diff_polynomial(d, D, s)
    k = len(delta) - 1
    head = np.asarray(head, dtype=float)
    if head.size != k:
        raise SeriesTooShort(f"integration needs {k} leading values, got {head.size}")
    x = np.concatenate([head, np.empty(len(diffed))])
    for j, w in enumerate(diffed):
        t = j + k
        x[t] = w - np.dot(delta[1:], x[t - 1::-1][:k]) if k else w
    return x


def split_params(spec: SarimaSpec, params):
    params = np.asarray(params, dtype=float)
    if params.size != spec.n_params:
        raise InvalidConfig(f"{spec.label()} takes {spec.n_params} parameters, got {params.size}")
    i = 0
    out = []
    for n in (spec.p, spec.q, spec.P, spec.Q):
        out.append(params[i:i + n])
        i += n
    mean = params[i] if spec.include_mean else 0.0
    return out[0], out[1], out[2], out[3], float(mean)


def _polynomials(spec: SarimaSpec, ar, ma, sar, sma):
    s = spec.s
    ar_poly = np.concatenate([[1.0], -np.asarray(ar, dtype=float)])
    sar_poly = np.zeros(spec.P * s + 1)
    sar_poly[0] = 1.0
    sar_poly[s::s] = -np.asarray(sar, dtype=float)
    ma_poly = np.concatenate([[1.0], np.asarray(ma, dtype=float)])
    sma_poly = np.zeros(spec.Q * s + 1)
    sma_poly[0] = 1.0
    sma_poly[s::s] = np.asarray(sma, dtype=float)
    return np.convolve(ar_poly, sar_poly), np.convolve(ma_poly, sma_poly)


def residuals(spec: SarimaSpec, params, diffed) -> np.ndarray:
    """One-step residuals e_t of the differenced series under ``params``."""
    ar, ma, sar, sma, mean = split_params(spec, params)
    ar_full, ma_full = _polynomials(spec, ar, ma, sar, sma)
    return lfilter(ar_full, ma_full, np.asarray(diffed, dtype=float) - mean)


def css_objective(spec: SarimaSpec, params, diffed) -> float:
    e = residuals(spec, params, diffed)
    return float(np.dot(e, e))


def _penalized(spec, diffed):
    n_coef = spec.p + spec.q + spec.P + spec.Q

    def objective(params):
        violations = int(np.sum(np.abs(params[:n_coef]) >= 1.0))
        if violations:
            # skip the filter: an explosive MA recursion can overflow
            return PENALTY * violations + PENALTY * float(np.sum(np.abs(params[:n_coef])))
        value = css_objective(spec, params, diffed)
        return value if np.isfinite(value) else PENALTY * (n_coef + 1)

    return objective


def fit(spec: SarimaSpec, series) -> SarimaFit:
    x = np.asarray(series, dtype=float)
    if not np.all(np.isfinite(x)):
        raise NonFiniteInput("series contains NaN or infinite values")
    if x.size <= spec.n_diff + 1:
        raise SeriesTooShort(f"{spec.label()} needs more than {spec.n_diff + 1} observations, got {x.size}")
    w = difference(x, spec.d, spec.D, spec.s)
    n_coef = spec.p + spec.q + spec.P + spec.Q
    start = np.zeros(spec.n_params)
    if spec.include_mean:
        start[-1] = w.mean()
    if spec.n_params == 0:
        return _make_fit(spec, start, w, True, 0)

    scale = float(np.std(w)) or 1.0
    simplex = np.tile(start, (spec.n_params + 1, 1))
    for i in range(spec.n_params):
        simplex[i + 1, i] += 0.1 if i < n_coef else 0.1 * scale
    res = minimize(_penalized(spec, w), start, method="Nelder-Mead",
                   options={"maxiter": MAX_ITER, "xatol": TOLERANCE, "fatol": np.inf,
                            "initial_simplex": simplex})
    best = res.x
    # the zero start is always a valid fallback
    if css_objective(spec, best, w) > css_objective(spec, start, w) or np.any(np.abs(best[:n_coef]) >= 1):
        best = start
    return _make_fit(spec, best, w, bool(res.success), int(res.nit))


def _make_fit(spec, params, w, converged, iterations) -> SarimaFit:
    ar, ma, sar, sma, mean = split_params(spec, params)
    return SarimaFit(spec, tuple(map(float, ar)), tuple(map(float, ma)), tuple(map(float, sar)),
                     tuple(map(float, sma)), float(mean), css_objective(spec, params, w),
                     converged, iterations)


def fit_params(fit: SarimaFit) -> np.ndarray:
    tail = [fit.mean] if fit.spec.include_mean else []
    return np.array([*fit.ar, *fit.ma, *fit.sar, *fit.sma, *tail], dtype=float)


def forecast(fit: SarimaFit, history, horizon: int = 1) -> np.ndarray:
    """Recursive multi-step forecast; future residuals are taken as zero."""
    spec = fit.spec
    x = np.asarray(history, dtype=float)
    if x.size <= spec.n_diff:
        raise InsufficientHistory(f"{spec.label()} needs more than {spec.n_diff} past values, got {x.size}")
    if horizon < 1:
        raise InvalidConfig(f"horizon must be >= 1, got {horizon}")
    w = difference(x, spec.d, spec.D, spec.s) - fit.mean
    e = residuals(spec, fit_params(fit), w + fit.mean)
    ar_full, ma_full = _polynomials(spec, fit.ar, fit.ma, fit.sar, fit.sma)
    na, nm = len(ar_full) - 1, len(ma_full) - 1
    pad = max(na, nm)
    w = np.concatenate([np.zeros(pad), w, np.zeros(horizon)])
    e = np.concatenate([np.zeros(pad), e, np.zeros(horizon)])
    n = x.size - spec.n_diff + pad
    for h in range(horizon):
        t = n + h
        ar_part = -np.dot(ar_full[1:], w[t - 1::-1][:na]) if na else 0.0
        ma_part = np.dot(ma_full[1:], e[t - 1::-1][:nm]) if nm else 0.0
        w[t] = ar_part + ma_part
    w_future = w[n:] + fit.mean

    delta = diff_polynomial(spec.d, spec.D, spec.s)
    k = len(delta) - 1
    xs = np.concatenate([x, np.empty(horizon)])
    for h in range(horizon):
        t = x.size + h
        xs[t] = w_future[h] - (np.dot(delta[1:], xs[t - 1::-1][:k]) if k else 0.0)
    return xs[x.size:]


def rolling_one_step(fit: SarimaFit, series, start: int) -> np.ndarray:
    """One-step forecasts of ``series[start:]``, each using only earlier values.

    Parameters stay fixed (no refitting).  Equivalent to calling ``forecast``
    with ``horizon=1`` on every prefix, in a single filter pass.
    """
    spec = fit.spec
    x = np.asarray(series, dtype=float)
    k = spec.n_diff
    if start <= k:
        raise InsufficientHistory(f"rolling forecasts must start after index {k}, got {start}")
    w = difference(x, spec.d, spec.D, spec.s) - fit.mean
    ar_full, ma_full = _polynomials(spec, fit.ar, fit.ma, fit.sar, fit.sma)
    # one-step predictor of w: (ma - ar) / ma has no lag-0 term, so w_t never
    # enters its own forecast
    n = max(len(ar_full), len(ma_full))
    num = np.pad(ma_full, (0, n - len(ma_full))) - np.pad(ar_full, (0, n - len(ar_full)))
    w_hat = lfilter(num, ma_full, w) + fit.mean
    # undo the differencing with past observations only
    delta = diff_polynomial(spec.d, spec.D, spec.s)
    past = np.zeros(x.size)
    for j in range(1, k + 1):
        if delta[j]:
            past[j:] -= delta[j] * x[:-j]
    return w_hat[start - k:] + past[start:]
