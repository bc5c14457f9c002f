"""Scaling-law fitting and extrapolation.

Two-step laws chain a compute -> task-loss power law with a loss -> metric
sigmoid; single-step laws map compute (or params/tokens) straight to the
metric. Eight variants are supported, see ``VARIANTS``.

All fits are deterministic: a fixed grid of starting points is run through
Levenberg-Marquardt and the lowest-SSE start wins (earlier start on ties).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence, Union

import numpy as np

from .lm import levenberg_marquardt

EXPONENT_GRID = tuple(round(0.05 * i, 2) for i in range(1, 21))
SIGMOID_K_STARTS = (1.0, -1.0, 4.0, -4.0, 16.0, -16.0)
MAX_ITER = 2000
SCREEN_ITER = 25
N_FINALISTS = 4
RTOL = 1e-10
HELPER_POINT = (0.0, 1.0)
LATE_FRACTION = 0.5
SMOOTH_FRACTION = 0.9


class InsufficientDataError(ValueError):
    pass


class NotConvergedError(RuntimeError):
    pass


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


# --------------------------------------------------------------------------- parameter records

@dataclass(frozen=True)
class PowerLawParams:
    """Loss as a function of compute: ``A / C**alpha + E``."""

    A: float
    alpha: float
    E: float = 0.0

    def __call__(self, compute):
        return self.A * np.exp(-self.alpha * np.log(compute)) + self.E

    def as_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class NDParams:
    """Loss as a function of params N and tokens D: ``A / N**alpha + B / D**beta + E``."""

    A: float
    alpha: float
    B: float
    beta: float
    E: float

    def __call__(self, N, D):
        return self.A * np.exp(-self.alpha * np.log(N)) + self.B * np.exp(-self.beta * np.log(D)) + self.E

    def as_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class SigmoidParams:
    """Metric as a function of loss: ``a / (1 + exp(-k (L - L0))) + b``."""

    a: float
    b: float
    k: float
    L0: float

    def __call__(self, loss):
        return self.a * _sigmoid(self.k * (np.asarray(loss, dtype=float) - self.L0)) + self.b

    def canonical(self) -> "SigmoidParams":
        # a*s(u) + b == -a*s(-u) + (a + b)
        if self.a < 0:
            return SigmoidParams(-self.a, self.a + self.b, -self.k, self.L0)
        return self

    def as_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class SingleStepParams:
    """Metric straight from scale: ``a * sigmoid(A / C**alpha + E) + b``.

    The sigmoid's steepness and midpoint are folded into A (and B) and E, so
    those are sign-free. With ``B``/``beta`` set, the first term uses the
    parameter count and the second the token count.
    """

    A: float
    alpha: float
    E: float
    a: float
    b: float
    B: float | None = None
    beta: float | None = None

    @property
    def uses_nd(self) -> bool:
        return self.B is not None

    def logit(self, *x):
        if self.uses_nd:
            N, D = x
            return self.A * np.exp(-self.alpha * np.log(N)) + self.B * np.exp(-self.beta * np.log(D)) + self.E
        (C,) = x
        return self.A * np.exp(-self.alpha * np.log(C)) + self.E

    def __call__(self, *x):
        return self.a * _sigmoid(self.logit(*x)) + self.b

    def as_dict(self):
        d = asdict(self)
        if not self.uses_nd:
            d.pop("B")
            d.pop("beta")
        return d


Params = Union[PowerLawParams, NDParams, SigmoidParams, SingleStepParams]


@dataclass(frozen=True)
class VariantSpec:
    name: str
    loss_form: str | None  # power3 | power2 | nd, None for single-step
    single_form: str | None  # compute | nd
    helpers: bool = False
    late_only: bool = False

    @property
    def two_step(self) -> bool:
        return self.loss_form is not None

    @property
    def uses_nd(self) -> bool:
        return self.loss_form == "nd" or self.single_form == "nd"


VARIANTS = {
    v.name: v
    for v in (
        VariantSpec("three_param", "power3", None),
        VariantSpec("two_param", "power2", None),
        VariantSpec("five_param_nd", "nd", None),
        VariantSpec("single_step_3", None, "compute"),
        VariantSpec("single_step_5", None, "nd"),
        VariantSpec("three_param_helper", "power3", None, helpers=True),
        VariantSpec("three_param_late", "power3", None, late_only=True),
        VariantSpec("three_param_helper_late", "power3", None, helpers=True, late_only=True),
    )
}

FREE_PARAMS = {"power3": 3, "power2": 2, "nd": 5, "sigmoid": 4, "compute": 5, "nd_single": 7}


def get_variant(name: str | VariantSpec) -> VariantSpec:
    if isinstance(name, VariantSpec):
        return name
    try:
        return VARIANTS[name]
    except KeyError:
        raise ValueError(f"unknown scaling-law variant {name!r}; choose from {sorted(VARIANTS)}") from None


@dataclass(frozen=True)
class FitResult:
    variant: str
    stage: str  # loss | acc | single
    params: Params
    sse: float
    n_points: int
    converged: bool
    n_restarts_used: int


# --------------------------------------------------------------------------- models (prediction + jacobian)

def _power_model(theta, lnC, with_E):
    t = np.exp(theta[0] - theta[1] * lnC)
    cols = [t, -lnC * t]
    pred = t
    if with_E:
        pred = t + theta[2]
        cols.append(np.ones_like(t))
    return pred, np.column_stack(cols)


def _nd_model(theta, lnN, lnD):
    t1 = np.exp(theta[0] - theta[1] * lnN)
    t2 = np.exp(theta[2] - theta[3] * lnD)
    pred = t1 + t2 + theta[4]
    return pred, np.column_stack([t1, -lnN * t1, t2, -lnD * t2, np.ones_like(t1)])


def _sigmoid_model(theta, L):
    a, b, k, L0 = theta
    d = L - L0
    s = _sigmoid(k * d)
    ds = s * (1.0 - s)
    pred = a * s + b
    return pred, np.column_stack([s, np.ones_like(s), a * ds * d, -a * ds * k])


def _single_model(theta, lnC):
    A, alpha, E, a, b = theta
    v = np.exp(-alpha * lnC)
    s = _sigmoid(A * v + E)
    g = a * s * (1.0 - s)
    pred = a * s + b
    return pred, np.column_stack([g * v, -g * A * lnC * v, g, s, np.ones_like(s)])


def _single_nd_model(theta, lnN, lnD):
    A, alpha, B, beta, E, a, b = theta
    v = np.exp(-alpha * lnN)
    w = np.exp(-beta * lnD)
    s = _sigmoid(A * v + B * w + E)
    g = a * s * (1.0 - s)
    pred = a * s + b
    return pred, np.column_stack([g * v, -g * A * lnN * v, g * w, -g * B * lnD * w, g, s, np.ones_like(s)])


def _multistart(model, y, starts):
    """Screen every start briefly, then polish the best few to convergence.

    Returns (best LMResult, number of starts screened). Ordering is fixed, and
    ties go to the earlier start, so results are reproducible bit for bit.
    """

    def fun(theta):
        pred, J = model(theta)
        return pred - y, J

    screened = []
    n = 0
    for i, theta0 in enumerate(starts):
        n += 1
        res = levenberg_marquardt(fun, theta0, max_iter=SCREEN_ITER, rtol=RTOL)
        if np.isfinite(res.sse):
            screened.append((res.sse, i, res))
    if not screened:
        raise RuntimeError("every starting point failed to produce a finite fit")
    screened.sort(key=lambda t: (t[0], t[1]))
    best = None
    for _, i, res in screened[:N_FINALISTS]:
        if not res.converged:
            more = levenberg_marquardt(fun, res.x, max_iter=MAX_ITER - res.iterations, rtol=RTOL)
            res = type(res)(more.x, more.sse, res.iterations + more.iterations, more.converged)
        if best is None or res.sse < best.sse:
            best = res
    return best, n


# --------------------------------------------------------------------------- input handling

def _as_float_array(x, name):
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def _split_nd(x, n_expected=None):
    if isinstance(x, tuple) and len(x) == 2:
        N, D = x
    else:
        arr = np.asarray(x, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 2:
            raise ValueError("(N, D) inputs must be a pair of arrays or an (n, 2) array")
        N, D = arr[:, 0], arr[:, 1]
    N = _as_float_array(N, "N")
    D = _as_float_array(D, "D")
    if N.shape != D.shape:
        raise ValueError("N and D must have the same length")
    if np.any(N <= 0) or np.any(D <= 0):
        raise ValueError("N and D must be strictly positive")
    return N, D


def _check_count(n, need, what):
    if n < need:
        raise InsufficientDataError(f"{what} needs at least {need} points, got {n}")


# --------------------------------------------------------------------------- public fitting API

def smooth_final_loss(steps: Sequence[float], values: Sequence[float]) -> float:
    """Mean of the observations at steps >= 0.9 x the final step."""
    steps = np.asarray(steps, dtype=float)
    values = np.asarray(values, dtype=float)
    if steps.size == 0:
        raise ValueError("cannot smooth an empty series")
    if steps.shape != values.shape:
        raise ValueError("steps and values must align")
    final = steps.max()
    mask = steps >= SMOOTH_FRACTION * final
    return float(np.mean(values[mask]))


def _power_starts(lnC, y, with_E):
    E0 = 0.9 * float(y.min()) if with_E else 0.0
    resid = y - E0
    if np.any(resid <= 0):
        # only reachable when losses are non-positive; keep the log finite
        resid = np.maximum(resid, 1e-12)
    lr = np.log(resid)
    for alpha in EXPONENT_GRID:
        logA = float(np.mean(lr + alpha * lnC))
        yield np.array([logA, alpha, E0] if with_E else [logA, alpha])


def _nd_starts(lnN, lnD, y):
    E0 = 0.9 * float(y.min())
    resid = y - E0
    scale = max(float(np.mean(np.abs(resid))), 1e-12)
    for alpha in EXPONENT_GRID:
        for beta in EXPONENT_GRID:
            X = np.column_stack([np.exp(-alpha * lnN), np.exp(-beta * lnD)])
            coef, *_ = np.linalg.lstsq(X, resid, rcond=None)
            A0 = coef[0] if coef[0] > 0 else 0.5 * scale / float(np.mean(X[:, 0]))
            B0 = coef[1] if coef[1] > 0 else 0.5 * scale / float(np.mean(X[:, 1]))
            yield np.array([np.log(A0), alpha, np.log(B0), beta, E0])


def fit_loss_curve(x, losses, variant: str | VariantSpec = "three_param") -> FitResult:
    """Fit the first (compute -> loss) step on fully trained observations.

    ``x`` is a compute array for power-law variants or ``(N, D)`` for
    ``five_param_nd``.
    """
    spec = get_variant(variant)
    if not spec.two_step:
        raise ValueError(f"{spec.name} has no separate loss step")
    y = _as_float_array(losses, "losses")
    form = spec.loss_form
    need = FREE_PARAMS[form]
    if form == "nd":
        N, D = _split_nd(x)
        if N.size != y.size:
            raise ValueError("inputs and losses must align")
        _check_count(y.size, need, spec.name)
        lnN, lnD = np.log(N), np.log(D)
        best, n = _multistart(lambda th: _nd_model(th, lnN, lnD), y, _nd_starts(lnN, lnD, y))
        th = best.x
        params = NDParams(float(np.exp(th[0])), float(th[1]), float(np.exp(th[2])), float(th[3]), float(th[4]))
    else:
        C = _as_float_array(x, "compute")
        if C.size != y.size:
            raise ValueError("compute and losses must align")
        _check_count(y.size, need, spec.name)
        if np.any(C <= 0):
            raise ValueError("compute values must be strictly positive")
        if np.unique(C).size != C.size:
            raise ValueError("compute values must be distinct")
        with_E = form == "power3"
        lnC = np.log(C)
        best, n = _multistart(lambda th: _power_model(th, lnC, with_E), y, _power_starts(lnC, y, with_E))
        th = best.x
        params = PowerLawParams(float(np.exp(th[0])), float(th[1]), float(th[2]) if with_E else 0.0)
    return FitResult(spec.name, "loss", params, best.sse, int(y.size), best.converged, n)


def late_mask(steps, runs=None) -> np.ndarray:
    """True for checkpoints at or past half of their run's final step."""
    steps = np.asarray(steps, dtype=float)
    runs = np.zeros(steps.size, dtype=int) if runs is None else np.asarray(runs, dtype=object)
    keep = np.zeros(steps.size, dtype=bool)
    for run in dict.fromkeys(runs.tolist()):
        sel = runs == run
        final = steps[sel].max()
        keep[sel] = steps[sel] >= LATE_FRACTION * final
    return keep


def _sigmoid_starts(L, y):
    L0 = float(np.median(L))
    a0 = float(y.max() - y.min())
    b0 = float(y.min())
    for k in SIGMOID_K_STARTS:
        yield np.array([a0, b0, k, L0])


def fit_acc_curve(
    losses,
    values,
    helpers: bool = False,
    late_only: bool = False,
    steps=None,
    runs=None,
    variant: str | None = None,
) -> FitResult:
    """Fit the second (loss -> metric) step on all checkpoints.

    ``late_only`` keeps, per run, checkpoints at or after half the run's final
    step (``steps`` required; ``runs`` labels each observation's run).
    ``helpers`` appends the anchor point (loss 0, metric 1).
    """
    L = _as_float_array(losses, "losses")
    y = _as_float_array(values, "values")
    if L.shape != y.shape:
        raise ValueError("losses and values must align")
    if late_only:
        if steps is None:
            raise ValueError("late_only filtering needs checkpoint steps")
        keep = late_mask(steps, runs)
        L, y = L[keep], y[keep]
    _check_count(L.size, FREE_PARAMS["sigmoid"], "the loss->metric sigmoid")
    starts = list(_sigmoid_starts(L, y))
    if helpers:
        L = np.append(L, HELPER_POINT[0])
        y = np.append(y, HELPER_POINT[1])
    best, n = _multistart(lambda th: _sigmoid_model(th, L), y, starts)
    params = SigmoidParams(*(float(v) for v in best.x)).canonical()
    if variant is None:
        variant = {
            (False, False): "three_param",
            (True, False): "three_param_helper",
            (False, True): "three_param_late",
            (True, True): "three_param_helper_late",
        }[(helpers, late_only)]
    return FitResult(variant, "acc", params, best.sse, int(L.size), best.converged, n)


def _logit_targets(y):
    a0 = float(y.max() - y.min())
    b0 = float(y.min())
    if a0 == 0.0:
        return a0, b0, None
    # pad the range so the extremes stay off the sigmoid's asymptotes
    a0 *= 1.2
    b0 -= 0.1 * a0 / 1.2
    z = np.clip((y - b0) / a0, 1e-3, 1 - 1e-3)
    return a0, b0, np.log(z / (1 - z))


def _single_starts(lnC, y):
    a0, b0, z = _logit_targets(y)
    for alpha in EXPONENT_GRID:
        if z is None:
            yield np.array([0.0, alpha, 0.0, a0, b0])
            continue
        X = np.column_stack([np.exp(-alpha * lnC), np.ones_like(lnC)])
        (A0, E0), *_ = np.linalg.lstsq(X, z, rcond=None)
        yield np.array([A0, alpha, E0, a0, b0])


def _single_nd_starts(lnN, lnD, y):
    a0, b0, z = _logit_targets(y)
    for alpha in EXPONENT_GRID:
        for beta in EXPONENT_GRID:
            if z is None:
                yield np.array([0.0, alpha, 0.0, beta, 0.0, a0, b0])
                continue
            X = np.column_stack([np.exp(-alpha * lnN), np.exp(-beta * lnD), np.ones_like(lnN)])
            (A0, B0, E0), *_ = np.linalg.lstsq(X, z, rcond=None)
            yield np.array([A0, alpha, B0, beta, E0, a0, b0])


def fit_single_step(x, values, variant: str | VariantSpec = "single_step_3") -> FitResult:
    """Fit scale -> metric directly over all checkpoints."""
    spec = get_variant(variant)
    if spec.two_step:
        raise ValueError(f"{spec.name} is a two-step variant")
    y = _as_float_array(values, "values")
    if spec.single_form == "nd":
        N, D = _split_nd(x)
        if N.size != y.size:
            raise ValueError("inputs and values must align")
        _check_count(y.size, FREE_PARAMS["nd_single"], spec.name)
        lnN, lnD = np.log(N), np.log(D)
        best, n = _multistart(lambda th: _single_nd_model(th, lnN, lnD), y, _single_nd_starts(lnN, lnD, y))
        A, alpha, B, beta, E, a, b = (float(v) for v in best.x)
        params = SingleStepParams(A, alpha, E, a, b, B, beta)
    else:
        C = _as_float_array(x, "compute")
        if C.size != y.size:
            raise ValueError("compute and values must align")
        if np.any(C <= 0):
            raise ValueError("compute values must be strictly positive")
        _check_count(y.size, FREE_PARAMS["compute"], spec.name)
        lnC = np.log(C)
        best, n = _multistart(lambda th: _single_model(th, lnC), y, _single_starts(lnC, y))
        params = SingleStepParams(*(float(v) for v in best.x))
    return FitResult(spec.name, "single", params, best.sse, int(y.size), best.converged, n)


# --------------------------------------------------------------------------- chains and prediction

@dataclass(frozen=True)
class FitChain:
    """A complete predictor: loss step + sigmoid, or a single-step fit."""

    variant: str
    acc_fit: FitResult
    loss_fit: FitResult | None = None

    @property
    def converged(self) -> bool:
        return self.acc_fit.converged and (self.loss_fit is None or self.loss_fit.converged)

    @property
    def fits(self) -> tuple[FitResult, ...]:
        return (self.acc_fit,) if self.loss_fit is None else (self.loss_fit, self.acc_fit)


def _target_inputs(spec: VariantSpec, target):
    if isinstance(target, (tuple, list)):
        N, D = (float(v) for v in target)
        return (N, D) if spec.uses_nd else (6.0 * N * D,)
    if spec.uses_nd:
        raise ValueError(f"{spec.name} needs a (params, tokens) target, not a compute value")
    return (float(target),)


def predict_loss(chain: FitChain, target) -> float:
    spec = get_variant(chain.variant)
    if chain.loss_fit is None:
        raise ValueError("single-step fits have no loss prediction")
    return float(chain.loss_fit.params(*_target_inputs(spec, target)))


def predict_at_target(chain: FitChain, target, best_effort: bool = False, clamp: bool = True) -> float:
    """Extrapolated metric at ``target`` (compute, or ``(N, D)``), clamped to [0, 1]."""
    if not chain.converged and not best_effort:
        raise NotConvergedError(f"{chain.variant} fit did not converge; pass best_effort=True to use it anyway")
    spec = get_variant(chain.variant)
    x = _target_inputs(spec, target)
    if chain.loss_fit is not None:
        value = float(chain.acc_fit.params(chain.loss_fit.params(*x)))
    else:
        value = float(chain.acc_fit.params(*x))
    return min(max(value, 0.0), 1.0) if clamp else value


def fit_chain(
    variant: str | VariantSpec,
    *,
    final_x=None,
    final_losses=None,
    ckpt_x=None,
    ckpt_losses=None,
    ckpt_values=None,
    ckpt_steps=None,
    ckpt_runs=None,
) -> FitChain:
    """Fit every stage of ``variant``.

    Two-step variants use ``final_x``/``final_losses`` (one smoothed loss per
    fully trained size) and ``ckpt_losses``/``ckpt_values`` (all checkpoints).
    Single-step variants use ``ckpt_x``/``ckpt_values``.
    """
    spec = get_variant(variant)
    if spec.two_step:
        loss_fit = fit_loss_curve(final_x, final_losses, spec)
        acc_fit = fit_acc_curve(
            ckpt_losses,
            ckpt_values,
            helpers=spec.helpers,
            late_only=spec.late_only,
            steps=ckpt_steps,
            runs=ckpt_runs,
            variant=spec.name,
        )
        return FitChain(spec.name, acc_fit, loss_fit)
    return FitChain(spec.name, fit_single_step(ckpt_x, ckpt_values, spec))


def size_subsets(ladder: Sequence[str]) -> list[tuple[str, ...]]:
    """Prefixes of length >= 3 followed by suffixes starting at the 2nd..(n-3)th size."""
    sizes = list(ladder)
    n = len(sizes)
    if n < 3:
        return []
    prefixes = [tuple(sizes[:k]) for k in range(3, n + 1)]
    suffixes = [tuple(sizes[k - 1 :]) for k in range(2, n - 2)]
    return prefixes + suffixes


def subset_labels(ladder: Sequence[str]) -> list[tuple[str, tuple[str, ...]]]:
    """``size_subsets`` with CLI-style labels (``prefix:k`` / ``suffix:k``)."""
    n = len(ladder)
    if n < 3:
        return []
    out = [(f"prefix:{k}", tuple(ladder[:k])) for k in range(3, n + 1)]
    out += [(f"suffix:{k}", tuple(ladder[k - 1 :])) for k in range(2, n - 2)]
    return out


def resolve_subset(label: str, ladder: Sequence[str]) -> tuple[str, ...]:
    """Turn ``prefix:k``, ``suffix:k`` or ``sizes:a,b,c`` into a tuple of sizes."""
    kind, _, arg = label.partition(":")
    ladder = list(ladder)
    if kind == "sizes":
        sizes = tuple(s for s in arg.split(",") if s)
        unknown = [s for s in sizes if s not in ladder]
        if unknown:
            raise ValueError(f"unknown sizes in subset: {unknown}")
        return sizes
    if kind == "all" and not arg:
        return tuple(ladder)
    try:
        k = int(arg)
    except ValueError:
        raise ValueError(f"bad subset {label!r}; use prefix:k, suffix:k, sizes:a,b or all") from None
    if kind == "prefix" and 1 <= k <= len(ladder):
        return tuple(ladder[:k])
    if kind == "suffix" and 1 <= k <= len(ladder):
        return tuple(ladder[k - 1 :])
    raise ValueError(f"bad subset {label!r} for a {len(ladder)}-size ladder")
