"""Central finite-difference verification of analytic gradients."""

from dataclasses import dataclass, field

import numpy as np


@dataclass
class GradCheckReport:
    errors: dict = field(default_factory=dict)  # name -> max relative error
    checked: dict = field(default_factory=dict)  # name -> elements probed
    tolerance: float = 1e-4
    noise_floor: float = 0.0
    kinks: dict = field(default_factory=dict)  # name -> probes straddling a kink

    @property
    def max_error(self):
        return max(self.errors.values(), default=0.0)

    @property
    def ok(self):
        return self.max_error < self.tolerance

    def worst(self):
        if not self.errors:
            return None, 0.0
        name = max(self.errors, key=self.errors.get)
        return name, self.errors[name]


def grad_check(f, params, epsilon=1e-5, tolerance=1e-4, max_elements=None, rng=None, noise_factor=1e4):
    """Compare analytic and central-difference gradients of ``f()``.

    ``f`` rebuilds the graph from the current parameter values and returns a
    scalar :class:`Tensor`.  ``params`` is a dict name -> tensor (float64).
    For each tensor the error is ``max|a - n| / max(max|a|, max|n|, floor)``
    over the probed elements.  ``floor`` is the resolution of the difference
    quotient itself, ``noise_factor * eps64 * max(|f|, 1) / epsilon``: below
    it the numeric estimate is rounding noise, so a gradient that is truly
    zero (a softmax shift, say) is not reported as a 100% error.
    ``max_elements`` caps probes per tensor (chosen at random with ``rng``).

    Piecewise-linear ops (ReLU, max) have kinks.  A probe whose step crosses
    one shows one-sided quotients that disagree by at least the central
    error; a smooth function with a wrong gradient cannot do that.  Such a
    probe passes only if the analytic value lies between the two one-sided
    quotients (a valid subgradient), and is counted in ``report.kinks``.
    """
    for name, p in params.items():
        if p.dtype != np.float64:
            raise TypeError(f"grad_check needs float64 parameters; {name} is {p.dtype}")
    rng = rng or np.random.default_rng(0)
    for p in params.values():
        p.grad = None
    out = f()
    out.backward()
    f0 = float(out.data)
    floor = noise_factor * np.finfo(np.float64).eps * max(abs(f0), 1.0) / epsilon
    report = GradCheckReport(tolerance=tolerance, noise_floor=floor)
    for name, p in params.items():
        analytic = np.zeros_like(p.data) if p.grad is None else p.grad.copy()
        if not np.isfinite(analytic).all():
            raise FloatingPointError(f"non-finite analytic gradient for {name}")
        flat = p.data.reshape(-1)
        n = flat.size
        if max_elements is not None and n > max_elements:
            idx = rng.choice(n, size=max_elements, replace=False)
        else:
            idx = np.arange(n)
        numeric = np.empty(len(idx))
        fwd = np.empty(len(idx))
        bwd = np.empty(len(idx))
        for j, i in enumerate(idx):
            orig = flat[i]
            flat[i] = orig + epsilon
            fp = float(f().data)
            flat[i] = orig - epsilon
            fm = float(f().data)
            flat[i] = orig
            numeric[j] = (fp - fm) / (2 * epsilon)
            fwd[j] = (fp - f0) / epsilon
            bwd[j] = (f0 - fm) / epsilon
        a = analytic.reshape(-1)[idx]
        scale = max(np.abs(a).max(initial=0.0), np.abs(numeric).max(initial=0.0), floor)
        err = np.abs(a - numeric)
        kink = (err > tolerance * scale) & (np.abs(fwd - bwd) >= err)
        if kink.any():
            lo = np.minimum(fwd, bwd) - tolerance * scale
            hi = np.maximum(fwd, bwd) + tolerance * scale
            inside = (a >= lo) & (a <= hi)
            err = np.where(kink & inside, 0.0, err)
        report.errors[name] = float(err.max(initial=0.0) / scale)
        report.checked[name] = len(idx)
        report.kinks[name] = int(kink.sum())
    return report
