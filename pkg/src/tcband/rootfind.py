"""Bracketed scalar root finding: safeguarded Newton with bisection fallback."""

from __future__ import annotations


class NoBracketError(RuntimeError):
    """No sign change found inside the maximal search interval."""


def newton_bisect(f, fprime, a, b, ftol=1e-12, max_iter=100):
    """Find x in [a, b] with |f(x)| <= ftol, given f(a) and f(b) of opposite sign.

    Newton steps are taken from the current iterate and rejected (replaced by
    bisection of the bracketing interval) whenever they leave the bracket or
    the derivative vanishes.  The bracket is tightened every iteration, so
    the method cannot diverge.
    """
    fa, fb = f(a), f(b)
    if fa == 0.0:
        return a, 0.0
    if fb == 0.0:
        return b, 0.0
    if (fa > 0.0) == (fb > 0.0):
        raise NoBracketError(f"no sign change on [{a!r}, {b!r}]")

    x, fx = (a, fa) if abs(fa) < abs(fb) else (b, fb)
    for _ in range(max_iter):
        if abs(fx) <= ftol:
            return x, fx
        dfx = fprime(x)
        took_newton = False
        if dfx != 0.0:
            step = fx / dfx
            cand = x - step
            if a < cand < b:
                x_new = cand
                took_newton = True
        if not took_newton:
            x_new = 0.5 * (a + b)
        fx_new = f(x_new)
        # tighten the bracket around the sign change
        if (fx_new > 0.0) == (fa > 0.0):
            a, fa = x_new, fx_new
        else:
            b, fb = x_new, fx_new
        x, fx = x_new, fx_new
        if b - a <= 0.0:
            break
    if abs(fx) <= ftol:
        return x, fx
    raise RuntimeError(f"root iteration did not reach |f| <= {ftol:g}; last |f| = {abs(fx):g}")


def widen_to_bracket(f, a, b, lo, hi, factor=2.0, max_widen=6):
    """Expand [a, b] geometrically about its center until f changes sign.

    The interval is clamped to the maximal admissible interval [lo, hi].
    Returns the bracketing (a, b); raises NoBracketError if max_widen
    doublings exhaust [lo, hi] without a sign change.
    """
    for _ in range(max_widen + 1):
        fa, fb = f(a), f(b)
        if (fa > 0.0) != (fb > 0.0) or fa == 0.0 or fb == 0.0:
            return a, b
        mid = 0.5 * (a + b)
        half = 0.5 * (b - a) * factor
        a = max(lo, mid - half)
        b = min(hi, mid + half)
    raise NoBracketError(
        f"no sign change inside [{lo!r}, {hi!r}] after {max_widen} widenings"
    )
