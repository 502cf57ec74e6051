"""Independent extended-precision oracle (60 significant digits).

Re-derives every closed form with mpmath, structured differently from
the library (no numpy, explicit rationals), so agreement to 1e-12
relative is a genuine cross-check rather than a reimplementation echo.
"""

import mpmath as mp

mp.mp.dps = 60


def consts_oracle(mu, sigma, r, p, beta, T):
    """theta, A, gamma2, nu, B, M as mpmath values."""
    mu, sigma, r, p, beta, T = map(mp.mpf, (mu, sigma, r, p, beta, T))
    sig2 = sigma * sigma
    theta = (mu - r) / ((1 - p) * sig2)
    A = r - beta / p + (mu - r) ** 2 / (2 * (1 - p) * sig2)
    gamma2 = mp.cbrt(mp.mpf(9) / 32 * (1 - p) * theta**4 * (1 - theta) ** 4) * sig2
    nu = mp.cbrt(12 * theta**2 * (1 - theta) ** 2 / (1 - p))
    B = mp.mpf(2) / 3 * abs(p) * T * gamma2 + 1

    def xi(t):
        return mp.sqrt(mp.mpf(2) / 3 * p * (T - t) * gamma2 + B)

    xi_max = max(xi(mp.mpf(0)), xi(T))
    op1 = 6 * sig2 / nu * (2 * nu * theta * abs((1 - theta) * (1 - 2 * theta)) + 1) + 1
    op2 = sig2 * (1 - p) * nu**2 * xi_max / 2 + 1
    M = theta + 1 + 2 / (-p * A) * max(op1, op2, mp.mpf(1))
    return {"theta": theta, "A": A, "gamma2": gamma2, "nu": nu, "B": B, "M": M, "xi": xi}


def merton_oracle(t, wealth, mu, sigma, r, p, beta, T):
    o = consts_oracle(mu, sigma, r, p, beta, T)
    t, wealth = mp.mpf(t), mp.mpf(wealth)
    return mp.exp(mp.mpf(p) * o["A"] * (mp.mpf(T) - t)) * wealth ** mp.mpf(p) / mp.mpf(p)


def profile_oracle(delta, lam, nu, B):
    """h, h', h'' of the quartic band profile."""
    delta, lam, nu, B = map(mp.mpf, (delta, lam, nu, B))
    l23 = lam ** (mp.mpf(2) / 3)
    l43 = lam ** (mp.mpf(4) / 3)
    h = mp.mpf(3) / 2 * delta**2 * l23 - delta**4 / nu**2 + mp.mpf(3) / 2 * B * delta**2 * l43
    hp = 3 * delta * l23 - 4 * delta**3 / nu**2 + 3 * B * delta * l43
    hpp = 3 * l23 - 12 * delta**2 / nu**2 + 3 * B * l43
    return h, hp, hpp


def pasting_oracle(which, sign, t, delta, lam, mu, sigma, r, p, beta, T, margin=None):
    """Smooth-pasting root function at extended precision."""
    o = consts_oracle(mu, sigma, r, p, beta, T)
    p = mp.mpf(p)
    lam, t, delta = mp.mpf(lam), mp.mpf(t), mp.mpf(delta)
    m = o["M"] if margin is None else mp.mpf(margin)
    nu, theta = o["nu"], o["theta"]
    h, hp, _ = profile_oracle(delta, lam, nu, o["B"])
    tau = mp.mpf(T) - t
    edisc = mp.exp(-p * o["A"] * tau)
    common = (
        nu * lam
        - p * nu * o["gamma2"] * tau * lam ** (mp.mpf(5) / 3)
        + mp.mpf(sign) * p * nu * m * edisc * lam**2
        - p * h * lam
    )
    orient = 1 if which == 1 else -1
    return common + (orient + (theta + delta) * lam) * hp


def edge_root_oracle(which, sign, t, lam, mu, sigma, r, p, beta, T, margin=None, tol=None):
    """Band-edge offset by extended-precision bisection on the near side."""
    o = consts_oracle(mu, sigma, r, p, beta, T)
    half = o["nu"] * mp.cbrt(mp.mpf(lam)) / 2

    def f(d):
        return pasting_oracle(which, sign, t, d, lam, mu, sigma, r, p, beta, T, margin=margin)

    a, b = (-half, mp.mpf(0)) if which == 1 else (mp.mpf(0), half)
    fa, fb = f(a), f(b)
    assert mp.sign(fa) != mp.sign(fb), "oracle bracket lost the root"
    tol = mp.mpf(10) ** (-40) if tol is None else mp.mpf(tol)
    for _ in range(300):
        m_ = (a + b) / 2
        fm = f(m_)
        if mp.sign(fm) == mp.sign(fa):
            a, fa = m_, fm
        else:
            b, fb = m_, fm
        if b - a < tol:
            break
    return (a + b) / 2
