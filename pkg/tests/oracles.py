"""Independent reference computations in arbitrary precision.

Nothing here imports the package's numerical code: every density is written
out scalar by scalar with mpmath so that it can serve as an oracle.
"""

import mpmath as mp

mp.mp.dps = 40
LOG2PI = mp.log(2 * mp.pi)


def _f(x):
    return x if isinstance(x, mp.mpf) else mp.mpf(float(x))


def normal(x, mean, prec):
    x, mean, prec = _f(x), _f(mean), _f(prec)
    return mp.log(prec) / 2 - LOG2PI / 2 - prec * (x - mean) ** 2 / 2


def gamma_density(x, shape, rate):
    x, a, b = _f(x), _f(shape), _f(rate)
    if x <= 0:
        return -mp.inf
    return a * mp.log(b) - mp.loggamma(a) + (a - 1) * mp.log(x) - b * x


def poisson(y, theta):
    y = mp.mpf(int(y))
    return y * mp.log(theta) - theta - mp.loggamma(y + 1)


def bernoulli_logit(d, x):
    return _f(d) * x - mp.log(1 + mp.exp(x))


def _mat(A):
    return mp.matrix([[_f(v) for v in row] for row in A])


def mvn(x, mean, cov):
    p = len(x)
    S = _mat(cov)
    r = mp.matrix([_f(x[i]) - mean[i] for i in range(p)])
    quad = (r.T * mp.inverse(S) * r)[0]
    return -p * LOG2PI / 2 - mp.log(mp.det(S)) / 2 - quad / 2


def inverse_wishart(Lam, nu, Omega):
    p = len(Lam)
    L, O = _mat(Lam), _mat(Omega)
    nu = _f(nu)
    log_gamma_p = p * (p - 1) / mp.mpf(4) * mp.log(mp.pi) + mp.fsum(
        mp.loggamma(nu / 2 + mp.mpf(1 - j) / 2) for j in range(1, p + 1))
    tr = sum((O * mp.inverse(L))[i, i] for i in range(p))
    return (nu / 2 * mp.log(mp.det(O)) - nu * p / 2 * mp.log(2) - log_gamma_p
            - (nu + p + 1) / 2 * mp.log(mp.det(L)) - tr / 2)


def centered(stars):
    K = len(stars)
    cols = len(stars[0])
    means = [mp.fsum(_f(stars[k][j]) for k in range(K)) / K for j in range(cols)]
    return [[_f(stars[k][j]) - means[j] for j in range(cols)] for k in range(K)]


def log_posterior(state, matches, spec):
    """Joint log-density, summed term by term.

    ``matches`` are MatchRecord-like (1-based codes, efficiencies as
    ``(ser, att, def, blo)``); ``state``/``spec`` are read field by field.
    """
    total = []
    a = centered(state.alpha_star.tolist())
    b = centered(state.beta_star.tolist())
    mu, lam = _f(state.mu), _f(state.lam)
    g = [_f(v) for v in state.gamma]
    e = [_f(v) for v in state.eta]
    for m in matches:
        h, w = m.home - 1, m.away - 1
        ser_h, att_h, def_h, blo_h = (_f(v) for v in m.eff_home)
        ser_a, att_a, def_a, blo_a = (_f(v) for v in m.eff_away)
        log_th = (mu + lam + a[h][0] + a[h][1] * att_h + a[h][2] * ser_h
                  + b[w][0] + b[w][1] * def_a + b[w][2] * blo_a)
        log_ta = (mu + a[w][0] + a[w][1] * att_a + a[w][2] * ser_a
                  + b[h][0] + b[h][1] * def_h + b[h][2] * blo_h)
        total.append(poisson(m.y_h, mp.exp(log_th)))
        total.append(poisson(m.y_a, mp.exp(log_ta)))
        y_h, y_a = _f(m.y_h), _f(m.y_a)
        total.append(bernoulli_logit(m.d_s, g[0] + g[1] * y_h + g[2] * y_a))
        total.append(bernoulli_logit(m.d_m, e[0] + e[1] * y_h + e[2] * y_a + e[3] * _f(m.d_s)))

    t0 = spec.normal_fixed_precision
    total += [normal(state.mu, 0, t0), normal(state.lam, 0, t0)]
    total += [normal(v, 0, spec.logistic_precision) for v in list(state.gamma) + list(state.eta)]
    hyp = state.hyper
    K = state.alpha_star.shape[0]
    if hasattr(hyp, "tau_alpha"):
        for stars, means, precs in ((state.alpha_star, hyp.mu_alpha, hyp.tau_alpha),
                                    (state.beta_star, hyp.mu_beta, hyp.tau_beta)):
            for j in range(3):
                if precs[j] <= 0:
                    return -mp.inf
                total += [normal(stars[k, j], means[j], precs[j]) for k in range(K)]
                total.append(normal(means[j], 0, t0))
                total.append(gamma_density(precs[j], spec.gamma_shape, spec.gamma_rate))
        return mp.fsum(total)

    xp = spec.xi_prior
    for stars, mu_raw, xi, Lam in ((state.alpha_star, hyp.mu_raw_alpha, hyp.xi_alpha, hyp.Lambda_alpha),
                                   (state.beta_star, hyp.mu_raw_beta, hyp.xi_beta, hyp.Lambda_beta)):
        for j in range(3):
            if xp.kind == "uniform":
                if not xp.low < xi[j] < xp.high:
                    return -mp.inf
                total.append(-mp.log(_f(xp.high) - _f(xp.low)))
            else:
                total.append(normal(xi[j], 0, 1 / _f(xp.sd) ** 2))
        total.append(inverse_wishart(Lam.tolist(), spec.iw_nu, spec.iw_scale))
        cov = [[_f(xi[j]) * _f(Lam[j][l]) * _f(xi[l]) for l in range(3)] for j in range(3)]
        mean = [_f(xi[j]) * _f(mu_raw[j]) for j in range(3)]
        for k in range(K):
            total.append(mvn(stars[k].tolist(), mean, cov))
        total += [normal(mu_raw[j], 0, t0) for j in range(3)]
    return mp.fsum(total)
