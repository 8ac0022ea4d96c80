"""Compiled inner loops for Gaussian-mixture targets.

Every gradient and energy evaluation of a :class:`GaussianMixture` goes
through these functions, so single-step and blocked integration produce
bitwise-identical trajectories.
"""

import numba
import numpy as np

_LOG_2PI = float(np.log(2.0 * np.pi))


@numba.njit(cache=True)
def _component_terms(x, logc, means, precisions, out_logp, out_y):
    # out_logp[k] = log w_k + log N(x; mu_k, Sigma_k); out_y[k] = P_k (x - mu_k)
    K, D = means.shape
    for k in range(K):
        q = 0.0
        for a in range(D):
            acc = 0.0
            for b in range(D):
                acc += precisions[k, a, b] * (x[b] - means[k, b])
            out_y[k, a] = acc
            q += (x[a] - means[k, a]) * acc
        out_logp[k] = logc[k] - 0.5 * q


@numba.njit(cache=True)
def mixture_potential_rows(X, logc, means, precisions):
    n = X.shape[0]
    K, D = means.shape
    out = np.empty(n)
    lp = np.empty(K)
    y = np.empty((K, D))
    for i in range(n):
        _component_terms(X[i], logc, means, precisions, lp, y)
        m = lp.max()
        s = 0.0
        for k in range(K):
            s += np.exp(lp[k] - m)
        out[i] = -(m + np.log(s))
    return out


@numba.njit(cache=True)
def _grad_into(x, logc, means, precisions, lp, y, g):
    K, D = means.shape
    _component_terms(x, logc, means, precisions, lp, y)
    m = lp.max()
    s = 0.0
    for k in range(K):
        lp[k] = np.exp(lp[k] - m)
        s += lp[k]
    for a in range(D):
        g[a] = 0.0
    for k in range(K):
        r = lp[k] / s
        for a in range(D):
            g[a] += r * y[k, a]


@numba.njit(cache=True)
def mixture_grad_rows(X, logc, means, precisions):
    n = X.shape[0]
    K, D = means.shape
    out = np.empty((n, D))
    lp = np.empty(K)
    y = np.empty((K, D))
    for i in range(n):
        _grad_into(X[i], logc, means, precisions, lp, y, out[i])
    return out


@numba.njit(cache=True)
def nh_block(theta, p, xi, temps, eps, minv, Q, noise, n_steps,
             logc, means, precisions, kin_sum, th_sum, th2_sum, thin, trace):
    """Advance every replica ``n_steps`` thermostatted steps in place.

    ``noise`` has shape ``(n_steps, R, D)`` (additive gradient noise) or a
    leading dimension of zero for exact gradients. If ``trace`` is
    non-empty, positions after every ``thin``-th step are written to
    ``trace[(t + 1) // thin - 1]``. Returns ``(step, rung)`` of the first
    non-finite state, or ``(-1, -1)``.
    """
    R, D = theta.shape
    K = means.shape[0]
    lp = np.empty(K)
    y = np.empty((K, D))
    g = np.empty(D)
    noisy = noise.shape[0] > 0
    tracing = trace.shape[0] > 0
    for t in range(n_steps):
        for j in range(R):
            _grad_into(theta[j], logc, means, precisions, lp, y, g)
            if noisy:
                for a in range(D):
                    g[a] += noise[t, j, a]
            T = temps[j]
            z = xi[j]
            kin = 0.0
            ok = np.isfinite(z)
            for a in range(D):
                pa = p[j, a] - eps * g[a] / T - eps * z * p[j, a]
                p[j, a] = pa
                theta[j, a] += eps * minv[a] * pa
                kin += pa * minv[a] * pa
                th = theta[j, a]
                th_sum[j, a] += th
                th2_sum[j, a] += th * th
                ok = ok and np.isfinite(pa) and np.isfinite(th)
            xi[j] = z + eps * (kin - D) / Q
            kin_sum[j] += kin
            if not (ok and np.isfinite(xi[j])):
                return t, j
            if tracing and (t + 1) % thin == 0:
                for a in range(D):
                    trace[(t + 1) // thin - 1, j, a] = theta[j, a]
    return -1, -1


@numba.njit(cache=True)
def leapfrog(theta, p, eps, minv, n_leapfrog, noise, logc, means, precisions):
    """Leapfrog ``n_leapfrog`` steps of unit-temperature Hamiltonian dynamics.

    Uses ``n_leapfrog + 1`` gradient evaluations; row ``i`` of ``noise``
    perturbs the ``i``-th evaluation (empty ``noise`` means exact).
    """
    D = theta.shape[0]
    K = means.shape[0]
    lp = np.empty(K)
    y = np.empty((K, D))
    g = np.empty(D)
    th = theta.copy()
    mom = p.copy()
    if n_leapfrog == 0:
        return th, mom
    noisy = noise.shape[0] > 0
    _grad_into(th, logc, means, precisions, lp, y, g)
    if noisy:
        for a in range(D):
            g[a] += noise[0, a]
    for a in range(D):
        mom[a] -= 0.5 * eps * g[a]
    for i in range(n_leapfrog):
        for a in range(D):
            th[a] += eps * minv[a] * mom[a]
        _grad_into(th, logc, means, precisions, lp, y, g)
        if noisy:
            for a in range(D):
                g[a] += noise[i + 1, a]
        scale = eps if i < n_leapfrog - 1 else 0.5 * eps
        for a in range(D):
            mom[a] -= scale * g[a]
    return th, mom
