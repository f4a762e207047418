"""Independent reference implementations used as test oracles.

Everything here is deliberately naive (direct summations, textbook
recursions) and kept separate from the library code paths it checks.
"""

import numpy as np

from flowcast.kernelcore import gram, kernel_vector


def naive_dft(x):
    """O(L^2) direct DFT summation."""
    x = np.asarray(x, dtype=float)
    L = x.size
    out = np.zeros(L, dtype=complex)
    for k in range(L):
        for t in range(L):
            out[k] += x[t] * np.exp(-2j * np.pi * k * t / L)
    return out


def naive_gram(a, b, eff_bw):
    """Double-loop Gaussian Gram matrix."""
    a, b = np.atleast_2d(a), np.atleast_2d(b)
    out = np.zeros((a.shape[0], b.shape[0]))
    for i in range(a.shape[0]):
        for j in range(b.shape[0]):
            d2 = np.sum((a[i] - b[j]) ** 2)
            out[i, j] = np.exp(-d2 / (2.0 * eff_bw ** 2))
    return out


def exhaustive_median_bandwidth(samples):
    """Median of all pairwise squared distances, sqrt'ed."""
    samples = np.atleast_2d(samples)
    sq = []
    for i in range(samples.shape[0]):
        for j in range(i + 1, samples.shape[0]):
            sq.append(float(np.sum((samples[i] - samples[j]) ** 2)))
    return float(np.sqrt(np.median(sq)))


class FullSpaceFilter:
    """Direct full-sample finite recursion, no inducing-point machinery.

    Implements m_t / S_t updates with T = (K_xx + lam_T I)^-1 K_xx',
    O = (K_xx + lam_O I)^-1 K_xx', the m x m gain solve, and the
    X O m_t reconstruction.  Noise V and the initial belief are taken
    from the model under test (the recursion, not their estimation, is
    what this oracle pins down).
    """

    def __init__(self, model):
        self.model = model
        s_spec, o_spec = model.state_spec, model.obs_spec
        lam_t, lam_o = model.hyper.lambda_t, model.hyper.lambda_o
        self.kappa = model.hyper.kappa
        k_xx = gram(model.x_pred, model.x_pred, s_spec)
        k_xxp = gram(model.x_pred, model.x_succ, s_spec)
        self.g_yy = gram(model.y_train, model.y_train, o_spec)
        m = k_xx.shape[0]
        eye = np.eye(m)
        self.t_mat = np.linalg.solve(k_xx + lam_t * eye, k_xxp)
        self.o_mat = np.linalg.solve(k_xx + lam_o * eye, k_xxp)
        self.go = self.g_yy @ self.o_mat
        self.m = m

    def run(self, observed, horizon):
        """Alternate innovation/prediction through the prefix, then roll out.

        Returns (posterior means, posterior covs, gains, forecast means).
        """
        model = self.model
        mt = model.n1_prior.copy()
        st = model.p1_prior.copy()
        means, covs, gains = [], [], []
        eye = np.eye(self.m)
        for i, y in enumerate(np.atleast_2d(observed)):
            inner = self.go @ st @ self.o_mat.T + self.kappa * eye
            q = np.linalg.solve(inner.T, self.o_mat @ st).T
            k_y = kernel_vector(model.y_train, y, model.obs_spec)
            mt = mt + q @ (k_y - self.go @ mt)
            st = st - q @ self.go @ st
            st = 0.5 * (st + st.T)
            means.append(mt.copy())
            covs.append(st.copy())
            gains.append(q)
            if i + 1 < np.atleast_2d(observed).shape[0]:
                mt = self.t_mat @ mt
                st = self.t_mat @ st @ self.t_mat.T + model.v
                st = 0.5 * (st + st.T)
        forecast = []
        for _ in range(horizon):
            mt = self.t_mat @ mt
            forecast.append(mt.copy())
        return means, covs, gains, forecast

    def reconstruct(self, mt):
        return self.model.x_pred.T @ (self.o_mat @ mt)


class TextbookKalman:
    """Classical linear-Gaussian Kalman filter."""

    def __init__(self, a, c, process_cov, obs_cov, x0, p0):
        self.a, self.c = a, c
        self.q, self.r = process_cov, obs_cov
        self.x, self.p = x0.astype(float).copy(), p0.astype(float).copy()

    def step(self, y):
        s = self.c @ self.p @ self.c.T + self.r
        gain = self.p @ self.c.T @ np.linalg.inv(s)
        self.x = self.x + gain @ (y - self.c @ self.x)
        self.p = self.p - gain @ self.c @ self.p
        posterior = self.x.copy()
        self.x = self.a @ self.x
        self.p = self.a @ self.p @ self.a.T + self.q
        return posterior


def ar2_ramp_forecast(last, step, horizon):
    """Closed form continuation of a linear ramp under x_t = 2x_{t-1} - x_{t-2}."""
    return last + step * np.arange(1, horizon + 1)
