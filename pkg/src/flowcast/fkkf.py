"""Sub-space kernel Kalman filter: learning, gain projection, filtering.

The filter tracks a belief over a hidden flow state whose mean and
covariance are embedded in a Gaussian-kernel feature space.  With m
training transition pairs (x_t -> x'_t, each with an aligned
observation y_t) the belief is represented by finite coordinates over
the feature maps of n <= m inducing pairs:

    mean coordinates  n_t in R^n,   covariance coordinates P_t in R^(n x n).

Updates are linear in these coordinates:

    prediction:  n-_{t+1} = T n_t,            P-_{t+1} = T P_t T' + V
    gain:        Q_t = P- O' (G_yy O P- O' + kappa I_m)^-1
    innovation:  n_t = n-_t + Q_t (k_y - G_yy O n-_t)
                 P_t = P-_t - Q_t G_yy O P-_t
    readout:     mu_x = X O n_t,               Sigma_x = X O P_t O' X'

where G_yy is the m x m Gram of the training observations, k_y the
kernel responses of the incoming observation against them, X the d x m
matrix of training state vectors, T the n x n transition model and O
the m x n observation model.

T and O are ridge regressions restricted to the inducing subspace but
estimated from all m pairs.  The subspace solve uses the Gram of the
inducing points as the ridge metric,

    D(lam) = (Kbar' Kbar + lam K_nn)^-1 Kbar',

which makes the n = m case algebraically identical to the full-sample
recursion with T = (K_xx + lam I_m)^-1 K_xx' (and likewise O); the
restriction is therefore exact when no subsampling happens.  Gain and
covariance sequences never depend on observed values, so they are
projected once per model ahead of filtering.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import reduction, spectral
from .errors import (BadDimension, FlowTooShort, InsufficientData,
                     NumericalFailure, SubspaceTooLarge)
from .kernelcore import (DEFAULT_SUBSET_SIZE, KernelSpec, gram, kernel_vector,
                         median_heuristic)
from .reduction import PcaBasis, Standardizer
from .spectral import ChunkConfig

MODEL_FORMAT_VERSION = 1

_JITTERS = (0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6)
_COV_JITTER = 1e-8
_EIG_FLOOR = 1e-14  # relative floor when whitening the inducing Gram


@dataclass(frozen=True)
class FkkfHyperparams:
    lambda_t: float = 1e-3
    lambda_o: float = 1e-3
    state_bw_scale: float = 1.0
    obs_bw_scale: float = 1.0
    kappa: float = 1e-3

    def __post_init__(self):
        for name in ("lambda_t", "lambda_o", "state_bw_scale", "obs_bw_scale", "kappa"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")

    def as_tuple(self):
        return (self.lambda_t, self.lambda_o, self.state_bw_scale,
                self.obs_bw_scale, self.kappa)


@dataclass(frozen=True)
class StateWindowConfig:
    """Lookahead windows whose spectra form the hidden state.

    The state at chunk index t concatenates the spectra of the next
    horizons_s[0], horizons_s[1], ... seconds of signal; the observation
    is the first-horizon spectrum alone.
    """

    horizons_s: tuple = (1.0, 2.0, 3.0)
    observation_horizon_s: float = 1.0

    def __post_init__(self):
        horizons = tuple(float(h) for h in self.horizons_s)
        object.__setattr__(self, "horizons_s", horizons)
        if not horizons or any(h <= 0 for h in horizons):
            raise ValueError("horizons_s must be positive")
        if list(horizons) != sorted(horizons):
            raise ValueError("horizons_s must be ascending")
        if abs(self.observation_horizon_s - horizons[0]) > 1e-12:
            raise ValueError("observation_horizon_s must equal the first horizon")

    def scaled(self, base_s: float) -> "StateWindowConfig":
        """The same horizon pattern anchored at a different base length."""
        ratio = base_s / self.horizons_s[0]
        return StateWindowConfig(horizons_s=tuple(h * ratio for h in self.horizons_s),
                                 observation_horizon_s=base_s)


@dataclass
class FilterState:
    """Belief coordinates at one filter step.

    ``step`` counts completed innovations; a prior at step t consumes the
    t-th projected gain.
    """

    n_t: np.ndarray
    p_t: np.ndarray
    is_posterior: bool
    step: int = 0


@dataclass
class ProjectedGains:
    """Observation-independent gain/covariance sequences, cached offline."""

    q_seq: list          # n x m Kalman gains per innovation step
    qgo_seq: list        # cached Q_t @ (G_yy O), n x n
    p_post_seq: list     # posterior covariance per step
    p_prior_seq: list    # prior covariance per step (entry 0 = learned prior)

    def __len__(self):
        return len(self.q_seq)


@dataclass
class Prediction:
    """Multi-step forecast after filtering an observed prefix."""

    mean_frames: np.ndarray   # (steps, obs_dim) predicted reduced observations
    mean_kbit: np.ndarray     # reassembled time-domain forecast (empty without frontend)
    cov_diag: np.ndarray      # (steps, obs_dim) predictive variance diagonal
    horizon_s: float
    filtered_state: FilterState


# ---------------------------------------------------------------------------
# preprocessing frontend
# ---------------------------------------------------------------------------


@dataclass
class SpectralFrontend:
    """Training-fitted transforms between kbit space and reduced frame space."""

    chunk_cfg: ChunkConfig
    window_cfg: StateWindowConfig
    reducers: list  # [(Standardizer, PcaBasis)] per horizon block

    @property
    def obs_dim(self) -> int:
        return self.reducers[0][1].kept_dim

    @property
    def state_dim(self) -> int:
        return sum(basis.kept_dim for _, basis in self.reducers)

    def horizon_samples(self) -> list:
        t_s = self.chunk_cfg.sample_interval_s
        out = []
        for h in self.window_cfg.horizons_s:
            n = h / t_s
            if abs(n - round(n)) > 1e-9:
                raise ValueError(f"horizon {h} not a multiple of the sample interval")
            out.append(int(round(n)))
        return out

    def reduce_observations(self, raw_frames: np.ndarray) -> np.ndarray:
        std, basis = self.reducers[0]
        return reduction.project(basis, std, raw_frames)

    def frames_to_kbit(self, reduced_frames: np.ndarray, n_steps: int) -> np.ndarray:
        """Inverse PCA -> de-standardize -> inverse STFT -> overlap-average."""
        std, basis = self.reducers[0]
        raw = reduction.inverse_project(basis, std, reduced_frames)
        width = self.horizon_samples()[0]
        spec = raw[:, 0::2] + 1j * raw[:, 1::2]
        chunks = np.fft.irfft(spec, n=width, axis=1)
        hop = self.chunk_cfg.hop_samples
        return spectral.overlap_average(chunks, hop, n_steps * hop)


def window_frames(series: np.ndarray, chunk_cfg: ChunkConfig,
                  window_cfg: StateWindowConfig) -> list:
    """Raw lookahead spectra, one matrix per horizon, aligned by chunk index.

    Index t covers samples [t*hop, t*hop + horizon); only indices whose
    largest-horizon window fits inside the series are kept, so a series
    of N samples yields floor((N - H_max) / hop) aligned rows.
    """
    series = np.asarray(series, dtype=float).ravel()
    hop = chunk_cfg.hop_samples
    t_s = chunk_cfg.sample_interval_s
    widths = []
    for h in window_cfg.horizons_s:
        n = h / t_s
        if abs(n - round(n)) > 1e-9:
            raise ValueError(f"horizon {h}s is not a multiple of T_S={t_s}s")
        widths.append(int(round(n)))
    h_max = max(widths)
    count = (series.size - h_max) // hop
    if count < 1:
        raise FlowTooShort(
            f"series of {series.size} samples cannot cover a {h_max}-sample lookahead")
    out = []
    for width in widths:
        windows = np.lib.stride_tricks.sliding_window_view(series, width)[0:count * hop:hop]
        spec = np.fft.rfft(windows, axis=1)
        frames = np.empty((count, 2 * spec.shape[1]))
        frames[:, 0::2] = spec.real
        frames[:, 1::2] = spec.imag
        out.append(frames)
    return out


def build_state_windows(series: np.ndarray, window_cfg: StateWindowConfig,
                        chunk_cfg: ChunkConfig, reducers: list | None = None):
    """Aligned (states, observations) rows for one flow.

    With reducers, each horizon block is standardized and PCA-reduced
    independently before concatenation; without, blocks are concatenated
    raw and the observation is the raw first-horizon frame.
    """
    blocks = window_frames(series, chunk_cfg, window_cfg)
    if reducers is not None:
        blocks = [reduction.project(basis, std, block)
                  for (std, basis), block in zip(reducers, blocks)]
    states = np.hstack(blocks)
    observations = blocks[0]
    return states, observations


def observation_frames(series: np.ndarray, chunk_cfg: ChunkConfig,
                       horizon_s: float) -> np.ndarray:
    """Raw observation spectra at every chunk index whose window fits."""
    series = np.asarray(series, dtype=float).ravel()
    hop = chunk_cfg.hop_samples
    width = int(round(horizon_s / chunk_cfg.sample_interval_s))
    if series.size < width:
        raise FlowTooShort(f"series of {series.size} samples shorter than one window")
    count = (series.size - width) // hop + 1
    windows = np.lib.stride_tricks.sliding_window_view(series, width)[0:count * hop:hop]
    spec = np.fft.rfft(windows, axis=1)
    frames = np.empty((count, 2 * spec.shape[1]))
    frames[:, 0::2] = spec.real
    frames[:, 1::2] = spec.imag
    return frames


# ---------------------------------------------------------------------------
# numerics
# ---------------------------------------------------------------------------


def _sym(mat: np.ndarray) -> np.ndarray:
    return 0.5 * (mat + mat.T)


def _solve_square(a: np.ndarray, b: np.ndarray, name: str) -> np.ndarray:
    """LU solve with escalating diagonal jitter (1e-10 .. 1e-6, x10 per retry)."""
    eye = np.eye(a.shape[0])
    for jitter in _JITTERS:
        try:
            return scipy.linalg.solve(a + jitter * eye, b)
        except (scipy.linalg.LinAlgError, ValueError):
            continue
    raise NumericalFailure(name, "singular despite jitter escalation")


def _clip_unstable_modes(t_sub: np.ndarray) -> np.ndarray:
    """Rescale eigenvalues of the transition model onto the unit disk.

    With n < m inducing pairs the subspace regression can admit spurious
    modes with |eigenvalue| > 1 that make open-loop multi-step rollouts
    diverge.  Modes inside the unit disk are left untouched, and a
    matrix whose spectral radius is already <= 1 is returned unchanged
    (bit-identical), which keeps the n = m case exactly equivalent to
    the full-sample recursion.
    """
    evals, evecs = np.linalg.eig(t_sub)
    magnitude = np.abs(evals)
    rho = magnitude.max()
    if rho <= 1.0 + 1e-9:
        return t_sub
    clipped = evals * np.minimum(1.0, 1.0 / magnitude)
    try:
        # the real view of a complex result is strided; copy so BLAS gets a
        # contiguous operand in the per-step hot path
        return np.ascontiguousarray(
            np.real(evecs @ np.diag(clipped) @ np.linalg.inv(evecs)))
    except np.linalg.LinAlgError:
        return t_sub / rho


class _SubspaceSolver:
    """Factorization shared by the transition and observation regressions.

    Whitening the inducing Gram K_nn and taking an SVD of the whitened
    cross-Gram gives D(lam) = (Kbar' Kbar + lam K_nn)^-1 Kbar' without
    ever forming the squared system explicitly.
    """

    def __init__(self, kbar: np.ndarray, knn: np.ndarray):
        evals, evecs = np.linalg.eigh(_sym(knn))
        floor = max(evals.max(), 0.0) * _EIG_FLOOR + 1e-300
        evals = np.maximum(evals, floor)
        self._root_inv = (evecs * (evals ** -0.5)) @ evecs.T
        m = kbar @ self._root_inv
        self._u, self._s, wt = np.linalg.svd(m, full_matrices=False)
        self._w = wt.T

    def dual(self, lam: float) -> np.ndarray:
        """D(lam), shape n x m."""
        filt = self._s / (self._s ** 2 + lam)
        return self._root_inv @ (self._w * filt) @ self._u.T


# ---------------------------------------------------------------------------
# model
# ---------------------------------------------------------------------------


@dataclass
class FkkfModel:
    """Learned sub-space filter model.  Immutable after learning."""

    x_pred: np.ndarray            # (m, d) training state vectors
    x_succ: np.ndarray            # (m, d) successor state vectors
    y_train: np.ndarray           # (m, q) observations aligned with x_pred
    subspace_indices: np.ndarray  # (n,) inducing pair indices
    kbar_xx: np.ndarray           # (m, n) Gram(states, inducing states)
    kbar_xx_prime: np.ndarray     # (m, n) Gram(states, inducing successors)
    g_yy: np.ndarray              # (m, m) observation Gram
    t_sub: np.ndarray             # (n, n) transition model
    o_sub: np.ndarray             # (m, n) observation model (G_yy O = response map)
    go: np.ndarray                # (m, n) cached G_yy @ O
    xo: np.ndarray                # (d, n) cached X @ O readout
    v: np.ndarray                 # (n, n) transition noise covariance
    n1_prior: np.ndarray          # (n,) initial a-priori mean coordinates
    p1_prior: np.ndarray          # (n, n) initial a-priori covariance
    state_spec: KernelSpec
    obs_spec: KernelSpec
    hyper: FkkfHyperparams
    bandwidth_seed: int
    bandwidth_subset: int
    frontend: SpectralFrontend | None = None

    @property
    def n_pairs(self) -> int:
        return self.x_pred.shape[0]

    @property
    def subspace_size(self) -> int:
        return self.subspace_indices.size

    @property
    def state_dim(self) -> int:
        return self.x_pred.shape[1]

    @property
    def obs_dim(self) -> int:
        return self.y_train.shape[1]

    def initial_state(self) -> FilterState:
        return FilterState(n_t=self.n1_prior.copy(), p_t=self.p1_prior.copy(),
                           is_posterior=False, step=0)


def _subspace_stride_indices(m: int, requested: int) -> np.ndarray:
    """Every ceil(m/n)-th time-ordered pair; covers all flows, deterministic."""
    stride = max(1, math.ceil(m / requested))
    return np.arange(0, m, stride)




def learn_core(x_pred: np.ndarray, x_succ: np.ndarray, y_train: np.ndarray,
               hyper: FkkfHyperparams, subspace_size: int,
               bandwidth_subset: int = DEFAULT_SUBSET_SIZE, bandwidth_seed: int = 0,
               frontend: SpectralFrontend | None = None,
               stabilize_transition: bool = True) -> FkkfModel:
    """Estimate all filter matrices from aligned (state, successor, observation) rows.

    Bandwidths come from the median heuristic on the training rows,
    scaled by the hyperparameters.  The transition/observation ridge
    systems share one factorization; V and the initial belief are taken
    from the empirical statistics of the training coordinates.
    """
    x_pred = np.atleast_2d(np.asarray(x_pred, dtype=float))
    x_succ = np.atleast_2d(np.asarray(x_succ, dtype=float))
    y_train = np.atleast_2d(np.asarray(y_train, dtype=float))
    m = x_pred.shape[0]
    if x_succ.shape != x_pred.shape:
        raise BadDimension("x_pred and x_succ must have identical shape")
    if y_train.shape[0] != m:
        raise BadDimension("y_train must align with x_pred rows")
    if m < 2:
        raise InsufficientData(f"need >= 2 training pairs, got {m}")
    if subspace_size < 1:
        raise ValueError("subspace_size must be >= 1")
    if subspace_size > m:
        raise SubspaceTooLarge(f"subspace {subspace_size} > {m} training pairs")

    state_bw = median_heuristic(x_pred, bandwidth_subset, bandwidth_seed)
    obs_bw = median_heuristic(y_train, bandwidth_subset, bandwidth_seed)
    state_spec = KernelSpec(bandwidth=state_bw, scale_factor=hyper.state_bw_scale)
    obs_spec = KernelSpec(bandwidth=obs_bw, scale_factor=hyper.obs_bw_scale)

    idx = _subspace_stride_indices(m, subspace_size)
    full = idx.size == m
    sub_pred = x_pred if full else x_pred[idx]
    sub_succ = x_succ if full else x_succ[idx]

    kbar = gram(x_pred, sub_pred, state_spec)
    knn = kbar[idx]
    kbar_prime = gram(x_pred, sub_succ, state_spec)
    bnn = kbar_prime[idx]
    g_yy = gram(y_train, y_train, obs_spec)

    solver = _SubspaceSolver(kbar, knn)
    t_sub = solver.dual(hyper.lambda_t) @ kbar_prime
    if stabilize_transition:
        t_sub = _clip_unstable_modes(t_sub)
    o_sub = solver.dual(hyper.lambda_o).T @ bnn
    go = g_yy @ o_sub
    xo = x_pred.T @ o_sub

    # Coordinates of training states in the inducing successor basis, via
    # the same SoR solve as the models: bounded even on near-singular Grams.
    k_succ = gram(x_succ, sub_succ, state_spec)
    succ_solver = _SubspaceSolver(k_succ, k_succ[idx])
    coord_map = succ_solver.dual(hyper.lambda_t)
    coords_pred = coord_map @ gram(x_succ, x_pred, state_spec)
    coords_succ = coord_map @ (k_succ if full else gram(x_succ, x_succ, state_spec))
    resid = coords_succ - t_sub @ coords_pred
    n = idx.size
    v = _sym(np.cov(resid)) + _COV_JITTER * np.eye(n)
    n1 = coords_pred.mean(axis=1)
    p1 = _sym(np.cov(coords_pred)) + _COV_JITTER * np.eye(n)

    return FkkfModel(x_pred=x_pred, x_succ=x_succ, y_train=y_train,
                     subspace_indices=idx, kbar_xx=kbar, kbar_xx_prime=kbar_prime,
                     g_yy=g_yy, t_sub=t_sub, o_sub=o_sub, go=go, xo=xo, v=v,
                     n1_prior=n1, p1_prior=p1, state_spec=state_spec,
                     obs_spec=obs_spec, hyper=hyper, bandwidth_seed=bandwidth_seed,
                     bandwidth_subset=bandwidth_subset, frontend=frontend)


def _pairs_from_chains(state_rows: list, obs_rows: list):
    """Transition pairs within each flow; no pair crosses a flow boundary."""
    preds, succs, obs = [], [], []
    for states, observations in zip(state_rows, obs_rows):
        if states.shape[0] >= 2:
            preds.append(states[:-1])
            succs.append(states[1:])
            obs.append(observations[:-1])
    if not preds:
        raise InsufficientData("no flow yields a transition pair")
    return np.vstack(preds), np.vstack(succs), np.vstack(obs)


def learn(train_flows, hyper: FkkfHyperparams, subspace_size: int,
          chunk_cfg: ChunkConfig, window_cfg: StateWindowConfig,
          kept_dim: int = 80, bandwidth_subset: int = DEFAULT_SUBSET_SIZE,
          bandwidth_seed: int = 0, stabilize_transition: bool = True) -> FkkfModel:
    """Learn a traffic model from whole flows.

    Per-horizon standardizers and PCA bases are fitted on the training
    frames only; held-out flows must be transformed with this model's
    frontend.
    """
    train_flows = list(train_flows)
    if not train_flows:
        raise InsufficientData("no training flows")
    per_flow_blocks = [window_frames(f.samples, chunk_cfg, window_cfg)
                       for f in train_flows]
    n_horizons = len(window_cfg.horizons_s)
    reducers = []
    for h in range(n_horizons):
        stacked = np.vstack([blocks[h] for blocks in per_flow_blocks])
        std = reduction.fit_standardizer(stacked)
        kept = max(1, min(kept_dim, stacked.shape[1], stacked.shape[0] - 1))
        basis = reduction.fit_pca(std.apply(stacked), kept)
        reducers.append((std, basis))
    frontend = SpectralFrontend(chunk_cfg=chunk_cfg, window_cfg=window_cfg,
                                reducers=reducers)
    state_rows, obs_rows = [], []
    for blocks in per_flow_blocks:
        reduced = [reduction.project(basis, std, block)
                   for (std, basis), block in zip(reducers, blocks)]
        state_rows.append(np.hstack(reduced))
        obs_rows.append(reduced[0])
    x_pred, x_succ, y_train = _pairs_from_chains(state_rows, obs_rows)
    subspace = min(subspace_size, x_pred.shape[0])
    return learn_core(x_pred, x_succ, y_train, hyper, subspace,
                      bandwidth_subset=bandwidth_subset,
                      bandwidth_seed=bandwidth_seed, frontend=frontend,
                      stabilize_transition=stabilize_transition)


# ---------------------------------------------------------------------------
# filtering
# ---------------------------------------------------------------------------


def _innovation_cov(model: FkkfModel, p_prior: np.ndarray):
    inner = model.go @ p_prior @ model.o_sub.T
    inner.flat[::inner.shape[0] + 1] += model.hyper.kappa
    q = _solve_square(inner.T, model.o_sub @ p_prior, "innovation_gain").T
    qgo = q @ model.go
    p_post = _sym(p_prior - qgo @ p_prior)
    return q, qgo, p_post


def _prediction_cov(model: FkkfModel, p_post: np.ndarray) -> np.ndarray:
    return _sym(model.t_sub @ p_post @ model.t_sub.T + model.v)


def project(model: FkkfModel, steps: int) -> ProjectedGains:
    """Precompute gains and covariances for `steps` innovations.

    Nothing here depends on observed values, so the result can be cached
    before any test data arrives and shared by concurrent filter runs.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    q_seq, qgo_seq, post_seq, prior_seq = [], [], [], []
    p_prior = model.p1_prior
    n = model.subspace_size
    eye = np.eye(n)
    for _ in range(steps):
        q, qgo, p_post = _innovation_cov(model, p_prior)
        # Cholesky of P + tol*I certifies min eigenvalue >= -tol; the
        # tolerance is relative to the covariance scale (cancellation in
        # P - Q G O P leaves roundoff of order eps * ||P||).
        tol = 1e-6 * max(1.0, float(np.trace(p_post)))
        try:
            scipy.linalg.cho_factor(p_post + tol * eye, lower=True)
        except scipy.linalg.LinAlgError:
            raise NumericalFailure("posterior_covariance",
                                   "lost positive semi-definiteness") from None
        q_seq.append(q)
        qgo_seq.append(qgo)
        post_seq.append(p_post)
        prior_seq.append(p_prior)
        p_prior = _prediction_cov(model, p_post)
    return ProjectedGains(q_seq=q_seq, qgo_seq=qgo_seq, p_post_seq=post_seq,
                          p_prior_seq=prior_seq)


def innovation_update(state: FilterState, y_frame: np.ndarray,
                      gains: ProjectedGains, model: FkkfModel) -> FilterState:
    """Fold one observation into an a-priori belief."""
    if state.is_posterior:
        raise ValueError("innovation_update expects an a-priori state")
    if state.step >= len(gains):
        raise ValueError(f"no projected gain for step {state.step}")
    y_frame = np.asarray(y_frame, dtype=float).ravel()
    if y_frame.size != model.obs_dim:
        raise BadDimension(f"observation dim {y_frame.size} != {model.obs_dim}")
    k_y = kernel_vector(model.y_train, y_frame, model.obs_spec)
    residual = k_y - model.go @ state.n_t
    n_post = state.n_t + gains.q_seq[state.step] @ residual
    p_post = _sym(state.p_t - gains.qgo_seq[state.step] @ state.p_t)
    return FilterState(n_t=n_post, p_t=p_post, is_posterior=True, step=state.step)


def prediction_update(state: FilterState, model: FkkfModel) -> FilterState:
    """Advance the belief one step through the learned dynamics."""
    return FilterState(n_t=model.t_sub @ state.n_t,
                       p_t=_prediction_cov(model, state.p_t),
                       is_posterior=False, step=state.step + 1)


def predict_p_steps(state: FilterState, p: int, model: FkkfModel) -> list:
    """p prediction updates with no innovation; returns every intermediate prior."""
    if p < 1:
        raise ValueError("p must be >= 1")
    priors = []
    current = state
    for _ in range(p):
        current = prediction_update(current, model)
        priors.append(current)
    return priors


def reconstruct(state: FilterState, model: FkkfModel):
    """Map belief coordinates back to the reduced state space."""
    mu = model.xo @ state.n_t
    sigma = _sym(model.xo @ state.p_t @ model.xo.T)
    return mu, sigma


def run_filter(model: FkkfModel, observed_frames: np.ndarray,
               predict_horizon_steps: int,
               gains: ProjectedGains | None = None) -> Prediction:
    """Filter an observed prefix, then forecast ahead without observations.

    Every observed frame triggers an innovation.  Each forecast state is
    reconstructed; with a spectral frontend the observation-horizon block
    is mapped back to a kbit series via inverse PCA, de-standardization
    and inverse STFT with overlap-averaging.
    """
    observed = np.atleast_2d(np.asarray(observed_frames, dtype=float))
    if observed.size == 0:
        raise ValueError("observed_frames must be non-empty")
    if gains is None or len(gains) < observed.shape[0]:
        gains = project(model, observed.shape[0])
    state = model.initial_state()
    for i, frame in enumerate(observed):
        state = innovation_update(state, frame, gains, model)
        if i + 1 < observed.shape[0]:
            state = prediction_update(state, model)

    obs_dim = model.obs_dim
    frontend = model.frontend
    if predict_horizon_steps > 0:
        priors = predict_p_steps(state, predict_horizon_steps, model)
        mean_frames = np.empty((len(priors), obs_dim))
        cov_diag = np.empty((len(priors), obs_dim))
        for i, prior in enumerate(priors):
            mu, sigma = reconstruct(prior, model)
            mean_frames[i] = mu[:obs_dim]
            cov_diag[i] = np.diag(sigma)[:obs_dim]
    else:
        mean_frames = np.empty((0, obs_dim))
        cov_diag = np.empty((0, obs_dim))

    if frontend is not None:
        horizon_s = predict_horizon_steps * frontend.chunk_cfg.chunk_interval_s
        if predict_horizon_steps > 0:
            mean_kbit = frontend.frames_to_kbit(mean_frames, predict_horizon_steps)
        else:
            mean_kbit = np.empty(0)
    else:
        horizon_s = float(predict_horizon_steps)
        mean_kbit = np.empty(0)
    return Prediction(mean_frames=mean_frames, mean_kbit=mean_kbit,
                      cov_diag=cov_diag, horizon_s=horizon_s,
                      filtered_state=state)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

_ARRAY_FIELDS = ("x_pred", "x_succ", "y_train", "subspace_indices", "kbar_xx",
                 "kbar_xx_prime", "g_yy", "t_sub", "o_sub", "go", "xo", "v",
                 "n1_prior", "p1_prior")


def save_model(model: FkkfModel, path) -> None:
    """Write a model to a single self-describing .npz archive.

    Matrices round-trip bit-exactly; scalars, kernel specs and frontend
    configuration travel in an embedded JSON document together with a
    format-version integer.
    """
    meta = {
        "format_version": MODEL_FORMAT_VERSION,
        "hyper": model.hyper.as_tuple(),
        "state_spec": [model.state_spec.bandwidth, model.state_spec.scale_factor],
        "obs_spec": [model.obs_spec.bandwidth, model.obs_spec.scale_factor],
        "bandwidth_seed": model.bandwidth_seed,
        "bandwidth_subset": model.bandwidth_subset,
        "has_frontend": model.frontend is not None,
    }
    arrays = {name: getattr(model, name) for name in _ARRAY_FIELDS}
    if model.frontend is not None:
        fe = model.frontend
        meta["chunk_cfg"] = [fe.chunk_cfg.sample_interval_s,
                             fe.chunk_cfg.chunk_interval_s,
                             fe.chunk_cfg.chunk_length_s]
        meta["window_cfg"] = {"horizons_s": list(fe.window_cfg.horizons_s),
                              "observation_horizon_s": fe.window_cfg.observation_horizon_s}
        meta["n_blocks"] = len(fe.reducers)
        for i, (std, basis) in enumerate(fe.reducers):
            arrays[f"block{i}_means"] = std.means
            arrays[f"block{i}_stds"] = std.stds
            arrays[f"block{i}_components"] = basis.components
            arrays[f"block{i}_evr"] = basis.explained_variance_ratio
    arrays["meta_json"] = np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)
    # write through a file object so numpy cannot append its own .npz suffix
    # (atomic-rename callers pass suffix-less temp paths)
    with open(path, "wb") as fh:
        np.savez_compressed(fh, **arrays)


def load_model(path) -> FkkfModel:
    with np.load(path) as data:
        meta = json.loads(bytes(data["meta_json"].tobytes()).decode())
        if meta["format_version"] != MODEL_FORMAT_VERSION:
            raise ValueError(f"unsupported model format {meta['format_version']}")
        arrays = {name: data[name] for name in _ARRAY_FIELDS}
        frontend = None
        if meta["has_frontend"]:
            t_s, t_c, w = meta["chunk_cfg"]
            chunk_cfg = ChunkConfig(sample_interval_s=t_s, chunk_interval_s=t_c,
                                    chunk_length_s=w)
            window_cfg = StateWindowConfig(
                horizons_s=tuple(meta["window_cfg"]["horizons_s"]),
                observation_horizon_s=meta["window_cfg"]["observation_horizon_s"])
            reducers = []
            for i in range(meta["n_blocks"]):
                std = Standardizer(means=data[f"block{i}_means"],
                                   stds=data[f"block{i}_stds"])
                comp = data[f"block{i}_components"]
                basis = PcaBasis(components=comp,
                                 explained_variance_ratio=data[f"block{i}_evr"],
                                 original_dim=comp.shape[0], kept_dim=comp.shape[1])
                reducers.append((std, basis))
            frontend = SpectralFrontend(chunk_cfg=chunk_cfg, window_cfg=window_cfg,
                                        reducers=reducers)
    lam_t, lam_o, sbw, obw, kappa = meta["hyper"]
    hyper = FkkfHyperparams(lambda_t=lam_t, lambda_o=lam_o, state_bw_scale=sbw,
                            obs_bw_scale=obw, kappa=kappa)
    return FkkfModel(state_spec=KernelSpec(bandwidth=meta["state_spec"][0],
                                           scale_factor=meta["state_spec"][1]),
                     obs_spec=KernelSpec(bandwidth=meta["obs_spec"][0],
                                         scale_factor=meta["obs_spec"][1]),
                     hyper=hyper, bandwidth_seed=meta["bandwidth_seed"],
                     bandwidth_subset=meta["bandwidth_subset"],
                     frontend=frontend, **arrays)
