"""Policy network: stacked graph filters with pointwise nonlinearities.

Each layer diffuses the node signal through the shift operator and mixes
features with tap matrices; the final layer outputs a 2D action mean per
robot. Actions are drawn from diagonal Gaussians with a globally shared,
learned per-axis log standard deviation. Gradients are computed by
hand-written reverse-mode accumulation (no autodiff dependency), exact up
to floating point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .graphs import DimensionMismatch, as_matrix

TANH = "tanh"
IDENTITY = "identity"

ACTION_DIM = 2
LOG_TWO_PI = math.log(2.0 * math.pi)


class SpecMismatch(ValueError):
    """Layer specs do not chain, or params do not match their specs."""


@dataclass(frozen=True)
class LayerSpec:
    """One graph-filter layer: F_in -> F_out with polynomial order k."""

    f_in: int
    f_out: int
    k: int
    activation: str = TANH


def validate_specs(specs) -> None:
    if not specs:
        raise SpecMismatch("need at least one layer")
    for i, spec in enumerate(specs):
        if spec.f_in < 1 or spec.f_out < 1:
            raise SpecMismatch(f"layer {i}: feature widths must be >= 1")
        if spec.k < 0:
            raise SpecMismatch(f"layer {i}: filter order must be >= 0")
        if spec.activation not in (TANH, IDENTITY):
            raise SpecMismatch(f"layer {i}: unknown activation {spec.activation!r}")
        if i and specs[i - 1].f_out != spec.f_in:
            raise SpecMismatch(
                f"layer {i}: f_in={spec.f_in} does not chain with previous"
                f" f_out={specs[i - 1].f_out}")
    last = specs[-1]
    if last.f_out != ACTION_DIM or last.activation != IDENTITY:
        raise SpecMismatch(
            "final layer must output 2 features with identity activation")


@dataclass(frozen=True)
class GcnParams:
    """All learnable parameters: per-layer tap stacks plus log_std.

    taps[i] has shape (k_i + 1, f_in_i, f_out_i); log_std has shape (2,)
    and is shared across robots.
    """

    specs: tuple
    taps: tuple  # of ndarrays
    log_std: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "specs", tuple(self.specs))
        taps = []
        for t in self.taps:
            t = np.array(t, dtype=np.float64)
            t.setflags(write=False)
            taps.append(t)
        object.__setattr__(self, "taps", tuple(taps))
        ls = np.array(self.log_std, dtype=np.float64)
        ls.setflags(write=False)
        object.__setattr__(self, "log_std", ls)

    def validate(self) -> None:
        validate_specs(self.specs)
        if len(self.taps) != len(self.specs):
            raise SpecMismatch("one tap stack required per layer")
        for i, (spec, tap) in enumerate(zip(self.specs, self.taps)):
            want = (spec.k + 1, spec.f_in, spec.f_out)
            if tap.shape != want:
                raise SpecMismatch(
                    f"layer {i}: tap shape {tap.shape}, expected {want}")
            if not np.all(np.isfinite(tap)):
                raise SpecMismatch(f"layer {i}: non-finite tap entries")
        if self.log_std.shape != (ACTION_DIM,):
            raise SpecMismatch(f"log_std must have shape ({ACTION_DIM},)")
        if not np.all(np.isfinite(self.log_std)):
            raise SpecMismatch("log_std must be finite")

    def arrays(self) -> list:
        """Flat list of parameter arrays (taps then log_std), fixed order."""
        return [*self.taps, self.log_std]

    def with_arrays(self, arrays) -> "GcnParams":
        return GcnParams(self.specs, tuple(arrays[:-1]), arrays[-1])


@dataclass(frozen=True)
class GcnGradient:
    """Gradient with the same array layout as GcnParams."""

    taps: tuple
    log_std: np.ndarray

    def arrays(self) -> list:
        return [*self.taps, self.log_std]

    def __add__(self, other: "GcnGradient") -> "GcnGradient":
        return GcnGradient(
            tuple(a + b for a, b in zip(self.taps, other.taps)),
            self.log_std + other.log_std)

    def __mul__(self, c: float) -> "GcnGradient":
        return GcnGradient(tuple(t * c for t in self.taps), self.log_std * c)

    __rmul__ = __mul__


@dataclass(frozen=True)
class PolicyDist:
    """Per-robot diagonal Gaussians: means row n is robot n's policy."""

    means: np.ndarray  # (..., N, 2)
    stds: np.ndarray  # (2,), broadcast over robots

    def __post_init__(self):
        object.__setattr__(self, "means", np.asarray(self.means, dtype=np.float64))
        object.__setattr__(self, "stds", np.asarray(self.stds, dtype=np.float64))
        if np.any(self.stds <= 0):
            raise ValueError("stds must be positive")


def init_params(specs, seed, init_log_std: float = math.log(0.5)) -> GcnParams:
    """Random taps with scale 1/sqrt(f_in*(k+1)) per layer; constant log_std.

    Deterministic for a fixed seed.
    """
    specs = tuple(specs)
    validate_specs(specs)
    rng = np.random.default_rng(seed)
    taps = []
    for spec in specs:
        scale = 1.0 / math.sqrt(spec.f_in * (spec.k + 1))
        taps.append(rng.normal(0.0, scale, size=(spec.k + 1, spec.f_in, spec.f_out)))
    log_std = np.full(ACTION_DIM, float(init_log_std))
    return GcnParams(specs, tuple(taps), log_std)


def _activate(name: str, y: np.ndarray) -> np.ndarray:
    return np.tanh(y) if name == TANH else y


def _layer_forward(m: np.ndarray, z: np.ndarray, tap: np.ndarray):
    """One filter layer. Returns (pre-activation, diffused input stack)."""
    diffused = [z]
    for _ in range(tap.shape[0] - 1):
        diffused.append(m @ diffused[-1])
    y = diffused[0] @ tap[0]
    for u, h in zip(diffused[1:], tap[1:]):
        y += u @ h
    return y, diffused


def forward(s, x: np.ndarray, params: GcnParams) -> PolicyDist:
    """Evaluate the policy: means = stacked filter layers applied to x.

    x may carry leading batch dimensions: (..., N, F_in).
    """
    m = as_matrix(s)
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-2] != m.shape[0]:
        raise DimensionMismatch(
            f"signal has {x.shape[-2]} rows, operator is {m.shape[0]}x{m.shape[0]}")
    if x.shape[-1] != params.specs[0].f_in:
        raise DimensionMismatch(
            f"signal width {x.shape[-1]} != first layer f_in {params.specs[0].f_in}")
    z = x
    for spec, tap in zip(params.specs, params.taps):
        y, _ = _layer_forward(m, z, tap)
        z = _activate(spec.activation, y)
    return PolicyDist(z, np.exp(params.log_std))


def log_prob(dist: PolicyDist, actions: np.ndarray) -> np.ndarray:
    """Per-robot log density of the given actions, shape (..., N)."""
    actions = np.asarray(actions, dtype=np.float64)
    if actions.shape != dist.means.shape:
        raise DimensionMismatch(
            f"actions shape {actions.shape} != means shape {dist.means.shape}")
    z = (actions - dist.means) / dist.stds
    return (-0.5 * z * z - np.log(dist.stds) - 0.5 * LOG_TWO_PI).sum(axis=-1)


def sample_actions(dist: PolicyDist, rng: np.random.Generator,
                   deterministic: bool = False):
    """Draw one action per robot; returns (actions, per-robot log_probs).

    deterministic=True takes the means (evaluation mode) and reports their
    density.
    """
    if deterministic:
        actions = dist.means.copy()
    else:
        actions = dist.means + dist.stds * rng.standard_normal(dist.means.shape)
    return actions, log_prob(dist, actions)


def _weighted_logprob_caches(m, x_seq, params):
    """Forward pass over a whole episode, keeping what backward needs."""
    z = x_seq
    caches = []  # per layer: (diffused input stack, post-activation output)
    for spec, tap in zip(params.specs, params.taps):
        y, diffused = _layer_forward(m, z, tap)
        z = _activate(spec.activation, y)
        caches.append((diffused, z))
    return z, caches


def backward(s, x_seq: np.ndarray, actions: np.ndarray, weights: np.ndarray,
             params: GcnParams) -> GcnGradient:
    """Exact gradient of sum_t weights[t] * sum_n log pi_n(a_nt | x_t).

    x_seq: (T, N, F), actions: (T, N, 2), weights: (T,). The graph is fixed
    for the whole sequence. All timesteps are processed as one batched
    matmul per diffusion hop.
    """
    m = as_matrix(s)
    x_seq = np.asarray(x_seq, dtype=np.float64)
    actions = np.asarray(actions, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    if x_seq.ndim != 3 or actions.ndim != 3 or weights.ndim != 1:
        raise DimensionMismatch("x_seq (T,N,F), actions (T,N,2), weights (T,)")
    if not (x_seq.shape[0] == actions.shape[0] == weights.shape[0]):
        raise DimensionMismatch("sequence lengths differ")
    if x_seq.shape[1] != m.shape[0] or actions.shape[1] != m.shape[0]:
        raise DimensionMismatch("row counts do not match the operator")
    if actions.shape[2] != ACTION_DIM:
        raise DimensionMismatch("actions must be 2D per robot")

    means, caches = _weighted_logprob_caches(m, x_seq, params)
    std = np.exp(params.log_std)
    zscore = (actions - means) / std

    w = weights[:, None, None]
    # d/d mu of the weighted log density
    g = w * zscore / std
    # d/d log_std: per-axis sum of w * (zscore^2 - 1)
    grad_log_std = (w * (zscore * zscore - 1.0)).sum(axis=(0, 1))

    grad_taps = [None] * len(params.taps)
    mt = m.T
    for li in range(len(params.taps) - 1, -1, -1):
        diffused, z_out = caches[li]
        if params.specs[li].activation == TANH:
            g = g * (1.0 - z_out * z_out)
        tap = params.taps[li]
        gt = np.empty_like(tap)
        for k in range(tap.shape[0]):
            gt[k] = np.tensordot(diffused[k], g, axes=([0, 1], [0, 1]))
        grad_taps[li] = gt
        if li > 0:
            # upstream signal gradient: sum_k (S^T)^k g H_k^T, iteratively
            gk = g
            acc = gk @ tap[0].T
            for k in range(1, tap.shape[0]):
                gk = mt @ gk
                acc += gk @ tap[k].T
            g = acc
    return GcnGradient(tuple(grad_taps), grad_log_std)
