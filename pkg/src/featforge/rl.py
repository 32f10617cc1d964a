"""Router state featurization and offline clipped-surrogate (PPO) training.

The router is a 12-32-2 tanh network.  Training treats each logged
decision as a one-step bandit: the reward is the score observed after
the decision, standardized within its source dataset, and the
importance ratio is taken against the logged behavior probability.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .data import Frame, Task, mean_pairwise_correlation, target_correlation
from .errors import NonFiniteGradient, TooFewSamples, VersionMismatch
from .memory import Decision, MemoryPool

STATE_DIM = 12
HIDDEN = 32
N_ACTIONS = 2
CORR_SUBSAMPLE = 30

STATE_FIELDS = (
    "live_ratio", "log_base_count", "step_fraction", "iteration_fraction",
    "score", "best_score", "score_delta", "mean_pairwise_corr",
    "mean_target_corr", "derived_fraction", "task_flag", "last_decision",
)


@dataclass(frozen=True)
class SearchProgress:
    iteration: int = 0
    step: int = 0
    iterations: int = 1
    steps: int = 1
    best_score: float | None = None
    prev_score: float | None = None
    last_decision: Decision | None = None


def featurize(frame: Frame, fs, progress: SearchProgress, last_report=None) -> np.ndarray:
    """Fixed 12-component summary of the search state (see ``STATE_FIELDS``)."""
    n_base = len(fs.base)
    live = fs.live
    sub = live[:CORR_SUBSAMPLE]
    from .expr import evaluate

    X = np.column_stack([evaluate(e, frame.columns) for e in sub]) if sub else np.empty((frame.n, 0))
    score = float(last_report.primary) if last_report is not None else 0.0
    best = progress.best_score if progress.best_score is not None else score
    prev = progress.prev_score if progress.prev_score is not None else score
    last = -1.0 if progress.last_decision is None else float(Decision(progress.last_decision).code)
    state = np.array([
        len(live) / n_base,
        np.log(n_base),
        progress.step / max(progress.steps, 1),
        progress.iteration / max(progress.iterations, 1),
        score,
        float(best),
        score - float(prev),
        mean_pairwise_correlation(X),
        float(target_correlation(X, frame.target).mean()) if sub else 0.0,
        sum(not e.is_base for e in live) / max(len(live), 1),
        1.0 if frame.task is Task.CLASSIFICATION else 0.0,
        last,
    ])
    return np.nan_to_num(state, nan=0.0, posinf=0.0, neginf=0.0)


@dataclass(frozen=True)
class OfflineSample:
    state: np.ndarray
    action: int
    behavior_prob: float
    score: float
    group: str = ""

    def __post_init__(self):
        if not 0.0 < self.behavior_prob < 1.0:
            raise ValueError(f"behavior probability {self.behavior_prob} outside (0, 1)")
        object.__setattr__(self, "state", np.asarray(self.state, dtype=np.float64))


def collect(pool: MemoryPool | Iterable, group: str = "") -> list[OfflineSample]:
    """One sample per routed record carrying a state snapshot."""
    out = []
    for r in pool:
        if r.decision is None or len(r.state) != STATE_DIM or r.behavior_prob is None:
            continue
        out.append(OfflineSample(np.array(r.state), r.decision.code, r.behavior_prob, r.score, group))
    return out


def advantages(samples: Sequence[OfflineSample]) -> np.ndarray:
    """Scores z-scored within each source group."""
    if len(samples) < 2:
        raise TooFewSamples(f"need at least 2 samples, got {len(samples)}")
    scores = np.array([s.score for s in samples], dtype=np.float64)
    groups = np.array([s.group for s in samples], dtype=object)
    out = np.empty_like(scores)
    for g in dict.fromkeys(groups):
        m = groups == g
        v = scores[m]
        out[m] = (v - v.mean()) / (v.std() + 1e-8)
    return out


class PolicyNet:
    """Two-layer softmax policy over {generate, select}.

    The output layer starts at zero, so a fresh network is exactly uniform.
    """

    sizes = (STATE_DIM, HIDDEN, N_ACTIONS)

    def __init__(self, seed: int = 0, params: dict | None = None):
        self.seed = seed
        if params is None:
            rng = np.random.default_rng(seed)
            params = {
                "W1": rng.normal(0.0, 1.0 / np.sqrt(STATE_DIM), (HIDDEN, STATE_DIM)),
                "b1": np.zeros(HIDDEN),
                "W2": np.zeros((N_ACTIONS, HIDDEN)),
                "b2": np.zeros(N_ACTIONS),
            }
        self.params = {k: np.array(v, dtype=np.float64) for k, v in params.items()}

    def copy(self) -> "PolicyNet":
        return PolicyNet(self.seed, {k: v.copy() for k, v in self.params.items()})

    def _forward(self, S):
        p = self.params
        S = np.atleast_2d(np.asarray(S, dtype=np.float64))
        h = np.tanh(S @ p["W1"].T + p["b1"])
        z = h @ p["W2"].T + p["b2"]
        return S, h, z

    def logits(self, S) -> np.ndarray:
        return self._forward(S)[2]

    def probs(self, S) -> np.ndarray:
        return _softmax(self.logits(S))

    def flat(self) -> np.ndarray:
        return np.concatenate([self.params[k].ravel() for k in ("W1", "b1", "W2", "b2")])

    def set_flat(self, theta: np.ndarray) -> None:
        i = 0
        for k in ("W1", "b1", "W2", "b2"):
            size = self.params[k].size
            self.params[k] = theta[i:i + size].reshape(self.params[k].shape).copy()
            i += size


def _softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _log_softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def surrogate(policy: PolicyNet, states, actions, behavior, adv, clip: float = 0.2,
              entropy_coef: float = 0.01):
    """Clipped surrogate plus entropy bonus, and its gradient (to be maximized).

    Returns ``(objective, grads)`` with ``grads`` keyed like ``policy.params``.
    """
    S, h, z = policy._forward(states)
    actions = np.asarray(actions, dtype=np.int64)
    behavior = np.asarray(behavior, dtype=np.float64)
    adv = np.asarray(adv, dtype=np.float64)
    B = len(actions)
    logp = _log_softmax(z)
    pi = np.exp(logp)
    rows = np.arange(B)
    ratio = pi[rows, actions] / behavior
    clipped = np.clip(ratio, 1.0 - clip, 1.0 + clip)
    surr = np.minimum(ratio * adv, clipped * adv)
    entropy = -(pi * logp).sum(axis=1)
    objective = float(surr.mean() + entropy_coef * entropy.mean())

    # d surr / d ratio is adv unless the clipped branch is the minimum
    inactive = ((adv > 0) & (ratio > 1.0 + clip)) | ((adv < 0) & (ratio < 1.0 - clip))
    d_ratio = np.where(inactive, 0.0, adv)
    onehot = np.zeros_like(pi)
    onehot[rows, actions] = 1.0
    g_z = (d_ratio * ratio)[:, None] * (onehot - pi)
    g_z += entropy_coef * (-pi * (logp + entropy[:, None]))
    g_z /= B

    W2 = policy.params["W2"]
    g_h = g_z @ W2
    g_pre = g_h * (1.0 - h * h)
    grads = {
        "W1": g_pre.T @ S,
        "b1": g_pre.sum(axis=0),
        "W2": g_z.T @ h,
        "b2": g_z.sum(axis=0),
    }
    return objective, grads


@dataclass(frozen=True)
class PPOConfig:
    clip: float = 0.2
    epochs: int = 5
    lr: float = 3e-3
    batch_size: int = 64
    entropy_coef: float = 0.01
    max_grad_norm: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.clip < 1.0:
            raise ValueError(f"clip {self.clip} outside (0, 1)")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")


@dataclass
class TrainingReport:
    samples: int
    config: dict
    epoch_objective: list = field(default_factory=list)
    steps: int = 0
    action_share_before: float = 0.5
    action_share_after: float = 0.5

    def to_json(self) -> dict:
        return asdict(self)


def ppo_update(policy: PolicyNet, samples: Sequence[OfflineSample], config: PPOConfig | None = None,
               rng: np.random.Generator | None = None) -> tuple[PolicyNet, TrainingReport]:
    """Train a copy of ``policy`` on logged samples with Adam ascent."""
    config = config or PPOConfig()
    rng = rng if rng is not None else np.random.default_rng(0)
    if not samples:
        raise TooFewSamples("no samples to train on")
    states = np.stack([s.state for s in samples])
    actions = np.array([s.action for s in samples])
    behavior = np.array([s.behavior_prob for s in samples])
    adv = advantages(samples) if len(samples) >= 2 else np.zeros(1)

    pol = policy.copy()
    keys = ("W1", "b1", "W2", "b2")
    m = {k: np.zeros_like(pol.params[k]) for k in keys}
    v = {k: np.zeros_like(pol.params[k]) for k in keys}
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    report = TrainingReport(len(samples), asdict(config))
    report.action_share_before = float(pol.probs(states)[:, 0].mean())
    t = 0
    n = len(samples)
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        objs = []
        for start in range(0, n, config.batch_size):
            mb = order[start:start + config.batch_size]
            obj, grads = surrogate(pol, states[mb], actions[mb], behavior[mb], adv[mb],
                                   config.clip, config.entropy_coef)
            norm = np.sqrt(sum(float((g * g).sum()) for g in grads.values()))
            if not np.isfinite(norm) or not np.isfinite(obj):
                raise NonFiniteGradient(f"non-finite gradient at epoch {epoch}, minibatch {start // config.batch_size}")
            if norm > config.max_grad_norm:
                grads = {k: g * (config.max_grad_norm / norm) for k, g in grads.items()}
            t += 1
            for k in keys:
                m[k] = beta1 * m[k] + (1 - beta1) * grads[k]
                v[k] = beta2 * v[k] + (1 - beta2) * grads[k] ** 2
                mhat = m[k] / (1 - beta1 ** t)
                vhat = v[k] / (1 - beta2 ** t)
                pol.params[k] = pol.params[k] + config.lr * mhat / (np.sqrt(vhat) + eps)
            objs.append(obj)
        report.epoch_objective.append(float(np.mean(objs)))
    report.steps = t
    report.action_share_after = float(pol.probs(states)[:, 0].mean())
    return pol, report


# policy files: magic, version, layer sizes, float64 arrays, crc32 trailer
_MAGIC = b"FFRP"
_VERSION = 1
_HEADER = struct.Struct("<4sHH3I")


def save_policy(policy: PolicyNet, path) -> None:
    body = _HEADER.pack(_MAGIC, _VERSION, 2, *PolicyNet.sizes)
    body += struct.pack("<q", int(policy.seed))
    for k in ("W1", "b1", "W2", "b2"):
        body += np.ascontiguousarray(policy.params[k], dtype="<f8").tobytes()
    body += struct.pack("<I", zlib.crc32(body))
    Path(path).write_bytes(body)


def load_policy(path) -> PolicyNet:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size + 12:
        raise VersionMismatch(f"{path}: file too short for a policy")
    magic, version, n_layers, *sizes = _HEADER.unpack_from(raw)
    if magic != _MAGIC or version != _VERSION or n_layers != 2 or tuple(sizes) != PolicyNet.sizes:
        raise VersionMismatch(f"{path}: unsupported policy format (magic={magic!r}, version={version})")
    (crc,) = struct.unpack_from("<I", raw, len(raw) - 4)
    if zlib.crc32(raw[:-4]) != crc:
        raise VersionMismatch(f"{path}: checksum mismatch, file is corrupted")
    (seed,) = struct.unpack_from("<q", raw, _HEADER.size)
    offset = _HEADER.size + 8
    shapes = {"W1": (HIDDEN, STATE_DIM), "b1": (HIDDEN,), "W2": (N_ACTIONS, HIDDEN), "b2": (N_ACTIONS,)}
    params = {}
    for k, shape in shapes.items():
        count = int(np.prod(shape))
        params[k] = np.frombuffer(raw, dtype="<f8", count=count, offset=offset).reshape(shape).astype(np.float64)
        offset += 8 * count
    if offset != len(raw) - 4:
        raise VersionMismatch(f"{path}: unexpected payload length")
    return PolicyNet(seed, params)


def synthetic_bandit(n: int, rng: np.random.Generator, group: str = "bandit") -> list[OfflineSample]:
    """Logged uniform-behavior bandit: action 0 pays off iff ``state[0] > 0``."""
    states = rng.normal(size=(n, STATE_DIM))
    actions = rng.integers(0, 2, n)
    best = np.where(states[:, 0] > 0, 0, 1)
    scores = (actions == best).astype(np.float64)
    return [OfflineSample(states[i], int(actions[i]), 0.5, float(scores[i]), group) for i in range(n)]


def bandit_accuracy(policy: PolicyNet, n: int, rng: np.random.Generator) -> float:
    """Share of fresh bandit states where the policy's argmax is the paying action."""
    states = rng.normal(size=(n, STATE_DIM))
    best = np.where(states[:, 0] > 0, 0, 1)
    return float(np.mean(np.argmax(policy.probs(states), axis=1) == best))


def training_report_json(report: TrainingReport) -> str:
    return json.dumps(report.to_json(), indent=2)
