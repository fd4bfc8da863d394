"""Small feed-forward networks with hand-written backprop.

Each hidden block is ``Linear -> LayerNorm -> tanh``. The policy head squashes
its mean through ``tanh`` and carries a state-independent log-std vector.
Everything is float64 numpy; parameters live in plain ``dict[str, ndarray]``.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

LN_EPS = 1e-5
LOG_STD_MIN, LOG_STD_MAX = -3.0, 0.0
PARAMS_HEADER = "singularguard-params"
PARAMS_VERSION = 1


class MLP:
    """``in -> [Linear, LayerNorm, tanh] x len(hidden) -> Linear``."""

    def __init__(self, sizes: list[int], squash_output: bool = False):
        self.sizes = list(sizes)
        self.n_layers = len(sizes) - 1
        self.squash_output = squash_output

    def init_params(self, rng: np.random.Generator, out_scale: float = 0.01) -> dict[str, np.ndarray]:
        p = {}
        for i in range(self.n_layers):
            fan_in, fan_out = self.sizes[i], self.sizes[i + 1]
            last = i == self.n_layers - 1
            scale = out_scale if last else math.sqrt(2.0 / fan_in)
            p[f"W{i}"] = rng.standard_normal((fan_in, fan_out)) * scale
            p[f"b{i}"] = np.zeros(fan_out)
            if not last:
                p[f"g{i}"] = np.ones(fan_out)
                p[f"beta{i}"] = np.zeros(fan_out)
        return p

    def forward(self, p: dict[str, np.ndarray], x: np.ndarray):
        cache = []
        h = x
        for i in range(self.n_layers):
            z = h @ p[f"W{i}"] + p[f"b{i}"]
            if i == self.n_layers - 1:
                cache.append((h, None, None, None))
                out = np.tanh(z) if self.squash_output else z
                cache.append(out)
                return out, cache
            mu = z.mean(axis=-1, keepdims=True)
            var = z.var(axis=-1, keepdims=True)
            inv = 1.0 / np.sqrt(var + LN_EPS)
            y = (z - mu) * inv
            a = np.tanh(p[f"g{i}"] * y + p[f"beta{i}"])
            cache.append((h, y, inv, a))
            h = a
        raise AssertionError("unreachable")

    def backward(self, p: dict[str, np.ndarray], cache, dout: np.ndarray) -> dict[str, np.ndarray]:
        grads = {}
        out = cache[-1]
        dz = dout * (1.0 - out ** 2) if self.squash_output else dout
        for i in reversed(range(self.n_layers)):
            h, y, inv, a = cache[i]
            if i < self.n_layers - 1:
                # dz currently holds dL/da for this block
                du = dz * (1.0 - a ** 2)
                grads[f"g{i}"] = np.sum(du * y, axis=0)
                grads[f"beta{i}"] = np.sum(du, axis=0)
                dy = du * p[f"g{i}"]
                dz = inv * (dy - dy.mean(axis=-1, keepdims=True)
                            - y * (dy * y).mean(axis=-1, keepdims=True))
            grads[f"W{i}"] = h.T @ dz
            grads[f"b{i}"] = dz.sum(axis=0)
            dz = dz @ p[f"W{i}"].T
        return grads


class GaussianPolicy:
    """Diagonal Gaussian over normalized actions with a bounded mean."""

    def __init__(self, obs_dim: int, act_dim: int, hidden: tuple[int, ...] = (64, 64),
                 init_log_std: float = -0.5):
        self.net = MLP([obs_dim, *hidden, act_dim], squash_output=True)
        self.act_dim = act_dim
        self.init_log_std = init_log_std

    def init_params(self, rng: np.random.Generator) -> dict[str, np.ndarray]:
        p = self.net.init_params(rng)
        p["log_std"] = np.full(self.act_dim, self.init_log_std)
        return p

    def mean(self, p, obs):
        return self.net.forward(p, obs)[0]

    def sample(self, p, obs: np.ndarray, rng: np.random.Generator):
        m = self.mean(p, obs)
        a = m + np.exp(p["log_std"]) * rng.standard_normal(m.shape)
        return a, log_prob(a, m, p["log_std"])


def log_prob(a: np.ndarray, mean: np.ndarray, log_std: np.ndarray) -> np.ndarray:
    z = (a - mean) * np.exp(-log_std)
    return np.sum(-0.5 * z ** 2 - log_std - 0.5 * math.log(2 * math.pi), axis=-1)


def clamp_log_std(p: dict[str, np.ndarray]) -> None:
    np.clip(p["log_std"], LOG_STD_MIN, LOG_STD_MAX, out=p["log_std"])


def global_norm(grads: dict[str, np.ndarray]) -> float:
    return math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))


def clip_grad_norm(grads: dict[str, np.ndarray], max_norm: float) -> tuple[dict[str, np.ndarray], float]:
    """Scale ``grads`` so their global norm is at most ``max_norm``; returns (clipped, pre-clip norm)."""
    norm = global_norm(grads)
    if norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        grads = {k: g * scale for k, g in grads.items()}
    return grads, norm


class Adam:
    def __init__(self, params: dict[str, np.ndarray], lr: float, betas=(0.9, 0.999), eps: float = 1e-8):
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for k, g in grads.items():
            self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * g * g
            params[k] -= self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)

    def state(self):
        return (self.t, {k: v.copy() for k, v in self.m.items()}, {k: v.copy() for k, v in self.v.items()})

    def restore(self, state) -> None:
        self.t, m, v = state
        self.m = {k: a.copy() for k, a in m.items()}
        self.v = {k: a.copy() for k, a in v.items()}


def all_finite(params: dict[str, np.ndarray]) -> bool:
    return all(np.all(np.isfinite(v)) for v in params.values())


def save_params(path: str | Path, groups: dict[str, dict[str, np.ndarray]], meta: dict | None = None) -> None:
    """Text format: header line, ``key value`` meta lines, then per array a
    ``array <group>.<name> <ndim> <shape...>`` line followed by its row-major
    values one per line (``repr`` precision, so loading is exact)."""
    lines = [f"{PARAMS_HEADER} v{PARAMS_VERSION}"]
    for k, v in (meta or {}).items():
        lines.append(f"meta {k} {v}")
    for group, params in groups.items():
        for name in sorted(params):
            arr = np.asarray(params[name], dtype=float)
            lines.append(f"array {group}.{name} {arr.ndim} {' '.join(str(s) for s in arr.shape)}".rstrip())
            lines.extend(repr(float(x)) for x in arr.ravel())
    Path(path).write_text("\n".join(lines) + "\n")


def load_params(path: str | Path) -> tuple[dict[str, dict[str, np.ndarray]], dict[str, str]]:
    it = iter(Path(path).read_text().splitlines())
    header = next(it, "")
    if header != f"{PARAMS_HEADER} v{PARAMS_VERSION}":
        raise ValueError(f"unsupported parameter file header {header!r}")
    groups: dict[str, dict[str, np.ndarray]] = {}
    meta: dict[str, str] = {}
    for line in it:
        if not line:
            continue
        kind, _, rest = line.partition(" ")
        if kind == "meta":
            k, _, v = rest.partition(" ")
            meta[k] = v
        elif kind == "array":
            parts = rest.split()
            key, ndim = parts[0], int(parts[1])
            shape = tuple(int(s) for s in parts[2:2 + ndim])
            n = int(np.prod(shape)) if shape else 1
            vals = [float(next(it)) for _ in range(n)]
            group, _, name = key.partition(".")
            groups.setdefault(group, {})[name] = np.array(vals).reshape(shape)
        else:
            raise ValueError(f"unexpected line in parameter file: {line!r}")
    return groups, meta
