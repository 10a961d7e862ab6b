"""Minimal dense-network engine: forward, exact reverse-mode gradients
(including gradients w.r.t. inputs), Adam, initialization, serialization.

Sized for the planner's actor and two-branch critic; everything is plain
numpy, float64 for training. Networks are plain values: cloning and
parameter copying are explicit.
"""
from __future__ import annotations

import struct
from typing import Sequence

import numpy as np

ACTIVATIONS = ("relu", "sigmoid", "tanh", "linear")

OBS_DIM = 62
ACTION_DIM = 2
ACTOR_HIDDEN = (512, 256, 256)
CRITIC_STATE_HIDDEN = 256
CRITIC_ACTION_HIDDEN = 64
CRITIC_TRUNK_HIDDEN = (256, 128)


class NetFormatError(ValueError):
    """Corrupt file or unsupported format version."""


class ArchitectureMismatchError(ValueError):
    """Stored network does not match the expected architecture."""


def _apply_act(z: np.ndarray, act: str) -> np.ndarray:
    if act == "relu":
        return np.maximum(z, 0.0)
    if act == "sigmoid":
        out = np.empty_like(z)
        pos = z >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
        ez = np.exp(z[~pos])
        out[~pos] = ez / (1.0 + ez)
        return out
    if act == "tanh":
        return np.tanh(z)
    if act == "linear":
        return z
    raise ValueError(f"unknown activation {act!r}")


def _act_grad(z: np.ndarray, y: np.ndarray, act: str) -> np.ndarray:
    if act == "relu":
        return (z > 0.0).astype(z.dtype)
    if act == "sigmoid":
        return y * (1.0 - y)
    if act == "tanh":
        return 1.0 - y * y
    if act == "linear":
        return np.ones_like(z)
    raise ValueError(f"unknown activation {act!r}")


class Mlp:
    """Ordered (weight, bias, activation) layers with chained dimensions."""

    def __init__(self, weights: Sequence[np.ndarray], biases: Sequence[np.ndarray],
                 acts: Sequence[str]):
        if not (len(weights) == len(biases) == len(acts)):
            raise ValueError("weights, biases, acts must have equal length")
        if not weights:
            raise ValueError("empty network")
        for i, (w, b, a) in enumerate(zip(weights, biases, acts)):
            if a not in ACTIVATIONS:
                raise ValueError(f"layer {i}: unknown activation {a!r}")
            if w.ndim != 2 or b.ndim != 1 or w.shape[1] != b.shape[0]:
                raise ValueError(f"layer {i}: weight {w.shape} / bias {b.shape} mismatch")
            if i and weights[i - 1].shape[1] != w.shape[0]:
                raise ArchitectureMismatchError(
                    f"layer {i}: input dim {w.shape[0]} != previous output "
                    f"{weights[i - 1].shape[1]}")
        self.weights = list(weights)
        self.biases = list(biases)
        self.acts = list(acts)

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def output_dim(self) -> int:
        return self.weights[-1].shape[1]

    @property
    def dims(self) -> tuple[int, ...]:
        return (self.input_dim,) + tuple(w.shape[1] for w in self.weights)

    def params(self) -> list[np.ndarray]:
        out: list[np.ndarray] = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def forward(self, x: np.ndarray) -> np.ndarray:
        y, _ = self.forward_cached(x, keep_cache=False)
        return y

    def forward_cached(self, x: np.ndarray, keep_cache: bool = True):
        x = np.asarray(x)
        squeeze = x.ndim == 1
        a = x.reshape(1, -1) if squeeze else x
        if a.shape[1] != self.input_dim:
            raise ValueError(f"input dim {a.shape[1]}, expected {self.input_dim}")
        cache = [] if keep_cache else None
        for w, b, act in zip(self.weights, self.biases, self.acts):
            z = a @ w
            z += b
            y = _apply_act(z, act)
            if keep_cache:
                cache.append((a, z, y))
            a = y
        out = a[0] if squeeze else a
        return out, (cache, squeeze)

    def backward(self, cache, gout: np.ndarray):
        """Gradients of sum(output * gout) w.r.t. params and input.

        Returns (grads, gin) with grads interleaved [dW0, db0, dW1, db1, ...]
        matching params(). The cache must come from a forward_cached call on
        this network.
        """
        layer_cache, squeeze = cache
        if layer_cache is None or len(layer_cache) != len(self.weights):
            raise ValueError("stale or missing forward cache")
        g = np.asarray(gout)
        if squeeze:
            g = g.reshape(1, -1)
        grads: list[np.ndarray] = []
        own = False  # may mutate g in place once we hold our own buffer
        for (a, z, y), w, act in zip(reversed(layer_cache), reversed(self.weights),
                                     reversed(self.acts)):
            if act == "linear":
                gz = g
            elif own:
                gz = g
                gz *= _act_grad(z, y, act)
            else:
                gz = g * _act_grad(z, y, act)
            grads.append(np.sum(gz, axis=0))      # db
            grads.append(a.T @ gz)                # dW
            g = gz @ w.T
            own = True
        grads.reverse()
        gin = g[0] if squeeze else g
        return grads, gin

    def astype(self, dtype) -> "Mlp":
        return Mlp([w.astype(dtype) for w in self.weights],
                   [b.astype(dtype) for b in self.biases], list(self.acts))

    def clone(self) -> "Mlp":
        return Mlp([w.copy() for w in self.weights],
                   [b.copy() for b in self.biases], list(self.acts))


def init_mlp(dims: Sequence[int], acts: Sequence[str], seed) -> Mlp:
    """Seeded uniform init: He fan-in scaling for relu layers, Xavier for the
    rest; biases zero."""
    if len(acts) != len(dims) - 1:
        raise ValueError("need one activation per layer")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out, act in zip(dims, dims[1:], acts):
        if act == "relu":
            bound = np.sqrt(6.0 / fan_in)
        else:
            bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return Mlp(weights, biases, acts)


class ActorNet:
    """Shared relu trunk with two scalar heads: sigmoid linear-velocity head
    in (0, 1) and tanh angular-velocity head in (-1, 1)."""

    def __init__(self, trunk: Mlp, head_v: Mlp, head_w: Mlp):
        if head_v.input_dim != trunk.output_dim or head_w.input_dim != trunk.output_dim:
            raise ArchitectureMismatchError("head input dims must match trunk output")
        if head_v.output_dim != 1 or head_w.output_dim != 1:
            raise ArchitectureMismatchError("heads must be scalar")
        self.trunk = trunk
        self.head_v = head_v
        self.head_w = head_w

    @classmethod
    def build(cls, seed, obs_dim: int = OBS_DIM,
              hidden: Sequence[int] = ACTOR_HIDDEN) -> "ActorNet":
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        trunk = init_mlp((obs_dim, *hidden), ["relu"] * len(hidden), rng)
        head_v = init_mlp((hidden[-1], 1), ["sigmoid"], rng)
        head_w = init_mlp((hidden[-1], 1), ["tanh"], rng)
        return cls(trunk, head_v, head_w)

    @property
    def input_dim(self) -> int:
        return self.trunk.input_dim

    def params(self) -> list[np.ndarray]:
        return self.trunk.params() + self.head_v.params() + self.head_w.params()

    def forward(self, x: np.ndarray) -> np.ndarray:
        y, _ = self.forward_cached(x, keep_cache=False)
        return y

    def forward_cached(self, x: np.ndarray, keep_cache: bool = True):
        h, tc = self.trunk.forward_cached(x, keep_cache)
        squeeze = np.asarray(x).ndim == 1
        h2 = h.reshape(1, -1) if squeeze else h
        v, vc = self.head_v.forward_cached(h2, keep_cache)
        w, wc = self.head_w.forward_cached(h2, keep_cache)
        out = np.concatenate([v, w], axis=1)
        if squeeze:
            out = out[0]
        return out, (tc, vc, wc, squeeze)

    def backward(self, cache, gout: np.ndarray):
        tc, vc, wc, squeeze = cache
        g = np.asarray(gout)
        if squeeze:
            g = g.reshape(1, -1)
        gv, gh_v = self.head_v.backward(vc, g[:, 0:1])
        gw, gh_w = self.head_w.backward(wc, g[:, 1:2])
        gt, gin = self.trunk.backward(tc, gh_v + gh_w)
        return gt + gv + gw, gin

    def astype(self, dtype) -> "ActorNet":
        return ActorNet(self.trunk.astype(dtype), self.head_v.astype(dtype),
                        self.head_w.astype(dtype))

    def clone(self) -> "ActorNet":
        return ActorNet(self.trunk.clone(), self.head_v.clone(), self.head_w.clone())


class TwoBranchCritic:
    """Q network: separate state and action branches concatenated into a
    relu trunk ending in one linear output."""

    def __init__(self, state_branch: Mlp, action_branch: Mlp, trunk: Mlp):
        merged = state_branch.output_dim + action_branch.output_dim
        if trunk.input_dim != merged:
            raise ArchitectureMismatchError(
                f"trunk input {trunk.input_dim} != merged branches {merged}")
        if trunk.output_dim != 1 or trunk.acts[-1] != "linear":
            raise ArchitectureMismatchError("trunk must end in a scalar linear layer")
        self.state_branch = state_branch
        self.action_branch = action_branch
        self.trunk = trunk

    @classmethod
    def build(cls, seed, obs_dim: int = OBS_DIM, act_dim: int = ACTION_DIM,
              state_hidden: int = CRITIC_STATE_HIDDEN,
              action_hidden: int = CRITIC_ACTION_HIDDEN,
              trunk_hidden: Sequence[int] = CRITIC_TRUNK_HIDDEN) -> "TwoBranchCritic":
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        sb = init_mlp((obs_dim, state_hidden), ["relu"], rng)
        ab = init_mlp((act_dim, action_hidden), ["relu"], rng)
        trunk = init_mlp((state_hidden + action_hidden, *trunk_hidden, 1),
                         ["relu"] * len(trunk_hidden) + ["linear"], rng)
        return cls(sb, ab, trunk)

    def params(self) -> list[np.ndarray]:
        return (self.state_branch.params() + self.action_branch.params()
                + self.trunk.params())

    def forward(self, s: np.ndarray, a: np.ndarray) -> np.ndarray:
        q, _ = self.forward_cached(s, a, keep_cache=False)
        return q

    def forward_cached(self, s: np.ndarray, a: np.ndarray, keep_cache: bool = True):
        s = np.atleast_2d(np.asarray(s))
        a = np.atleast_2d(np.asarray(a))
        if s.shape[0] != a.shape[0]:
            raise ValueError(f"batch mismatch: {s.shape[0]} states, {a.shape[0]} actions")
        hs, sc = self.state_branch.forward_cached(s, keep_cache)
        ha, ac = self.action_branch.forward_cached(a, keep_cache)
        q, tc = self.trunk.forward_cached(np.concatenate([hs, ha], axis=1), keep_cache)
        return q[:, 0], (sc, ac, tc)

    def backward(self, cache, gq: np.ndarray):
        """Returns (grads, (gs, ga)): parameter grads plus gradients w.r.t.
        the state and action inputs."""
        sc, ac, tc = cache
        g = np.asarray(gq).reshape(-1, 1)
        gt, gm = self.trunk.backward(tc, g)
        ns = self.state_branch.output_dim
        gsb, gs = self.state_branch.backward(sc, gm[:, :ns])
        gab, ga = self.action_branch.backward(ac, gm[:, ns:])
        return gsb + gab + gt, (gs, ga)

    def astype(self, dtype) -> "TwoBranchCritic":
        return TwoBranchCritic(self.state_branch.astype(dtype),
                               self.action_branch.astype(dtype),
                               self.trunk.astype(dtype))

    def clone(self) -> "TwoBranchCritic":
        return TwoBranchCritic(self.state_branch.clone(), self.action_branch.clone(),
                               self.trunk.clone())


def copy_params(src, dst) -> None:
    """Hard-copy every parameter of src into dst (shapes must match)."""
    sp, dp = src.params(), dst.params()
    if len(sp) != len(dp):
        raise ArchitectureMismatchError("parameter count mismatch")
    for s, d in zip(sp, dp):
        if s.shape != d.shape:
            raise ArchitectureMismatchError(f"shape mismatch {s.shape} vs {d.shape}")
        np.copyto(d, s)


def params_digest(net) -> str:
    """Stable hex digest of all parameters, for change detection in tests."""
    import hashlib
    h = hashlib.sha256()
    for p in net.params():
        h.update(np.ascontiguousarray(p, dtype="<f8").tobytes())
    return h.hexdigest()


class AdamState:
    """First/second moment accumulators and step counter for one parameter set."""

    def __init__(self, params: Sequence[np.ndarray], beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]


def adam_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray],
              state: AdamState, lr: float) -> None:
    """One bias-corrected Adam update, in place.

    The gradient arrays are consumed as scratch space; callers must not
    reuse them after this call.
    """
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params/grads/state length mismatch")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    # fold the bias corrections into scalars:
    # lr * (m/c1) / (sqrt(v/c2) + eps) = (lr*sqrt(c2)/c1) * m / (sqrt(v) + eps*sqrt(c2))
    sqrt_c2 = np.sqrt(1.0 - b2 ** state.step)
    step_scale = lr * sqrt_c2 / (1.0 - b1 ** state.step)
    eps_eff = state.eps * sqrt_c2
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ValueError(f"grad shape {g.shape} != param shape {p.shape}")
        if g.dtype != p.dtype:
            g = g.astype(p.dtype)
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        np.square(g, out=g)
        g *= (1.0 - b2)
        v += g
        np.sqrt(v, out=g)
        g += eps_eff
        np.divide(m, g, out=g)
        g *= step_scale
        p -= g


# ---------------------------------------------------------------------------
# serialization: little-endian binary with architecture metadata
# ---------------------------------------------------------------------------

_MAGIC = b"DNET"
_VERSION = 1
_KINDS = {"mlp": 0, "actor": 1, "critic": 2}
_KIND_NAMES = {v: k for k, v in _KINDS.items()}
_ACT_CODES = {a: i for i, a in enumerate(ACTIVATIONS)}
_DTYPES = {"<f8": 0, "<f4": 1}
_DTYPE_NAMES = {0: "<f8", 1: "<f4"}


def _subnets(net) -> list[tuple[str, Mlp]]:
    if isinstance(net, Mlp):
        return [("net", net)]
    if isinstance(net, ActorNet):
        return [("trunk", net.trunk), ("head_v", net.head_v), ("head_w", net.head_w)]
    if isinstance(net, TwoBranchCritic):
        return [("state", net.state_branch), ("action", net.action_branch),
                ("trunk", net.trunk)]
    raise TypeError(f"cannot serialize {type(net).__name__}")


def save_net(net, path) -> None:
    kind = {"Mlp": "mlp", "ActorNet": "actor", "TwoBranchCritic": "critic"}[
        type(net).__name__]
    subs = _subnets(net)
    dtype = "<f4" if subs[0][1].weights[0].dtype == np.float32 else "<f8"
    parts = [_MAGIC, struct.pack("<HBBB", _VERSION, _KINDS[kind], _DTYPES[dtype],
                                 len(subs))]
    blobs = []
    for name, mlp in subs:
        nb = name.encode()
        parts.append(struct.pack("<B", len(nb)))
        parts.append(nb)
        parts.append(struct.pack("<H", len(mlp.weights)))
        for w, b, act in zip(mlp.weights, mlp.biases, mlp.acts):
            parts.append(struct.pack("<IIB", w.shape[0], w.shape[1], _ACT_CODES[act]))
            blobs.append(np.ascontiguousarray(w, dtype=dtype).tobytes())
            blobs.append(np.ascontiguousarray(b, dtype=dtype).tobytes())
    with open(path, "wb") as f:
        f.write(b"".join(parts))
        for blob in blobs:
            f.write(blob)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.off = 0

    def take(self, n: int) -> bytes:
        if self.off + n > len(self.data):
            raise NetFormatError("truncated network file")
        out = self.data[self.off:self.off + n]
        self.off += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_net(path, expect: str | None = None):
    """Load a network saved by save_net.

    expect, if given, must be one of "mlp", "actor", "critic"; a stored
    network of a different kind raises ArchitectureMismatchError.
    """
    with open(path, "rb") as f:
        r = _Reader(f.read())
    if r.take(4) != _MAGIC:
        raise NetFormatError("bad magic; not a network file")
    version, kind_code, dtype_code, n_subs = r.unpack("<HBBB")
    if version != _VERSION:
        raise NetFormatError(f"unsupported format version {version}")
    if kind_code not in _KIND_NAMES or dtype_code not in _DTYPE_NAMES:
        raise NetFormatError("corrupt header")
    kind = _KIND_NAMES[kind_code]
    if expect is not None and kind != expect:
        raise ArchitectureMismatchError(f"file holds a {kind}, expected {expect}")
    dtype = _DTYPE_NAMES[dtype_code]
    descriptors = []
    for _ in range(n_subs):
        (name_len,) = r.unpack("<B")
        name = r.take(name_len).decode()
        (n_layers,) = r.unpack("<H")
        layers = [r.unpack("<IIB") for _ in range(n_layers)]
        descriptors.append((name, layers))
    mlps = {}
    for name, layers in descriptors:
        weights, biases, acts = [], [], []
        for fan_in, fan_out, act_code in layers:
            if act_code >= len(ACTIVATIONS):
                raise NetFormatError(f"unknown activation code {act_code}")
            itemsize = 8 if dtype == "<f8" else 4
            w = np.frombuffer(r.take(fan_in * fan_out * itemsize), dtype=dtype)
            b = np.frombuffer(r.take(fan_out * itemsize), dtype=dtype)
            weights.append(w.reshape(fan_in, fan_out).copy())
            biases.append(b.copy())
            acts.append(ACTIVATIONS[act_code])
        try:
            mlps[name] = Mlp(weights, biases, acts)
        except (ValueError, ArchitectureMismatchError) as e:
            raise ArchitectureMismatchError(f"subnet {name}: {e}") from e
    try:
        if kind == "mlp":
            return mlps["net"]
        if kind == "actor":
            return ActorNet(mlps["trunk"], mlps["head_v"], mlps["head_w"])
        return TwoBranchCritic(mlps["state"], mlps["action"], mlps["trunk"])
    except KeyError as e:
        raise NetFormatError(f"missing subnet {e}") from e
