"""Minimal reverse-mode automatic differentiation over dense float64 arrays.

Primitive array operations are recorded on a Tape as they execute; a single
reverse sweep then yields gradients of a scalar output with respect to every
recorded leaf, covering both network parameters (training) and network inputs
(gradient-based attacks). Sized for small feed-forward networks: float64
throughout, no GPU, one forward/backward pair per tape.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

Array = np.ndarray

HIDDEN_ACTIVATIONS = ("relu", "tanh")
OUTPUT_ACTIVATIONS = ("identity", "tanh")


class TapeError(RuntimeError):
    """Raised when a tape is reused or operands span different tapes."""


def as_tensor(data, shape=None) -> Array:
    """Build a float64 array, rejecting non-finite entries."""
    arr = np.array(data, dtype=np.float64)
    if shape is not None:
        expected = int(np.prod(shape))
        if expected != arr.size:
            raise ValueError(
                f"shape {tuple(shape)} holds {expected} entries, data has {arr.size}"
            )
        arr = arr.reshape(tuple(shape))
    if not np.all(np.isfinite(arr)):
        raise ValueError("tensor entries must be finite")
    return arr


class Var:
    """A node in the recorded computation graph."""

    __slots__ = ("data", "grad", "tape", "_backward")

    def __init__(self, data: Array, tape: "Tape", backward=None):
        self.data = data
        self.grad: Array | None = None
        self.tape = tape
        self._backward = backward


class Tape:
    """Ordered record of primitive operations, consumed by one reverse sweep.

    Nodes are appended in execution order, which is a topological order by
    construction; the reverse sweep therefore visits them in exact reverse
    topological order.
    """

    def __init__(self):
        self._nodes: list[Var] = []
        self.consumed = False
        self._mlp_record = None

    def _node(self, data: Array, backward=None) -> Var:
        v = Var(data, self, backward)
        self._nodes.append(v)
        return v

    def leaf(self, data) -> Var:
        """Record an input node. The array is aliased, not copied."""
        return self._node(np.asarray(data, dtype=np.float64))

    def backward(self, output: Var, output_gradient=None) -> None:
        """Run the reverse sweep, accumulating grads onto every node."""
        if self.consumed:
            raise TapeError("tape already consumed by a backward pass")
        if not isinstance(output, Var) or output.tape is not self:
            raise TapeError("output does not belong to this tape")
        self.consumed = True
        if output_gradient is None:
            output_gradient = np.ones_like(output.data)
        g = np.asarray(output_gradient, dtype=np.float64)
        if g.shape != output.data.shape:
            raise ValueError(
                f"output gradient shape {g.shape} != output shape {output.data.shape}"
            )
        output.grad = g.copy() if output.grad is None else output.grad + g
        for node in reversed(self._nodes):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)


def _val(v) -> Array:
    return v.data if isinstance(v, Var) else v


def _tape_of(*operands) -> Tape:
    tape = None
    for v in operands:
        if isinstance(v, Var):
            if tape is None:
                tape = v.tape
            elif v.tape is not tape:
                raise TapeError("operands recorded on different tapes")
    if tape is None:
        raise TapeError("at least one operand must be a Var")
    return tape


def _acc(v, g: Array) -> None:
    if isinstance(v, Var):
        if v.grad is None:
            v.grad = np.zeros_like(v.data)
        v.grad += g


def _acc_shaped(v, g: Array) -> None:
    # Reduce a gradient down to a scalar operand's shape () if needed.
    if isinstance(v, Var) and v.data.shape == () and np.shape(g) != ():
        _acc(v, np.asarray(np.sum(g)))
    else:
        _acc(v, g)


# ---------------------------------------------------------------------------
# primitives


def linear(x, w, b) -> Var:
    """y = x @ w.T + b with x (B,i), w (o,i), b (o,)."""
    tape = _tape_of(x, w, b)
    xd, wd, bd = _val(x), _val(w), _val(b)
    y = xd @ wd.T + bd

    def bw(g):
        _acc(x, g @ wd)
        _acc(w, g.T @ xd)
        _acc(b, g.sum(axis=0))

    return tape._node(y, bw)


def add(a, b) -> Var:
    tape = _tape_of(a, b)
    y = _val(a) + _val(b)

    def bw(g):
        _acc_shaped(a, g)
        _acc_shaped(b, g)

    return tape._node(y, bw)


def sub(a, b) -> Var:
    tape = _tape_of(a, b)
    y = _val(a) - _val(b)

    def bw(g):
        _acc_shaped(a, g)
        _acc_shaped(b, -g)

    return tape._node(y, bw)


def mul(a, b) -> Var:
    """Elementwise product; either side may be a scalar () operand."""
    tape = _tape_of(a, b)
    ad, bd = _val(a), _val(b)
    y = ad * bd

    def bw(g):
        _acc_shaped(a, g * bd)
        _acc_shaped(b, g * ad)

    return tape._node(y, bw)


def smul(c: float, a) -> Var:
    """Constant scale c * a."""
    tape = _tape_of(a)
    y = c * _val(a)

    def bw(g):
        _acc(a, c * g)

    return tape._node(y, bw)


def neg(a) -> Var:
    return smul(-1.0, a)


def relu(a) -> Var:
    tape = _tape_of(a)
    ad = _val(a)
    y = np.maximum(ad, 0.0)

    def bw(g):
        _acc(a, g * (ad > 0.0))

    return tape._node(y, bw)


def tanh(a) -> Var:
    tape = _tape_of(a)
    y = np.tanh(_val(a))

    def bw(g):
        _acc(a, g * (1.0 - y * y))

    return tape._node(y, bw)


def elu(a) -> Var:
    tape = _tape_of(a)
    ad = _val(a)
    y = np.where(ad > 0.0, ad, np.expm1(ad))

    def bw(g):
        _acc(a, g * np.where(ad > 0.0, 1.0, y + 1.0))

    return tape._node(y, bw)


def absval(a) -> Var:
    tape = _tape_of(a)
    ad = _val(a)

    def bw(g):
        _acc(a, g * np.sign(ad))

    return tape._node(np.abs(ad), bw)


def square(a) -> Var:
    tape = _tape_of(a)
    ad = _val(a)

    def bw(g):
        _acc(a, 2.0 * g * ad)

    return tape._node(ad * ad, bw)


def hconcat(parts: list) -> Var:
    """Concatenate (B, d_i) blocks along axis 1."""
    tape = _tape_of(*parts)
    datas = [_val(p) for p in parts]
    widths = [d.shape[1] for d in datas]
    y = np.concatenate(datas, axis=1)

    def bw(g):
        j = 0
        for p, w in zip(parts, widths):
            _acc(p, g[:, j:j + w])
            j += w

    return tape._node(y, bw)


def hslice(a, j0: int, j1: int) -> Var:
    tape = _tape_of(a)
    ad = _val(a)
    y = ad[:, j0:j1].copy()

    def bw(g):
        full = np.zeros_like(ad)
        full[:, j0:j1] = g
        _acc(a, full)

    return tape._node(y, bw)


def reshape(a, shape) -> Var:
    tape = _tape_of(a)
    ad = _val(a)
    y = ad.reshape(shape)

    def bw(g):
        _acc(a, g.reshape(ad.shape))

    return tape._node(y, bw)


def bmm_vec(w, q) -> Var:
    """Batched contraction: (B,n,E) x (B,n) -> (B,E)."""
    tape = _tape_of(w, q)
    wd, qd = _val(w), _val(q)
    y = np.einsum("bne,bn->be", wd, qd)

    def bw(g):
        _acc(w, np.einsum("be,bn->bne", g, qd))
        _acc(q, np.einsum("bne,be->bn", wd, g))

    return tape._node(y, bw)


def rowsum(a) -> Var:
    """(B,E) -> (B,1), summing axis 1."""
    tape = _tape_of(a)
    ad = _val(a)
    y = ad.sum(axis=1, keepdims=True)

    def bw(g):
        _acc(a, np.broadcast_to(g, ad.shape))

    return tape._node(y, bw)


def sum_all(a) -> Var:
    tape = _tape_of(a)
    ad = _val(a)
    y = np.asarray(ad.sum())

    def bw(g):
        _acc(a, np.full_like(ad, float(g)))

    return tape._node(y, bw)


def mean_all(a) -> Var:
    tape = _tape_of(a)
    ad = _val(a)
    y = np.asarray(ad.mean())
    inv = 1.0 / ad.size

    def bw(g):
        _acc(a, np.full_like(ad, float(g) * inv))

    return tape._node(y, bw)


def l2norm(a) -> Var:
    """Euclidean norm as a scalar; subgradient 0 at the origin."""
    tape = _tape_of(a)
    ad = _val(a)
    n = math.sqrt(float((ad * ad).sum()))

    def bw(g):
        if n > 0.0:
            _acc(a, (float(g) / n) * ad)

    return tape._node(np.asarray(n), bw)


# ---------------------------------------------------------------------------
# feed-forward networks


@dataclass
class MlpLeaves:
    """Per-layer parameter leaves of one recorded forward pass."""

    weights: list[Var]
    biases: list[Var]

    def params(self) -> list[Var]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def grads(self) -> list[Array]:
        return [
            v.grad if v.grad is not None else np.zeros_like(v.data)
            for v in self.params()
        ]


@dataclass
class Mlp:
    """Fully connected network with per-layer weights (out,in) and biases (out,)."""

    layer_sizes: list[int]
    weights: list[Array]
    biases: list[Array]
    hidden_activation: str = "relu"
    output_activation: str = "identity"

    def __post_init__(self):
        if self.hidden_activation not in HIDDEN_ACTIVATIONS:
            raise ValueError(f"unknown hidden activation {self.hidden_activation!r}")
        if self.output_activation not in OUTPUT_ACTIVATIONS:
            raise ValueError(f"unknown output activation {self.output_activation!r}")
        if len(self.layer_sizes) < 2:
            raise ValueError("need at least an input and an output layer")
        n_layers = len(self.layer_sizes) - 1
        if len(self.weights) != n_layers or len(self.biases) != n_layers:
            raise ValueError("layer count does not match layer_sizes")
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            want = (self.layer_sizes[l + 1], self.layer_sizes[l])
            if w.shape != want:
                raise ValueError(f"layer {l} weight shape {w.shape}, expected {want}")
            if b.shape != (self.layer_sizes[l + 1],):
                raise ValueError(
                    f"layer {l} bias shape {b.shape}, expected ({self.layer_sizes[l + 1]},)"
                )

    @classmethod
    def init(cls, layer_sizes, hidden_activation="relu", output_activation="identity",
             rng=None) -> "Mlp":
        """Uniform init in +-1/sqrt(fan_in) per layer."""
        rng = rng if rng is not None else np.random.default_rng()
        weights, biases = [], []
        for l in range(len(layer_sizes) - 1):
            bound = 1.0 / math.sqrt(layer_sizes[l])
            weights.append(rng.uniform(-bound, bound, (layer_sizes[l + 1], layer_sizes[l])))
            biases.append(rng.uniform(-bound, bound, layer_sizes[l + 1]))
        return cls(list(layer_sizes), weights, biases, hidden_activation, output_activation)

    @property
    def in_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def out_dim(self) -> int:
        return self.layer_sizes[-1]

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def params(self) -> list[Array]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def copy(self) -> "Mlp":
        return Mlp(
            list(self.layer_sizes),
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.hidden_activation,
            self.output_activation,
        )

    def same_architecture(self, other: "Mlp") -> bool:
        return (
            self.layer_sizes == other.layer_sizes
            and self.hidden_activation == other.hidden_activation
            and self.output_activation == other.output_activation
        )

    def _check_input(self, x: Array) -> None:
        if x.shape[-1] != self.in_dim:
            raise ValueError(
                f"input dimension {x.shape[-1]} does not match first layer {self.in_dim}"
            )

    def forward(self, x) -> Array:
        """Plain numpy forward pass; accepts (d,) or (B,d)."""
        x = np.asarray(x, dtype=np.float64)
        self._check_input(x)
        single = x.ndim == 1
        h = x[None, :] if single else x
        last = len(self.weights) - 1
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w.T + b
            if l < last:
                h = np.maximum(h, 0.0) if self.hidden_activation == "relu" else np.tanh(h)
            elif self.output_activation == "tanh":
                h = np.tanh(h)
        return h[0] if single else h

    def forward_var(self, tape: Tape, x, leaves: MlpLeaves | None = None):
        """Recorded forward pass; x may be a Var (B,d) or a constant array.

        Returns (output Var (B,out), MlpLeaves) so callers can read parameter
        gradients after the reverse sweep.
        """
        if isinstance(x, np.ndarray):
            self._check_input(x)
        else:
            self._check_input(x.data)
        if leaves is None:
            leaves = MlpLeaves(
                [tape.leaf(w) for w in self.weights],
                [tape.leaf(b) for b in self.biases],
            )
        h = x
        last = len(self.weights) - 1
        for l, (w, b) in enumerate(zip(leaves.weights, leaves.biases)):
            h = linear(h, w, b)
            if l < last:
                h = relu(h) if self.hidden_activation == "relu" else tanh(h)
            elif self.output_activation == "tanh":
                h = tanh(h)
        return h, leaves


def mlp_forward(net: Mlp, x, tape: Tape | None = None) -> Array:
    """Forward pass through `net`; records intermediates when a tape is given.

    A tape accepts exactly one recorded network pass; gradients are read back
    with `backward(tape, output_gradient)`.
    """
    if tape is None:
        return net.forward(x)
    if tape._mlp_record is not None:
        raise TapeError("tape already holds a recorded forward pass")
    arr = np.asarray(x, dtype=np.float64)
    net._check_input(arr)
    single = arr.ndim == 1
    x2 = arr[None, :] if single else arr
    x_leaf = tape.leaf(x2)
    out, leaves = net.forward_var(tape, x_leaf)
    tape._mlp_record = (x_leaf, leaves, out, single)
    return out.data[0] if single else out.data


def backward(tape: Tape, output_gradient):
    """Reverse sweep for a tape recorded by `mlp_forward`.

    Returns (param_grads, input_grad) where param_grads is a per-layer list
    of (dW, db) pairs.
    """
    if tape._mlp_record is None:
        raise TapeError("tape holds no recorded forward pass")
    x_leaf, leaves, out, single = tape._mlp_record
    g = np.asarray(output_gradient, dtype=np.float64)
    if single:
        if g.shape != out.data[0].shape:
            raise ValueError(f"output gradient shape {g.shape} != output shape {out.data[0].shape}")
        g = g[None, :]
    tape.backward(out, g)
    param_grads = [
        (
            w.grad if w.grad is not None else np.zeros_like(w.data),
            b.grad if b.grad is not None else np.zeros_like(b.data),
        )
        for w, b in zip(leaves.weights, leaves.biases)
    ]
    input_grad = x_leaf.grad if x_leaf.grad is not None else np.zeros_like(x_leaf.data)
    if single:
        input_grad = input_grad[0]
    return param_grads, input_grad


# ---------------------------------------------------------------------------
# optimisation


@dataclass
class AdamState:
    """Adam moments plus hyperparameters for one parameter list."""

    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def _ensure(self, params: list[Array]) -> None:
        if not self.m:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        for mom, p in zip(self.m, params):
            if mom.shape != p.shape:
                raise ValueError("moment tensors do not shape-match parameters")


def _param_list(params) -> list[Array]:
    return params.params() if isinstance(params, Mlp) else list(params)


def adam_step(params, grads, state: AdamState) -> None:
    """One bias-corrected Adam update, in place."""
    plist = _param_list(params)
    glist = list(grads)
    if len(plist) != len(glist):
        raise ValueError("gradient count does not match parameter count")
    for p, g in zip(plist, glist):
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {p.shape}")
        if not np.all(np.isfinite(g)):
            raise FloatingPointError("non-finite gradient passed to adam_step")
    state._ensure(plist)
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** state.step
    bc2 = 1.0 - b2 ** state.step
    for p, g, m, v in zip(plist, glist, state.m, state.v):
        if state.weight_decay:
            g = g + state.weight_decay * p
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)


def clip_grad_norm(grads: list[Array], max_norm: float) -> list[Array]:
    """Rescale grads in place so the global L2 norm is at most max_norm."""
    if max_norm <= 0:
        raise ValueError("max_norm must be positive")
    total = math.sqrt(sum(float((g * g).sum()) for g in grads))
    if total > max_norm:
        scale = max_norm / total
        for g in grads:
            g *= scale
    return grads


def soft_update(target, online, tau: float) -> None:
    """target <- (1-tau)*target + tau*online, elementwise, in place."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError("tau must lie in [0, 1]")
    if isinstance(target, Mlp) and isinstance(online, Mlp):
        if not target.same_architecture(online):
            raise ValueError("architecture mismatch between target and online networks")
        tlist, olist = target.params(), online.params()
    else:
        tlist, olist = list(target), list(online)
        if len(tlist) != len(olist) or any(t.shape != o.shape for t, o in zip(tlist, olist)):
            raise ValueError("architecture mismatch between target and online parameters")
    for t, o in zip(tlist, olist):
        t *= 1.0 - tau
        t += tau * o
