"""Dense float64 tensors with reverse-mode differentiation on a flat tape.

The tape is define-by-run: while gradients are enabled, every
differentiable operation appends one record, and `backward` replays the
records in reverse order (creation order is topological order by
construction). The expected usage is one fresh tape per forward pass:
call `reset_tape()` before building the next graph. Nothing is cached
between passes.

Only rank-preserving elementwise broadcasting with scalars is supported;
everything else requires exactly matching shapes.
"""

from __future__ import annotations

import contextlib
import math

import numpy as np

__all__ = [
    "Tensor",
    "ShapeError",
    "NondeterministicFunction",
    "make_op",
    "reset_tape",
    "tape_size",
    "no_grad",
    "backward",
    "add",
    "sub",
    "hadamard",
    "matmul",
    "tanh",
    "sigmoid",
    "identity",
    "concat",
    "split",
    "softmax",
    "dropout",
    "max_pool_over_time",
    "cross_entropy",
    "take_rows",
    "transpose",
    "reshape",
    "add_rowvec",
    "sum_all",
    "Adam",
    "grad_check",
]


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


class NondeterministicFunction(RuntimeError):
    """Raised by grad_check when two evaluations of f disagree."""


class Tensor:
    """A dense float64 array with an optional same-shape gradient slot."""

    __slots__ = ("data", "grad", "requires_grad", "is_leaf")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self.is_leaf = True

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() on non-scalar tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # Operator sugar over the module-level ops.
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return hadamard(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self):
        return sum_all(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


# ---------------------------------------------------------------------------
# Tape

class _Record:
    __slots__ = ("out", "rule")

    def __init__(self, out: Tensor, rule):
        self.out = out
        self.rule = rule


_TAPE: list[_Record] = []
_GRAD_ENABLED: bool = True


def reset_tape() -> None:
    """Drop all recorded operations; leaf gradients are untouched."""
    _TAPE.clear()


def tape_size() -> int:
    return len(_TAPE)


@contextlib.contextmanager
def no_grad():
    """Disable recording; ops executed inside produce constant tensors."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def make_op(data: np.ndarray, parents, rule) -> Tensor:
    """Create an op output and record its backward rule.

    `rule(g)` receives the output gradient and must return an iterable of
    (parent_tensor, gradient_array) pairs, one per parent that needs a
    gradient. Recording is skipped when gradients are globally disabled
    or no parent requires them.
    """
    track = _GRAD_ENABLED and any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=track)
    if track:
        out.is_leaf = False
        _TAPE.append(_Record(out, rule))
    return out


def backward(loss: Tensor) -> None:
    """Populate grad on every requires_grad leaf reachable from `loss`.

    Repeated calls without `zero_grad` accumulate. Intermediate tensors
    never retain gradients.
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward expects a scalar loss, got shape {loss.shape}")
    buffers: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    if loss.is_leaf:
        return
    for rec in reversed(_TAPE):
        g = buffers.pop(id(rec.out), None)
        if g is None:
            continue
        for parent, contrib in rec.rule(g):
            if not parent.requires_grad:
                continue
            if parent.is_leaf:
                if parent.grad is None:
                    parent.grad = np.zeros_like(parent.data)
                parent.grad += contrib
            else:
                key = id(parent)
                buf = buffers.get(key)
                if buf is None:
                    buffers[key] = np.array(contrib, dtype=np.float64)
                else:
                    buf += contrib


# ---------------------------------------------------------------------------
# Elementwise ops

def _check_elementwise(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape == b.shape or a.size == 1 or b.size == 1:
        return
    raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}")


def _reduce_to(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Collapse a broadcast gradient back onto a scalar operand's shape."""
    if g.shape == shape:
        return g
    return np.asarray(np.sum(g), dtype=np.float64).reshape(shape)


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_elementwise("add", a, b)

    def rule(g):
        return [(a, _reduce_to(g, a.shape)), (b, _reduce_to(g, b.shape))]

    return make_op(a.data + b.data, (a, b), rule)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_elementwise("sub", a, b)

    def rule(g):
        return [(a, _reduce_to(g, a.shape)), (b, _reduce_to(-g, b.shape))]

    return make_op(a.data - b.data, (a, b), rule)


def hadamard(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_elementwise("hadamard", a, b)
    ad, bd = a.data, b.data

    def rule(g):
        return [(a, _reduce_to(g * bd, a.shape)), (b, _reduce_to(g * ad, b.shape))]

    return make_op(ad * bd, (a, b), rule)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    ad, bd = a.data, b.data

    def rule(g):
        pairs = []
        if a.requires_grad:
            pairs.append((a, g @ bd.T))
        if b.requires_grad:
            pairs.append((b, ad.T @ g))
        return pairs

    return make_op(ad @ bd, (a, b), rule)


# ---------------------------------------------------------------------------
# Activations

def sigmoid_values(x: np.ndarray) -> np.ndarray:
    """Stable logistic on a raw array. Inputs are clipped to +/-60 before
    exponentiation, which avoids overflow and changes outputs by at most
    ~1e-26 in the saturated tails."""
    return 1.0 / (1.0 + np.exp(-np.clip(x, -60.0, 60.0)))


def tanh(x: Tensor) -> Tensor:
    x = as_tensor(x)
    out_data = np.tanh(x.data)

    def rule(g):
        return [(x, g * (1.0 - out_data * out_data))]

    return make_op(out_data, (x,), rule)


def sigmoid(x: Tensor) -> Tensor:
    x = as_tensor(x)
    out_data = sigmoid_values(x.data)

    def rule(g):
        return [(x, g * out_data * (1.0 - out_data))]

    return make_op(out_data, (x,), rule)


def identity(x: Tensor) -> Tensor:
    x = as_tensor(x)

    def rule(g):
        return [(x, g)]

    return make_op(x.data.copy(), (x,), rule)


# ---------------------------------------------------------------------------
# Structural ops

def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeError("concat: empty tensor list")
    ndim = tensors[0].data.ndim
    if not -ndim <= axis < ndim:
        raise ShapeError(f"concat: axis {axis} out of range for rank {ndim}")
    ax = axis % ndim
    ref = list(tensors[0].shape)
    for t in tensors[1:]:
        other = list(t.shape)
        if len(other) != ndim or any(
            i != ax and other[i] != ref[i] for i in range(ndim)
        ):
            raise ShapeError(
                f"concat: shape {t.shape} does not conform to {tensors[0].shape} "
                f"off axis {ax}"
            )
    sizes = [t.shape[ax] for t in tensors]
    offsets = np.cumsum(sizes)[:-1]

    def rule(g):
        pieces = np.split(g, offsets, axis=ax)
        return [(t, piece) for t, piece in zip(tensors, pieces)]

    return make_op(np.concatenate([t.data for t in tensors], axis=ax), tensors, rule)


def split(x: Tensor, sizes, axis: int = 0) -> list[Tensor]:
    """Inverse of concat: cut `x` into consecutive blocks along `axis`."""
    x = as_tensor(x)
    ax = axis % x.data.ndim
    if sum(sizes) != x.shape[ax]:
        raise ShapeError(f"split: sizes {list(sizes)} do not cover extent {x.shape[ax]}")
    outs = []
    start = 0
    for size in sizes:
        sl = [slice(None)] * x.data.ndim
        sl[ax] = slice(start, start + size)
        sl = tuple(sl)

        def rule(g, sl=sl):
            full = np.zeros_like(x.data)
            full[sl] = g
            return [(x, full)]

        outs.append(make_op(x.data[sl].copy(), (x,), rule))
        start += size
    return outs


def transpose(x: Tensor) -> Tensor:
    x = as_tensor(x)
    if x.data.ndim != 2:
        raise ShapeError(f"transpose expects a matrix, got shape {x.shape}")

    def rule(g):
        return [(x, g.T)]

    return make_op(x.data.T.copy(), (x,), rule)


def reshape(x: Tensor, shape) -> Tensor:
    x = as_tensor(x)
    shape = tuple(shape)

    def rule(g):
        return [(x, g.reshape(x.shape))]

    return make_op(x.data.reshape(shape).copy(), (x,), rule)


def take_rows(table: Tensor, indices) -> Tensor:
    """Gather rows of a matrix; gradients scatter-add back to the table."""
    table = as_tensor(table)
    idx = np.asarray(indices, dtype=np.int64)
    if table.data.ndim != 2:
        raise ShapeError(f"take_rows expects a matrix, got shape {table.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise IndexError(
            f"take_rows: index out of range [0, {table.shape[0]}) in {idx.tolist()}"
        )

    def rule(g):
        full = np.zeros_like(table.data)
        np.add.at(full, idx, g)
        return [(table, full)]

    return make_op(table.data[idx], (table,), rule)


def add_rowvec(x: Tensor, v: Tensor) -> Tensor:
    """Add a (1, d) row vector to every row of an (n, d) matrix."""
    x, v = as_tensor(x), as_tensor(v)
    if x.data.ndim != 2 or v.shape != (1, x.shape[1]):
        raise ShapeError(f"add_rowvec: shapes {x.shape} and {v.shape} do not align")

    def rule(g):
        return [(x, g), (v, g.sum(axis=0, keepdims=True))]

    return make_op(x.data + v.data, (x, v), rule)


def sum_all(x: Tensor) -> Tensor:
    x = as_tensor(x)

    def rule(g):
        return [(x, np.full_like(x.data, float(g)))]

    return make_op(np.asarray(x.data.sum()), (x,), rule)


# ---------------------------------------------------------------------------
# Softmax-family ops

def softmax(x: Tensor, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out_data = e / e.sum(axis=axis, keepdims=True)

    def rule(g):
        inner = (g * out_data).sum(axis=axis, keepdims=True)
        return [(x, out_data * (g - inner))]

    return make_op(out_data, (x,), rule)


def cross_entropy(logits: Tensor, targets) -> Tensor:
    """Mean negative log-softmax probability of the target class."""
    logits = as_tensor(logits)
    t = np.asarray(targets, dtype=np.int64)
    if logits.data.ndim != 2:
        raise ShapeError(f"cross_entropy expects (batch, classes), got {logits.shape}")
    b, c = logits.shape
    if t.shape != (b,):
        raise ShapeError(f"cross_entropy: {b} rows but {t.shape} targets")
    if t.size and (t.min() < 0 or t.max() >= c):
        raise ValueError(f"cross_entropy: target out of range [0, {c})")
    m = logits.data.max(axis=1, keepdims=True)
    lse = m[:, 0] + np.log(np.exp(logits.data - m).sum(axis=1))
    loss = (lse - logits.data[np.arange(b), t]).mean()

    def rule(g):
        p = np.exp(logits.data - m)
        p /= p.sum(axis=1, keepdims=True)
        p[np.arange(b), t] -= 1.0
        return [(logits, p * (float(g) / b))]

    return make_op(np.asarray(loss), (logits,), rule)


def max_pool_over_time(x: Tensor) -> Tensor:
    """Per-dimension max over rows; gradient flows to the first argmax."""
    x = as_tensor(x)
    if x.data.ndim != 2:
        raise ShapeError(f"max_pool_over_time expects (n, d), got {x.shape}")
    n, d = x.shape
    if n < 1:
        raise ShapeError("max_pool_over_time: empty sequence")
    arg = np.argmax(x.data, axis=0)

    def rule(g):
        full = np.zeros_like(x.data)
        full[arg, np.arange(d)] = g
        return [(x, full)]

    return make_op(x.data[arg, np.arange(d)].copy(), (x,), rule)


def dropout(x: Tensor, p: float, mode: str, rng: np.random.Generator) -> Tensor:
    """Inverted dropout: zero with probability p, scale survivors by 1/(1-p)."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    if mode not in ("train", "eval"):
        raise ValueError(f"dropout mode must be 'train' or 'eval', got {mode!r}")
    x = as_tensor(x)
    if mode == "eval" or p == 0.0:
        return x
    scale = 1.0 / (1.0 - p)
    mask = (rng.random(x.shape) >= p) * scale

    def rule(g):
        return [(x, g * mask)]

    return make_op(x.data * mask, (x,), rule)


# ---------------------------------------------------------------------------
# Optimizer

class Adam:
    """Adam with bias correction; `step` consumes and clears gradients."""

    def __init__(self, params, names=None, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params: list[Tensor] = list(params)
        self.names = list(names) if names is not None else [
            f"param{i}" for i in range(len(self.params))
        ]
        if len(self.names) != len(self.params):
            raise ValueError("Adam: names and params length mismatch")
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for i, p in enumerate(self.params):
            if p.grad is None:
                raise ValueError(f"Adam.step: parameter '{self.names[i]}' has no gradient")
            g = p.grad
            m, v = self.m[i], self.v[i]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p.data -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)
        for p in self.params:
            p.grad = None

    def state_arrays(self) -> tuple[int, list[np.ndarray], list[np.ndarray]]:
        return self.t, self.m, self.v

    def load_state(self, t: int, m: list[np.ndarray], v: list[np.ndarray]) -> None:
        if len(m) != len(self.params) or len(v) != len(self.params):
            raise ValueError("Adam.load_state: moment count mismatch")
        for i, p in enumerate(self.params):
            if m[i].shape != p.data.shape or v[i].shape != p.data.shape:
                raise ValueError(f"Adam.load_state: shape mismatch on '{self.names[i]}'")
        self.t = int(t)
        self.m = [a.copy() for a in m]
        self.v = [a.copy() for a in v]


# ---------------------------------------------------------------------------
# Gradient checking

def grad_check(f, x: Tensor, epsilon=1e-5, samples: int | None = None,
               rng: np.random.Generator | None = None) -> float:
    """Max relative error between analytic and central-difference gradients.

    `f` must be a deterministic scalar-valued function of `x`; it is
    evaluated twice at the same point to detect nondeterminism. `x` is
    perturbed in place and restored. When `samples` is given, only that
    many randomly chosen coordinates are checked. The tape is reset as a
    side effect.

    `epsilon` may be a sequence of step sizes; each coordinate is then
    cross-validated and scored by its best-conditioned step. Near-zero
    gradients make a single small step roundoff-dominated even when the
    analytic value is right, which a larger confirming step exposes.
    """
    epsilons = ((epsilon,) if isinstance(epsilon, (int, float))
                else tuple(epsilon))
    reset_tape()
    with no_grad():
        y1 = float(f(x).data)
        y2 = float(f(x).data)
    if y1 != y2:
        raise NondeterministicFunction(
            f"f(x) is not deterministic: {y1!r} != {y2!r} at the same point"
        )

    prev_req, prev_grad = x.requires_grad, x.grad
    x.requires_grad = True
    x.grad = None
    try:
        reset_tape()
        backward(f(x))
        analytic = x.grad if x.grad is not None else np.zeros_like(x.data)
        analytic = analytic.reshape(-1).copy()
    finally:
        x.requires_grad = prev_req
        x.grad = prev_grad
        reset_tape()

    flat = x.data.reshape(-1)
    coords = np.arange(flat.size)
    if samples is not None and samples < flat.size:
        gen = rng if rng is not None else np.random.default_rng(0)
        coords = gen.choice(flat.size, size=samples, replace=False)

    worst = 0.0
    for k in coords:
        orig = flat[k]
        best = math.inf
        for eps in epsilons:
            flat[k] = orig + eps
            with no_grad():
                fp = float(f(x).data)
            flat[k] = orig - eps
            with no_grad():
                fm = float(f(x).data)
            flat[k] = orig
            numeric = (fp - fm) / (2.0 * eps)
            denom = max(abs(analytic[k]), abs(numeric), 1e-8)
            best = min(best, abs(analytic[k] - numeric) / denom)
        worst = max(worst, best)
    return worst
