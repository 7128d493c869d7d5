"""Tape-based reverse-mode autodiff over dense float64 matrices.

Everything is a 2-D array; scalars are (1, 1). Each op appends its output
node to the tape in topological order, saving whatever the backward pass
needs (argmax rows for pooling, dropout masks, activation outputs).
"""

import numpy as np


class AutodiffError(ValueError):
    pass


class ShapeError(AutodiffError):
    pass


class NonFiniteError(ArithmeticError):
    pass


class EmptyMaskError(AutodiffError):
    pass


class NondeterministicLossError(AutodiffError):
    pass


def _check_finite(value, op):
    if not np.all(np.isfinite(value)):
        raise NonFiniteError(f"non-finite result in {op}")


class Tensor:
    __slots__ = ("value", "grad", "backward_fn", "param_name")

    def __init__(self, value, backward_fn=None, param_name=None):
        self.value = value
        self.grad = None
        self.backward_fn = backward_fn
        self.param_name = param_name

    @property
    def shape(self):
        return self.value.shape


def _as2d(value):
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1)
    elif arr.ndim != 2:
        raise ShapeError(f"expected rank <= 2, got shape {arr.shape}")
    return arr


class Tape:
    def __init__(self):
        self.nodes = []

    def _emit(self, value, op, backward_fn=None, param_name=None):
        _check_finite(value, op)
        t = Tensor(value, backward_fn=backward_fn, param_name=param_name)
        self.nodes.append(t)
        return t

    def constant(self, value):
        return self._emit(_as2d(value).copy(), "constant")

    def leaf(self, value, param_name=None):
        return self._emit(_as2d(value), "leaf", param_name=param_name)

    # ------------------------------------------------------------------
    # primitives

    def matmul(self, a, b):
        if a.shape[1] != b.shape[0]:
            raise ShapeError(f"matmul {a.shape} @ {b.shape}")
        out = self._emit(a.value @ b.value, "matmul")

        def bw(g):
            a.grad += g @ b.value.T
            b.grad += a.value.T @ g
        out.backward_fn = bw
        return out

    def add(self, a, b):
        if a.shape != b.shape:
            raise ShapeError(f"add {a.shape} + {b.shape}")
        out = self._emit(a.value + b.value, "add")

        def bw(g):
            a.grad += g
            b.grad += g
        out.backward_fn = bw
        return out

    def add_bias(self, m, b):
        if b.shape != (1, m.shape[1]):
            raise ShapeError(f"add_bias {m.shape} + {b.shape}")
        out = self._emit(m.value + b.value, "add_bias")

        def bw(g):
            m.grad += g
            b.grad += g.sum(axis=0, keepdims=True)
        out.backward_fn = bw
        return out

    def scale(self, m, c):
        c = float(c)
        out = self._emit(m.value * c, "scale")

        def bw(g):
            m.grad += g * c
        out.backward_fn = bw
        return out

    def relu(self, m):
        out = self._emit(np.maximum(m.value, 0.0), "relu")
        mask = m.value > 0.0

        def bw(g):
            m.grad += g * mask
        out.backward_fn = bw
        return out

    def sigmoid(self, m):
        s = 1.0 / (1.0 + np.exp(-m.value))
        out = self._emit(s, "sigmoid")

        def bw(g):
            m.grad += g * s * (1.0 - s)
        out.backward_fn = bw
        return out

    def tanh(self, m):
        t = np.tanh(m.value)
        out = self._emit(t, "tanh")

        def bw(g):
            m.grad += g * (1.0 - t * t)
        out.backward_fn = bw
        return out

    def hadamard(self, a, b):
        if a.shape != b.shape:
            raise ShapeError(f"hadamard {a.shape} * {b.shape}")
        out = self._emit(a.value * b.value, "hadamard")

        def bw(g):
            a.grad += g * b.value
            b.grad += g * a.value
        out.backward_fn = bw
        return out

    def concat_cols(self, tensors):
        rows = tensors[0].shape[0]
        if any(t.shape[0] != rows for t in tensors):
            raise ShapeError("concat_cols row mismatch")
        out = self._emit(np.concatenate([t.value for t in tensors], axis=1),
                         "concat_cols")
        widths = [t.shape[1] for t in tensors]

        def bw(g):
            off = 0
            for t, w in zip(tensors, widths):
                t.grad += g[:, off:off + w]
                off += w
        out.backward_fn = bw
        return out

    def concat_rows(self, tensors):
        cols = tensors[0].shape[1]
        if any(t.shape[1] != cols for t in tensors):
            raise ShapeError("concat_rows column mismatch")
        out = self._emit(np.concatenate([t.value for t in tensors], axis=0),
                         "concat_rows")
        heights = [t.shape[0] for t in tensors]

        def bw(g):
            off = 0
            for t, h in zip(tensors, heights):
                t.grad += g[off:off + h]
                off += h
        out.backward_fn = bw
        return out

    def slice_cols(self, m, start, stop):
        if not (0 <= start < stop <= m.shape[1]):
            raise ShapeError(f"slice_cols [{start}:{stop}] of {m.shape}")
        out = self._emit(m.value[:, start:stop].copy(), "slice_cols")

        def bw(g):
            m.grad[:, start:stop] += g
        out.backward_fn = bw
        return out

    def gather_rows(self, m, ids):
        ids = np.asarray(ids, dtype=np.int64)
        if ids.size and (ids.min() < 0 or ids.max() >= m.shape[0]):
            raise ShapeError(f"gather_rows ids outside [0, {m.shape[0]})")
        out = self._emit(m.value[ids].copy(), "gather_rows")

        def bw(g):
            np.add.at(m.grad, ids, g)
        out.backward_fn = bw
        return out

    def masked_colmax(self, m, rows):
        """Column-wise max over the selected rows.

        Returns (1 x d tensor, argmax row indices into m). Ties break
        toward the lowest selected row index.
        """
        rows = np.asarray(sorted(rows), dtype=np.int64)
        if rows.size == 0:
            raise EmptyMaskError("masked_colmax over an empty row set")
        sub = m.value[rows]
        arg = sub.argmax(axis=0)
        chosen = rows[arg]
        out = self._emit(sub.max(axis=0, keepdims=True), "masked_colmax")
        cols = np.arange(m.shape[1])

        def bw(g):
            np.add.at(m.grad, (chosen, cols), g[0])
        out.backward_fn = bw
        return out, chosen

    def dropout(self, m, p, train, rng):
        if not (0.0 <= p < 1.0):
            raise AutodiffError(f"dropout p={p} outside [0, 1)")
        if not train or p == 0.0:
            out = self._emit(m.value.copy(), "dropout")

            def bw(g):
                m.grad += g
            out.backward_fn = bw
            return out
        mask = (rng.random(m.shape) >= p) / (1.0 - p)
        out = self._emit(m.value * mask, "dropout")

        def bw(g):
            m.grad += g * mask
        out.backward_fn = bw
        return out

    def softmax_cross_entropy(self, logits, label):
        if logits.shape[0] != 1:
            raise ShapeError("softmax_cross_entropy expects a 1 x C logit row")
        c = logits.shape[1]
        if not (0 <= label < c):
            raise AutodiffError(f"label {label} outside [0, {c})")
        z = logits.value[0] - logits.value[0].max()
        ez = np.exp(z)
        probs = ez / ez.sum()
        loss = -np.log(probs[label])
        out = self._emit(np.array([[loss]]), "softmax_cross_entropy")
        onehot = np.zeros(c)
        onehot[label] = 1.0

        def bw(g):
            logits.grad += g[0, 0] * (probs - onehot).reshape(1, -1)
        out.backward_fn = bw
        return out, probs.copy()

    def sum_of_squares(self, v):
        out = self._emit(np.array([[float(np.sum(v.value ** 2))]]),
                         "sum_of_squares")

        def bw(g):
            v.grad += 2.0 * v.value * g[0, 0]
        out.backward_fn = bw
        return out


def softmax(logits):
    """Plain-numpy softmax over the last axis (eval paths)."""
    z = logits - logits.max(axis=-1, keepdims=True)
    ez = np.exp(z)
    return ez / ez.sum(axis=-1, keepdims=True)


class ParamStore:
    """Named trainable parameters with gradient accumulators."""

    def __init__(self):
        self._params = {}

    def add(self, name, value, trainable=True):
        if name in self._params:
            raise AutodiffError(f"duplicate parameter {name!r}")
        value = np.asarray(value, dtype=np.float64)
        self._params[name] = {"value": value,
                              "grad": np.zeros_like(value),
                              "trainable": trainable}

    def __contains__(self, name):
        return name in self._params

    def names(self):
        return sorted(self._params)

    def value(self, name):
        return self._params[name]["value"]

    def grad(self, name):
        return self._params[name]["grad"]

    def trainable(self, name):
        return self._params[name]["trainable"]

    def use(self, tape, name):
        return tape.leaf(self._params[name]["value"], param_name=name)

    def zero_grad(self):
        for p in self._params.values():
            p["grad"][...] = 0.0


def backward(tape, loss, store=None):
    """Reverse sweep; accumulates leaf gradients into the store if given."""
    if loss.shape != (1, 1):
        raise ShapeError(f"loss must be scalar, got shape {loss.shape}")
    for node in tape.nodes:
        node.grad = np.zeros_like(node.value)
    loss.grad[0, 0] = 1.0
    for node in reversed(tape.nodes):
        if node.backward_fn is not None:
            node.backward_fn(node.grad)
    if store is not None:
        for node in tape.nodes:
            if node.param_name is not None:
                store.grad(node.param_name)[...] += node.grad


def clip_and_step(store, lr, max_norm=5.0):
    """Global-norm gradient clipping followed by a plain SGD step.

    Returns the pre-clip global norm. Gradients are zeroed afterwards.
    """
    sq = 0.0
    for name in store.names():
        if not store.trainable(name):
            continue
        g = store.grad(name)
        if not np.all(np.isfinite(g)):
            raise NonFiniteError(f"non-finite gradient in {name!r}")
        sq += float(np.sum(g * g))
    norm = np.sqrt(sq)
    factor = max_norm / norm if norm > max_norm else 1.0
    for name in store.names():
        if store.trainable(name):
            store.value(name)[...] -= lr * factor * store.grad(name)
    store.zero_grad()
    return norm


def grad_check(build_loss, store, eps=1e-5, corrupt_name=None):
    """Compare analytic gradients against central finite differences.

    `build_loss()` must deterministically return (tape, loss_tensor) using
    the store's current parameter values. Returns (max relative error,
    per-parameter dict of max relative errors). `corrupt_name` perturbs
    one analytic gradient entry by 0.1, a sensitivity hook for verifying
    the harness reports injected errors.
    """
    l1 = build_loss()[1].value[0, 0]
    l2 = build_loss()[1].value[0, 0]
    if l1 != l2:
        raise NondeterministicLossError(
            f"two baseline evaluations differ: {l1!r} vs {l2!r}")

    store.zero_grad()
    tape, loss = build_loss()
    backward(tape, loss, store)
    analytic = {name: store.grad(name).copy() for name in store.names()
                if store.trainable(name)}
    store.zero_grad()
    if corrupt_name is not None:
        analytic[corrupt_name].flat[0] += 0.1

    per_param = {}
    for name, agrad in analytic.items():
        value = store.value(name)
        worst = 0.0
        it = np.nditer(value, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = value[idx]
            value[idx] = orig + eps
            lp = build_loss()[1].value[0, 0]
            value[idx] = orig - eps
            lm = build_loss()[1].value[0, 0]
            value[idx] = orig
            numeric = (lp - lm) / (2.0 * eps)
            a = agrad[idx]
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, err)
        per_param[name] = worst
    overall = max(per_param.values()) if per_param else 0.0
    return overall, per_param
