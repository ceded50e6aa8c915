"""Reverse-mode automatic differentiation over a recording tape.

A ``Tape`` appends one ``Node`` per operation; node ids are assigned in
execution order, so the graph is topologically sorted by construction.
``Tape.backward`` runs one reverse sweep, summing gradients across fan-out,
then publishes each parameter's gradient onto the ``Parameter`` itself.

``Evaluator`` exposes the same operation surface but only computes values;
network code is written once against either context. Tapes are single-use
and single-owner; independent tapes are safe to run concurrently.
"""

import numpy as np

from ctgen import ops
from ctgen.errors import ContractError, StateError


class Parameter:
    """Trainable array plus its gradient and a role tag.

    The role (weight | bias | bn_gamma | bn_beta) decides whether weight
    decay applies during optimization.
    """

    __slots__ = ("name", "value", "grad", "role")

    def __init__(self, name, value, role="weight"):
        self.name = name
        self.value = ops.as_tensor(value)
        self.grad = None
        self.role = role

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.value.shape}, role={self.role!r})"


class Node:
    """One recorded operation: output value, input edges, gradient slot."""

    __slots__ = ("id", "op", "value", "inputs", "grad", "_backward")

    def __init__(self, node_id, op, value, inputs, backward):
        self.id = node_id
        self.op = op
        self.value = value
        self.inputs = inputs
        self.grad = None
        self._backward = backward

    @property
    def shape(self):
        return self.value.shape


class Tape:
    """Single-use recorder of a computation for one backward pass."""

    def __init__(self):
        self.nodes = []
        self.consumed = False
        self._param_nodes = {}

    # -- node plumbing ------------------------------------------------------

    def _record(self, op, inputs, value, backward):
        node = Node(len(self.nodes), op, value, tuple(inputs), backward)
        self.nodes.append(node)
        return node

    def constant(self, value):
        """Leaf node for data the loss is not differentiated against."""
        return self._record("const", (), ops.as_tensor(value), None)

    def param(self, p):
        """Leaf node for a Parameter; one node per parameter per tape."""
        node = self._param_nodes.get(p.name)
        if node is None:
            node = self._record("param", (), p.value, None)
            self._param_nodes[p.name] = (node, p)
            return node
        return node[0]

    def _wrap(self, x):
        if isinstance(x, Node):
            return x
        if isinstance(x, Parameter):
            return self.param(x)
        return self.constant(x)

    # -- recorded operations ------------------------------------------------

    def conv2d(self, x, w, b, stride):
        x, w, b = self._wrap(x), self._wrap(w), self._wrap(b)
        out, cache = ops.conv2d_forward(x.value, w.value, b.value, stride)
        return self._record(
            "conv2d", (x, w, b), out, lambda d: ops.conv2d_backward(d, cache)
        )

    def conv2d_transpose(self, x, w, b, stride):
        x, w, b = self._wrap(x), self._wrap(w), self._wrap(b)
        out, cache = ops.conv2d_transpose_forward(x.value, w.value, b.value, stride)
        return self._record(
            "conv2d_transpose", (x, w, b), out,
            lambda d: ops.conv2d_transpose_backward(d, cache),
        )

    def dense(self, x, w, b):
        x, w, b = self._wrap(x), self._wrap(w), self._wrap(b)
        out, cache = ops.dense_forward(x.value, w.value, b.value)
        return self._record(
            "dense", (x, w, b), out, lambda d: ops.dense_backward(d, cache)
        )

    def leaky_relu(self, x, slope):
        x = self._wrap(x)
        out, cache = ops.leaky_relu_forward(x.value, slope)
        return self._record(
            "leaky_relu", (x,), out, lambda d: ops.leaky_relu_backward(d, cache)
        )

    def sigmoid(self, x):
        x = self._wrap(x)
        out, cache = ops.sigmoid_forward(x.value)
        return self._record(
            "sigmoid", (x,), out, lambda d: ops.sigmoid_backward(d, cache)
        )

    def batch_norm(self, x, gamma, beta, state, mode, update_running=True):
        x, gamma, beta = self._wrap(x), self._wrap(gamma), self._wrap(beta)
        out, cache = ops.batch_norm_forward(
            x.value, gamma.value, beta.value, state, mode, update_running
        )
        return self._record(
            "batch_norm", (x, gamma, beta), out,
            lambda d: ops.batch_norm_backward(d, cache),
        )

    def dropout(self, x, p, mode, rng):
        x = self._wrap(x)
        out, cache = ops.dropout_forward(x.value, p, mode, rng)
        return self._record(
            "dropout", (x,), out, lambda d: ops.dropout_backward(d, cache)
        )

    def reshape(self, x, new_shape):
        x = self._wrap(x)
        out, cache = ops.reshape_forward(x.value, new_shape)
        return self._record(
            "reshape", (x,), out, lambda d: ops.reshape_backward(d, cache)
        )

    def flatten(self, x):
        x = self._wrap(x)
        out, cache = ops.flatten_forward(x.value)
        return self._record(
            "flatten", (x,), out, lambda d: ops.reshape_backward(d, cache)
        )

    def log(self, x):
        x = self._wrap(x)
        out, cache = ops.log_forward(x.value)
        return self._record("log", (x,), out, lambda d: ops.log_backward(d, cache))

    def mean(self, x):
        x = self._wrap(x)
        out, cache = ops.mean_forward(x.value)
        return self._record("mean", (x,), out, lambda d: ops.mean_backward(d, cache))

    def add(self, a, b):
        a, b = self._wrap(a), self._wrap(b)
        out, _ = ops.add_forward(a.value, b.value)
        return self._record("add", (a, b), out, lambda d: ops.add_backward(d, ()))

    def neg(self, x):
        x = self._wrap(x)
        out, _ = ops.neg_forward(x.value)
        return self._record("neg", (x,), out, lambda d: ops.neg_backward(d, ()))

    def rsub(self, c, x):
        """Node computing c - x for a python scalar c."""
        x = self._wrap(x)
        out, _ = ops.rsub_forward(c, x.value)
        return self._record("rsub", (x,), out, lambda d: ops.rsub_backward(d, ()))

    # -- reverse sweep -------------------------------------------------------

    def backward(self, loss):
        """Reverse-topological sweep from ``loss``; publishes Parameter.grad.

        Gradients sum across fan-out. The tape is marked consumed; a second
        backward raises StateError.
        """
        if self.consumed:
            raise StateError("tape already consumed by a previous backward pass")
        if loss.value.size != 1:
            raise ContractError(f"loss must be scalar, got shape {loss.value.shape}")
        self.consumed = True
        loss.grad = np.ones_like(loss.value)
        for node in reversed(self.nodes):
            fn = node._backward
            node._backward = None  # free op caches as the sweep passes
            if node.grad is None or fn is None:
                continue
            for inp, g in zip(node.inputs, fn(node.grad)):
                if g is None:
                    continue
                if inp.grad is None:
                    inp.grad = g
                else:
                    inp.grad = inp.grad + g
        for node, p in self._param_nodes.values():
            p.grad = node.grad if node.grad is not None else np.zeros_like(p.value)


class Evaluator:
    """Value-only twin of Tape for inference paths; same method surface."""

    @staticmethod
    def _value(x):
        return x.value if isinstance(x, Parameter) else ops.as_tensor(x)

    def constant(self, value):
        return ops.as_tensor(value)

    def param(self, p):
        return p.value

    def conv2d(self, x, w, b, stride):
        return ops.conv2d_forward(self._value(x), self._value(w), self._value(b), stride)[0]

    def conv2d_transpose(self, x, w, b, stride):
        return ops.conv2d_transpose_forward(
            self._value(x), self._value(w), self._value(b), stride
        )[0]

    def dense(self, x, w, b):
        return ops.dense_forward(self._value(x), self._value(w), self._value(b))[0]

    def leaky_relu(self, x, slope):
        return ops.leaky_relu_forward(self._value(x), slope)[0]

    def sigmoid(self, x):
        return ops.sigmoid_forward(self._value(x))[0]

    def batch_norm(self, x, gamma, beta, state, mode, update_running=True):
        return ops.batch_norm_forward(
            self._value(x), self._value(gamma), self._value(beta), state, mode, update_running
        )[0]

    def dropout(self, x, p, mode, rng):
        return ops.dropout_forward(self._value(x), p, mode, rng)[0]

    def reshape(self, x, new_shape):
        return ops.reshape_forward(self._value(x), new_shape)[0]

    def flatten(self, x):
        return ops.flatten_forward(self._value(x))[0]

    def log(self, x):
        return ops.log_forward(self._value(x))[0]

    def mean(self, x):
        return ops.mean_forward(self._value(x))[0]

    def add(self, a, b):
        return ops.add_forward(self._value(a), self._value(b))[0]

    def neg(self, x):
        return ops.neg_forward(self._value(x))[0]

    def rsub(self, c, x):
        return ops.rsub_forward(c, self._value(x))[0]


def value_of(x):
    """Underlying array of a Node, Parameter, or plain array."""
    if isinstance(x, (Node, Parameter)):
        return x.value
    return x
