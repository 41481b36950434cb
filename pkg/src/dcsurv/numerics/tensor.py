"""
A small reverse-mode automatic differentiation engine on numpy arrays.

Every operation records its inputs and a closure that propagates the output gradient back to
them. `Tensor.backward` walks the recorded graph in reverse topological order.
"""
import typing

import numpy as np

from dcsurv.core import DomainError

__all__ = [
    'Tensor', 'Parameter', 'as_tensor', 'concat', 'stack', 'cumprod', 'dropout', 'backward']


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    """
    A float64 array together with the operation that produced it.

    :ivar data: The values.
    :ivar grad: Gradient of the last `backward` call, `None` if the tensor was not reached.
    """
    __array_priority__ = 100

    def __init__(self, data, _children=(), _op=''):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self._backward = None
        self._prev = tuple(_children)
        self._op = _op

    def __repr__(self):
        return 'Tensor(shape={}, op={!r})'.format(self.shape, self._op)

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def __float__(self):
        return self.item()

    def __len__(self):
        return len(self.data)

    def _accumulate(self, grad):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad = self.grad + grad

    def _result(self, data, children, op, backward):
        out = Tensor(data, children, op)
        out._backward = backward
        return out

    # ---------------------------------------------------------------------------------------------
    # Arithmetic
    # ---------------------------------------------------------------------------------------------
    def __add__(self, other):
        other = as_tensor(other)

        def _backward(g):
            self._accumulate(_unbroadcast(g, self.shape))
            other._accumulate(_unbroadcast(g, other.shape))
        return self._result(self.data + other.data, (self, other), '+', _backward)

    def __mul__(self, other):
        other = as_tensor(other)

        def _backward(g):
            self._accumulate(_unbroadcast(g * other.data, self.shape))
            other._accumulate(_unbroadcast(g * self.data, other.shape))
        return self._result(self.data * other.data, (self, other), '*', _backward)

    def __pow__(self, exponent):
        assert isinstance(exponent, (int, float)), 'only constant exponents are supported'

        def _backward(g):
            self._accumulate(g * exponent * self.data ** (exponent - 1))
        return self._result(self.data ** exponent, (self,), '**', _backward)

    def __neg__(self):
        return self * -1.0

    def __radd__(self, other):
        return self + other

    def __sub__(self, other):
        return self + (-as_tensor(other))

    def __rsub__(self, other):
        return as_tensor(other) + (-self)

    def __rmul__(self, other):
        return self * other

    def __truediv__(self, other):
        other = as_tensor(other)

        def _backward(g):
            self._accumulate(_unbroadcast(g / other.data, self.shape))
            other._accumulate(
                _unbroadcast(-g * self.data / other.data ** 2, other.shape))
        return self._result(self.data / other.data, (self, other), '/', _backward)

    def __rtruediv__(self, other):
        return as_tensor(other) / self

    def __matmul__(self, other):
        other = as_tensor(other)
        if self.ndim != 2 or other.ndim != 2 or self.shape[1] != other.shape[0]:
            raise DomainError('matmul shape mismatch: {} @ {}'.format(self.shape, other.shape))

        def _backward(g):
            self._accumulate(g @ other.data.T)
            other._accumulate(self.data.T @ g)
        return self._result(self.data @ other.data, (self, other), '@', _backward)

    # ---------------------------------------------------------------------------------------------
    # Reductions and element-wise functions
    # ---------------------------------------------------------------------------------------------
    def sum(self, axis=None):
        def _backward(g):
            if axis is not None:
                g = np.expand_dims(g, axis)
            self._accumulate(np.broadcast_to(g, self.shape))
        return self._result(self.data.sum(axis=axis), (self,), 'sum', _backward)

    def mean(self, axis=None):
        count = self.data.size if axis is None else self.shape[axis]
        return self.sum(axis=axis) / float(count)

    def exp(self):
        res = np.exp(self.data)

        def _backward(g):
            self._accumulate(g * res)
        return self._result(res, (self,), 'exp', _backward)

    def log(self):
        def _backward(g):
            self._accumulate(g / self.data)
        return self._result(np.log(self.data), (self,), 'log', _backward)

    def tanh(self):
        res = np.tanh(self.data)

        def _backward(g):
            self._accumulate(g * (1.0 - res ** 2))
        return self._result(res, (self,), 'tanh', _backward)

    def sigmoid(self):
        # Numerically stable in both tails.
        res = np.exp(-np.logaddexp(0.0, -self.data))

        def _backward(g):
            self._accumulate(g * res * (1.0 - res))
        return self._result(res, (self,), 'sigmoid', _backward)

    def relu(self):
        mask = self.data > 0

        def _backward(g):
            self._accumulate(g * mask)
        return self._result(self.data * mask, (self,), 'relu', _backward)

    # ---------------------------------------------------------------------------------------------
    # Shape manipulation
    # ---------------------------------------------------------------------------------------------
    def reshape(self, *shape):
        def _backward(g):
            self._accumulate(g.reshape(self.shape))
        return self._result(self.data.reshape(*shape), (self,), 'reshape', _backward)

    @property
    def T(self):
        def _backward(g):
            self._accumulate(g.T)
        return self._result(self.data.T, (self,), 'T', _backward)

    def __getitem__(self, item):
        def _backward(g):
            full = np.zeros_like(self.data)
            np.add.at(full, item, g)
            self._accumulate(full)
        return self._result(self.data[item], (self,), '[]', _backward)

    # ---------------------------------------------------------------------------------------------
    # Gradient computation
    # ---------------------------------------------------------------------------------------------
    def _topological_order(self) -> typing.List['Tensor']:
        order, visited, stack = [], set(), [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for child in node._prev:
                if id(child) not in visited:
                    stack.append((child, False))
        return order

    def backward(self):
        """
        Compute gradients of this scalar with respect to every tensor it depends on.
        """
        if self.data.size != 1:
            raise DomainError('backward requires a scalar, got shape {}'.format(self.shape))
        order = self._topological_order()
        for node in order:
            node.grad = None
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)


class Parameter(Tensor):
    """
    A named leaf tensor, updated by an optimizer and stored in checkpoints.
    """
    def __init__(self, data, name: str):
        Tensor.__init__(self, np.array(data, dtype=np.float64))
        self.name = name

    def __repr__(self):
        return 'Parameter({!r}, shape={})'.format(self.name, self.shape)


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def concat(tensors: typing.Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def _backward(g):
        for t, part in zip(tensors, np.split(g, sizes, axis=axis)):
            t._accumulate(part)
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis), tensors, 'concat')
    out._backward = _backward
    return out


def stack(tensors: typing.Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]

    def _backward(g):
        for i, t in enumerate(tensors):
            t._accumulate(np.take(g, i, axis=axis))
    out = Tensor(np.stack([t.data for t in tensors], axis=axis), tensors, 'stack')
    out._backward = _backward
    return out


def cumprod(x: Tensor) -> Tensor:
    """
    Cumulative product along the last axis.

    The gradient is computed from products that leave out one factor, so it stays exact when
    factors are zero.
    """
    data = x.data
    res = np.cumprod(data, axis=-1)

    def _backward(g):
        grad = np.zeros_like(data)
        for k in range(data.shape[-1]):
            without = data.copy()
            without[..., k] = 1.0
            partial = np.cumprod(without, axis=-1)
            grad[..., k] = np.sum((g * partial)[..., k:], axis=-1)
        x._accumulate(grad)
    out = Tensor(res, (x,), 'cumprod')
    out._backward = _backward
    return out


def dropout(
        x: Tensor,
        rate: float,
        rng: typing.Optional[np.random.Generator] = None,
        training: bool = False) -> Tensor:
    """
    Inverted dropout: active only in training, scales kept units by `1 / (1 - rate)`.
    """
    if not training or rate == 0:
        return x
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * keep


def backward(
        loss: Tensor,
        parameters: typing.Sequence[Parameter]) -> typing.List[np.ndarray]:
    """
    Run the backward pass and return one gradient per parameter, zeros for unused parameters.
    """
    for p in parameters:
        p.grad = None
    loss.backward()
    return [np.zeros_like(p.data) if p.grad is None else p.grad for p in parameters]
