"""
Layer primitives: dense layers and (bidirectional) LSTMs built from `Tensor` operations.
"""
import typing

import attr
import numpy as np

from dcsurv.core import DomainError
from dcsurv.numerics.tensor import Tensor, Parameter, as_tensor, concat, stack

__all__ = [
    'ACTIVATIONS', 'glorot_uniform', 'dense_forward', 'Dense', 'LSTMParameters', 'lstm_forward',
    'LSTM']

ACTIVATIONS = {
    'identity': lambda t: t,
    'relu': Tensor.relu,
    'sigmoid': Tensor.sigmoid,
    'tanh': Tensor.tanh,
}


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, shape=None) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape or (fan_in, fan_out))


def dense_forward(
        inputs: Tensor,
        weights: Tensor,
        bias: Tensor,
        activation: str = 'identity') -> Tensor:
    """
    Affine map `inputs @ weights + bias` followed by an activation.

    :param inputs: Tensor of shape `(batch, in)`.
    :param weights: Tensor of shape `(in, out)`.
    :param bias: Tensor of shape `(out,)`.
    """
    inputs = as_tensor(inputs)
    if inputs.ndim != 2 or inputs.shape[1] != weights.shape[0] \
            or bias.shape != (weights.shape[1],):
        raise DomainError('dense layer shape mismatch: input {}, weights {}, bias {}'.format(
            inputs.shape, weights.shape, bias.shape))
    return ACTIVATIONS[activation](inputs @ weights + bias)


class Dense:
    def __init__(
            self,
            in_features: int,
            out_features: int,
            name: str,
            rng: np.random.Generator,
            activation: str = 'relu'):
        self.weights = Parameter(glorot_uniform(rng, in_features, out_features), name + '.weights')
        self.bias = Parameter(np.zeros(out_features), name + '.bias')
        self.activation = activation

    def __call__(self, inputs: Tensor) -> Tensor:
        return dense_forward(inputs, self.weights, self.bias, activation=self.activation)

    def parameters(self) -> typing.List[Parameter]:
        return [self.weights, self.bias]


@attr.s
class LSTMParameters:
    """
    Parameters of one LSTM direction. Gates are stacked as input, forget, cell, output.

    :ivar input_weights: `(features, 4 * hidden)`
    :ivar hidden_weights: `(hidden, 4 * hidden)`
    :ivar bias: `(4 * hidden,)`
    """
    input_weights = attr.ib()
    hidden_weights = attr.ib()
    bias = attr.ib()

    @property
    def hidden_size(self) -> int:
        return self.hidden_weights.shape[0]

    @classmethod
    def init(cls, rng, features: int, hidden: int, name: str) -> 'LSTMParameters':
        return cls(
            input_weights=Parameter(
                glorot_uniform(rng, features, 4 * hidden), name + '.input_weights'),
            hidden_weights=Parameter(
                glorot_uniform(rng, hidden, 4 * hidden), name + '.hidden_weights'),
            bias=Parameter(np.zeros(4 * hidden), name + '.bias'))

    def parameters(self) -> typing.List[Parameter]:
        return [self.input_weights, self.hidden_weights, self.bias]


def _run_direction(steps: typing.List[Tensor], params: LSTMParameters) -> typing.List[Tensor]:
    size = params.hidden_size
    batch = steps[0].shape[0]
    h = Tensor(np.zeros((batch, size)))
    c = Tensor(np.zeros((batch, size)))
    res = []
    for x in steps:
        gates = x @ params.input_weights + h @ params.hidden_weights + params.bias
        i = gates[:, :size].sigmoid()
        f = gates[:, size:2 * size].sigmoid()
        g = gates[:, 2 * size:3 * size].tanh()
        o = gates[:, 3 * size:].sigmoid()
        c = f * c + i * g
        h = o * c.tanh()
        res.append(h)
    return res


def lstm_forward(
        sequence: Tensor,
        params: LSTMParameters,
        backward_params: typing.Optional[LSTMParameters] = None) -> Tensor:
    """
    Run an LSTM over a sequence.

    :param sequence: Tensor of shape `(batch, L, features)`.
    :param params: Parameters of the forward direction.
    :param backward_params: If given, a second LSTM runs over the reversed sequence and its states \
    are concatenated (per step) to the forward states.
    :return: Tensor of shape `(batch, L, hidden)` or `(batch, L, 2 * hidden)`.
    """
    sequence = as_tensor(sequence)
    if sequence.ndim != 3 or sequence.shape[1] < 1 \
            or sequence.shape[2] != params.input_weights.shape[0]:
        raise DomainError('LSTM input of shape {} does not match {} input features'.format(
            sequence.shape, params.input_weights.shape[0]))
    steps = [sequence[:, l, :] for l in range(sequence.shape[1])]
    states = _run_direction(steps, params)
    if backward_params is not None:
        reverse = list(reversed(_run_direction(list(reversed(steps)), backward_params)))
        states = [concat([fw, bw], axis=1) for fw, bw in zip(states, reverse)]
    return stack(states, axis=1)


class LSTM:
    def __init__(
            self,
            in_features: int,
            hidden: int,
            name: str,
            rng: np.random.Generator,
            bidirectional: bool = False):
        self.forward_params = LSTMParameters.init(rng, in_features, hidden, name + '.forward')
        self.backward_params = LSTMParameters.init(rng, in_features, hidden, name + '.backward') \
            if bidirectional else None
        self.out_features = hidden * (2 if bidirectional else 1)

    def __call__(self, sequence: Tensor) -> Tensor:
        return lstm_forward(sequence, self.forward_params, self.backward_params)

    def parameters(self) -> typing.List[Parameter]:
        res = self.forward_params.parameters()
        if self.backward_params:
            res.extend(self.backward_params.parameters())
        return res
