import typing

import attr
import numpy as np

from dcsurv.numerics.tensor import Parameter

__all__ = ['AdamState', 'adam_step', 'Adam']


@attr.s
class AdamState:
    step = attr.ib(default=0)
    first_moments = attr.ib(default=attr.Factory(list))
    second_moments = attr.ib(default=attr.Factory(list))

    @classmethod
    def zeros(cls, params: typing.Sequence[np.ndarray]) -> 'AdamState':
        return cls(
            first_moments=[np.zeros_like(p) for p in params],
            second_moments=[np.zeros_like(p) for p in params])


def adam_step(
        params: typing.Sequence[np.ndarray],
        grads: typing.Sequence[np.ndarray],
        state: AdamState,
        lr: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8) -> typing.Tuple[typing.List[np.ndarray], AdamState]:
    """
    One Adam update with bias correction.

    :raises FloatingPointError: if a gradient contains NaN or infinite values.
    :return: Updated parameter arrays and the new optimizer state.
    """
    for i, g in enumerate(grads):
        if not np.all(np.isfinite(g)):
            raise FloatingPointError('non-finite gradient for parameter #{}'.format(i))
    step = state.step + 1
    first, second, updated = [], [], []
    for p, g, m, v in zip(params, grads, state.first_moments, state.second_moments):
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g ** 2
        m_hat = m / (1 - beta1 ** step)
        v_hat = v / (1 - beta2 ** step)
        updated.append(p - lr * m_hat / (np.sqrt(v_hat) + eps))
        first.append(m)
        second.append(v)
    return updated, AdamState(step=step, first_moments=first, second_moments=second)


class Adam:
    """
    Adam optimizer bound to a list of parameters, updating them in place.
    """
    def __init__(self, parameters: typing.Sequence[Parameter], lr=1e-3, beta1=0.9, beta2=0.999,
                 eps=1e-8):
        self.parameters = list(parameters)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.state = AdamState.zeros([p.data for p in self.parameters])

    def step(self, grads: typing.Sequence[np.ndarray]):
        updated, self.state = adam_step(
            [p.data for p in self.parameters], grads, self.state,
            lr=self.lr, beta1=self.beta1, beta2=self.beta2, eps=self.eps)
        for p, data in zip(self.parameters, updated):
            p.data = data
