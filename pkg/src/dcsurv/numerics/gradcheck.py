import typing

import numpy as np

from dcsurv.numerics.tensor import Tensor, Parameter, backward

__all__ = ['relative_error', 'gradcheck']


def relative_error(analytic, numeric, floor: float = 1e-7) -> np.ndarray:
    analytic, numeric = np.asarray(analytic), np.asarray(numeric)
    return np.abs(analytic - numeric) / np.maximum(
        np.maximum(np.abs(analytic), np.abs(numeric)), floor)


def gradcheck(
        f: typing.Callable[[], Tensor],
        parameters: typing.Sequence[Parameter],
        h: float = 1e-5,
        max_checks: typing.Optional[int] = None,
        rng: typing.Optional[np.random.Generator] = None,
        floor: float = 1e-7) -> float:
    """
    Compare reverse-mode gradients to central finite differences.

    :param f: Recomputes the scalar loss from the current parameter values.
    :param max_checks: If given, check only a random sample of this many entries per parameter.
    :param floor: Lower bound of the denominator of the relative error.
    :return: The maximal relative error over all checked entries.
    """
    grads = backward(f(), parameters)
    rng = rng or np.random.default_rng(0)
    worst = 0.0
    for p, grad in zip(parameters, grads):
        indices = list(np.ndindex(*p.shape))
        if max_checks is not None and len(indices) > max_checks:
            indices = [indices[i] for i in rng.choice(len(indices), max_checks, replace=False)]
        for idx in indices:
            orig = p.data[idx]
            p.data[idx] = orig + h
            plus = f().item()
            p.data[idx] = orig - h
            minus = f().item()
            p.data[idx] = orig
            worst = max(worst, float(relative_error(grad[idx], (plus - minus) / (2 * h), floor)))
    return worst
