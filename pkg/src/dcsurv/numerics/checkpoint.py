"""
Named-parameter checkpoints as JSON documents.

Layout::

    {
      "format": "dcsurv-checkpoint",
      "version": 1,
      "parameters": [
        {"name": "encoder.0.weights", "shape": [3, 8], "values": [0.1, ...]},
        ...
      ]
    }

`values` lists the flattened parameter in C order. Floats are written with Python's shortest
round-trip representation, so reading a checkpoint restores every value bit-exactly.
"""
import typing
import pathlib
import collections

import numpy as np
from clldutils import jsonlib

__all__ = ['FORMAT', 'VERSION', 'save_checkpoint', 'load_checkpoint']

FORMAT = 'dcsurv-checkpoint'
VERSION = 1


def save_checkpoint(
        parameters: typing.Mapping[str, np.ndarray],
        path: typing.Union[str, pathlib.Path]) -> pathlib.Path:
    """
    :raises ValueError: if a parameter contains NaN or infinite values.
    """
    items = []
    for name, value in parameters.items():
        value = np.asarray(value, dtype=np.float64)
        if not np.all(np.isfinite(value)):
            raise ValueError('parameter {} contains non-finite values'.format(name))
        items.append(collections.OrderedDict([
            ('name', name),
            ('shape', list(value.shape)),
            ('values', [float(v) for v in value.ravel()]),
        ]))
    path = pathlib.Path(path)
    jsonlib.dump(
        collections.OrderedDict([('format', FORMAT), ('version', VERSION), ('parameters', items)]),
        path,
        indent=1)
    return path


def load_checkpoint(
        path: typing.Union[str, pathlib.Path]) -> typing.Dict[str, np.ndarray]:
    doc = jsonlib.load(path)
    if doc.get('format') != FORMAT:
        raise ValueError('{} is not a dcsurv checkpoint'.format(path))
    if doc.get('version') != VERSION:
        raise ValueError('unsupported checkpoint version {}'.format(doc.get('version')))
    return collections.OrderedDict(
        (p['name'], np.array(p['values'], dtype=np.float64).reshape(p['shape']))
        for p in doc['parameters'])
