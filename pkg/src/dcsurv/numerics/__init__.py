"""
Reverse-mode differentiation, layer primitives, optimizer and checkpoints for the DCS network.
"""
from dcsurv.numerics.tensor import *  # noqa: F401,F403
from dcsurv.numerics.layers import *  # noqa: F401,F403
from dcsurv.numerics.optim import *  # noqa: F401,F403
from dcsurv.numerics.checkpoint import *  # noqa: F401,F403
from dcsurv.numerics.gradcheck import *  # noqa: F401,F403
