from dcsurv.core import *
from dcsurv.grids import *
from dcsurv.losses import *
from dcsurv.data import *
from dcsurv.model import *
from dcsurv.metrics import *
from dcsurv.config import *

__version__ = '0.1.0.dev0'
# flake8: noqa
