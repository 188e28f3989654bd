from .base import *
from .mesh import *
from .physics import *
from .newton import *
from .filter import *
from .adjoint import *
from .mma import *
from .topopt import *
from .simplified import *
from .calibration import *
from .config import *
from .io import *
