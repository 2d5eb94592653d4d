"""LSM-tree key-value testbed with range filters and a prefix-siphoning attack."""
from .kernels import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
