"""nymkit: a desk-scale simulator of an isolation-first pseudonym manager.

Each pseudonym ("nym") is a pair of simulated VMs built from one shared
read-only base image via copy-on-write overlay layers, reachable only
through its own anonymizer instance, storable as an encrypted archive, and
erased without trace on termination. See README.md for the tour.
"""

from .config import EngineConfig, LatencyModel, NymBoxSpec, load_config
from .nymcore import (
    NymEngine,
    NymMode,
    NymState,
    StoreAction,
    StoredReceipt,
)

__version__ = "0.1.0"

__all__ = [
    "EngineConfig",
    "LatencyModel",
    "NymBoxSpec",
    "NymEngine",
    "NymMode",
    "NymState",
    "StoreAction",
    "StoredReceipt",
    "load_config",
    "__version__",
]
