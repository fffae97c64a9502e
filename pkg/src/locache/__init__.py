"""Location-aware coded caching for multi-antenna wireless XR delivery."""

from .pda import Lapda, MlpdaMatrix, construct_lapda, construct_mlpda, validate_lapda, validate_mlpda
from .placement import allocate_memory, arrange_cache, build_placement
from .scheduler import schedule, verify_decodability
from .beamforming import solve_wmm

__all__ = [
    "Lapda",
    "MlpdaMatrix",
    "construct_lapda",
    "construct_mlpda",
    "validate_lapda",
    "validate_mlpda",
    "allocate_memory",
    "arrange_cache",
    "build_placement",
    "schedule",
    "verify_decodability",
    "solve_wmm",
]
