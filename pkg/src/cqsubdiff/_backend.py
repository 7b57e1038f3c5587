"""Select the compiled kernels when available, else the NumPy fallback.

Set ``CQSUBDIFF_PURE=1`` to force the fallback.
"""
import os

if os.environ.get("CQSUBDIFF_PURE", "") not in ("", "0"):
    from . import _pykernels as kernels
    BACKEND = "python"
else:
    try:
        from . import _ckernels as kernels
        BACKEND = "cython"
    except ImportError:
        from . import _pykernels as kernels
        BACKEND = "python"

thomas = kernels.thomas
conv_history = kernels.conv_history
soe_advance = kernels.soe_advance
solve_cq_system = kernels.solve_cq_system
gauss_interp = kernels.gauss_interp
reduce_elements = kernels.reduce_elements
direct_step = kernels.direct_step
velocity_soe_step = kernels.velocity_soe_step

KERNEL_NAMES = ("thomas", "conv_history", "soe_advance", "solve_cq_system", "gauss_interp",
                "reduce_elements", "direct_step", "velocity_soe_step")

__all__ = ["BACKEND", "kernels", "KERNEL_NAMES", *KERNEL_NAMES]
