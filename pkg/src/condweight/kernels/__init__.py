"""Hot kernels, dispatched to numba or numpy.

Set ``CONDWEIGHT_DISABLE_NUMBA=1`` before import to force the numpy path.
Both implementations stay importable for tests and benchmarks.
"""

from condweight._backend import USE_NUMBA
from condweight.kernels import numpy_impl

NAMES = (
    "pb_pmf",
    "cps_recursion",
    "cps_loo",
    "cps_pairs",
    "decode_fixed",
    "decode_poisson",
    "linear_stat",
    "tally",
)

if USE_NUMBA:
    from condweight.kernels import numba_impl as active
else:
    active = numpy_impl

BACKEND = "numba" if USE_NUMBA else "numpy"

pb_pmf = active.pb_pmf
cps_recursion = active.cps_recursion
cps_loo = active.cps_loo
cps_pairs = active.cps_pairs
decode_fixed = active.decode_fixed
decode_poisson = active.decode_poisson
linear_stat = active.linear_stat
tally = active.tally


def load(name: str):
    """Return the kernel module for ``'numba'`` or ``'numpy'``."""
    if name == "numpy":
        return numpy_impl
    if name == "numba":
        from condweight.kernels import numba_impl

        return numba_impl
    raise ValueError(f"unknown backend {name!r}")
