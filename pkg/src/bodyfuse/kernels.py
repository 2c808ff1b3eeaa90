"""Backend selection for the hot kernels.

The compiled extension is used when importable; set ``BODYFUSE_PURE_PYTHON=1``
to force the numpy fallback.
"""

import os

from . import _kernels_py

try:
    from . import _kernels as _kernels_c
except ImportError:  # extension not built
    _kernels_c = None

BACKENDS = {"python": _kernels_py}
if _kernels_c is not None:
    BACKENDS["compiled"] = _kernels_c

if _kernels_c is not None and os.environ.get("BODYFUSE_PURE_PYTHON", "") in ("", "0"):
    DEFAULT = "compiled"
else:
    DEFAULT = "python"


def get_backend(name=None):
    name = name or DEFAULT
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"unknown or unavailable kernel backend {name!r}; have {sorted(BACKENDS)}") from None


def skin_jacobian(*args, **kwargs):
    return get_backend().skin_jacobian(*args, **kwargs)


def cov_blocks(J, var):
    return get_backend().cov_blocks(J, var)
