import os

from . import _fallback

_forced = os.environ.get("SYMNET_PURE_PYTHON", "") not in ("", "0")

compiled = None
if not _forced:
    try:
        from . import _kernels as compiled
    except ImportError:
        compiled = None

kernels = compiled if compiled is not None else _fallback
python = _fallback
BACKEND = kernels.BACKEND


def get(name=None):
    """Return a kernel module by name ("compiled"/"python"), default = active."""
    if name is None:
        return kernels
    if name == "python":
        return _fallback
    if name == "compiled":
        if compiled is None:
            raise ImportError("compiled kernels are not built; run `pip install -e .`")
        return compiled
    raise ValueError(f"unknown backend {name!r}")
