"""Hot-loop kernels: compiled extension when built, numpy fallback otherwise.

Set ``AMRNET_KERNELS=python`` to force the fallback (used by the benchmark
and by the cross-backend tests).
"""

import os

from . import _fallback

fallback = _fallback

if os.environ.get("AMRNET_KERNELS", "").lower() == "python":
    compiled = None
else:
    try:
        from . import _ext as compiled
    except ImportError:  # extension not built
        compiled = None

active = compiled if compiled is not None else _fallback
BACKEND = "cython" if compiled is not None else "python"

embed_conv_forward = active.embed_conv_forward
embed_conv_backward = active.embed_conv_backward
gh_histogram = active.gh_histogram
class_histogram = active.class_histogram
tree_shap_batch = active.tree_shap_batch

__all__ = [
    "BACKEND",
    "compiled",
    "fallback",
    "embed_conv_forward",
    "embed_conv_backward",
    "gh_histogram",
    "class_histogram",
    "tree_shap_batch",
]
