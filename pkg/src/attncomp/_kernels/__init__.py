"""Backend selection for the hot kernels.

The compiled extension is preferred when present; set ATTNCOMP_PURE_PYTHON=1
to force the numpy fallback.  Both backends expose the same functions:

    pcg_raw32(state, inc, count)      -> (uint32 array, new_state)
    pcg_uniforms(state, inc, count)   -> (float64 array in [0,1), new_state)
    pcg_gaussians(state, inc, count)  -> (float64 array, new_state)
    fnv1a64(data)                     -> int
    attention_forward(x_q, x_c, w_q, w_k)        -> (A, probs)
    attention_backward(x_q, x_c, w_q, w_k, probs, col_grads) -> (dW_q, dW_k)
"""

import os

from . import _pure

if os.environ.get("ATTNCOMP_PURE_PYTHON"):
    _backend = _pure
else:
    try:
        from . import _core as _backend  # type: ignore[no-redef]
    except ImportError:
        _backend = _pure

BACKEND = _backend.NAME

pcg_raw32 = _backend.pcg_raw32
pcg_uniforms = _backend.pcg_uniforms
pcg_gaussians = _backend.pcg_gaussians
fnv1a64 = _backend.fnv1a64
attention_forward = _backend.attention_forward
attention_backward = _backend.attention_backward
