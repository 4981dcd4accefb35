"""Pure-numpy versions of the compiled kernels in ``_kernels.pyx``.

Same signatures and semantics; used when the extension is not built or
when ``CPCA_PURE_PYTHON`` is set. ``threads`` is accepted and ignored.
"""

import numpy as np


def segment_bounds(ap_t, slack, t0_out, t1_out, threads=1):
    ap_t = np.asarray(ap_t)
    with np.errstate(divide="ignore", invalid="ignore"):
        alpha = slack[None, :] / np.abs(ap_t)
    lo = np.where(ap_t > 0.0, -alpha, -np.inf)
    hi = np.where(ap_t < 0.0, alpha, np.inf)
    t0_out[:] = lo.max(axis=1, initial=-np.inf)
    t1_out[:] = hi.min(axis=1, initial=np.inf)


def clamped_residuals(s_t, ynorm2, pnorm2, t0, t1, out, threads=1):
    s_t = np.asarray(s_t)
    pn = np.asarray(pnorm2)[:, None]
    # two work buffers, updated in place, to keep the working set small;
    # per-term rounding matches yn - 2 a s + a a pn evaluated left to right
    a = s_t / pn
    np.clip(a, np.asarray(t0)[:, None], np.asarray(t1)[:, None], out=a)
    terms = np.multiply(a, 2.0)
    terms *= s_t
    np.subtract(ynorm2[None, :], terms, out=terms)
    a *= a
    a *= pn
    terms += a
    # np.add.reduce on contiguous rows is pairwise and order-fixed
    out[:] = terms.sum(axis=1)
