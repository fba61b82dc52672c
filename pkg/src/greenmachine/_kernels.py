"""Compiled inner loops."""
import math

import numba
import numpy as np


@numba.njit(cache=True, nogil=True)
def dead_time_keep(frame, channel, time, dead):
    """Keep-mask for records sorted by (frame, channel, time).

    A record is dropped when it follows the last kept record of the same
    channel within the same frame by less than ``dead``.
    """
    n = frame.shape[0]
    keep = np.ones(n, dtype=np.bool_)
    last = 0
    for i in range(n):
        if i > 0 and frame[i] == frame[i - 1] and channel[i] == channel[i - 1]:
            if time[i] - last < dead:
                keep[i] = False
                continue
        last = time[i]
    return keep


@numba.njit(cache=True, nogil=True)
def dolinar_trials(signs, cos_start, cos_step, sin_start, sin_step,
                   hazard_const, hazard_cross, inc_noclick, inc_click, seed):
    """Discretized Dolinar receiver over a batch of symbols.

    Sub-slot m has displacement chosen from the closed-form trajectory, so the
    receiver-side quantities are tabulated per sub-slot:

    hazard_const[m] + hazard_cross[m] * (x * s * cos(phi)) is the mean photon
    number reaching the detector when the true sign is x, the current guess is
    s and the signal has rotated by phi.  inc_noclick / inc_click are the
    log-likelihood-ratio increments (toward the current guess) of the receiver's
    phase-locked model.  Clicks are sampled with an exponential clock.
    Returns the decided signs.
    """
    np.random.seed(seed)
    n = signs.shape[0]
    m_slots = hazard_const.shape[0]
    out = np.empty(n, dtype=np.int8)
    for i in range(n):
        x = signs[i]
        c = cos_start[i]
        sn = sin_start[i]
        cs = cos_step[i]
        ss = sin_step[i]
        s = 1.0
        llr = 0.0
        clock = -math.log(1.0 - np.random.random())
        acc = 0.0
        for m in range(m_slots):
            acc += hazard_const[m] - hazard_cross[m] * x * s * c
            if acc >= clock:
                llr += s * inc_click[m]
                s = -s
                clock = -math.log(1.0 - np.random.random())
                acc = 0.0
            else:
                llr += s * inc_noclick[m]
            # rotate the drift phase by one sub-slot
            c, sn = c * cs - sn * ss, sn * cs + c * ss
        out[i] = 1 if llr >= 0.0 else -1
    return out
