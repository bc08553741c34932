"""Compiled path kernels for the two-sided reflection.

Both kernels consume pre-drawn randomness (jump epochs/sizes, per-step
normals and Poisson counts) so that a replica's output depends only on its
input arrays; parallel scheduling cannot change results.

Event kernel (sigma == 0): between Poisson epochs and piece boundaries the
free path and the barrier are both affine, so contact, detachment and
top-hit times are solved in closed form and all occupation integrals are
exact.

Grid kernel (sigma >= 0): per step, apply the free increment then clamp to
[A_{t+h}, K]; first-order accurate.
"""
import math

import numpy as np
from numba import njit

# accumulator slots
FEED_CONT = 0      # continuous lower-regulator increase over the window
FEED_JUMP = 1      # jump part of the lower regulator
LOSS_CONT = 2      # continuous upper-regulator increase (creep loss)
LOSS_JUMP = 3      # jump part of the upper regulator (overshoot loss)
FEED_SQ = 4        # sum of squared lower-regulator jumps
LOSS_SQ = 5        # sum of squared upper-regulator jumps
FEED_A_INT = 6     # Stieltjes integral of A against dL^A over the window
LOSS_EVENTS = 7    # count of upper-barrier jump-loss events
V_END = 8
PHASE_END = 9
EFF_TIME = 10      # accumulated window time
V_AT_BURN = 11
A_AT_BURN = 12
FEED_FULL = 13     # lower regulator over the whole path (balance check)
LOSS_FULL = 14
MIN_GAP = 15       # min of V - A seen
MAX_OVER = 16      # max of V - K seen
X_TOTAL = 17       # total free increment over the whole path
V_START = 18
NACC = 19

# martingale term slots
M_OCC = 0          # int exp(alpha V_s) ds
M_E_V0 = 1         # exp(alpha V) at window start
M_E_VT = 2         # exp(alpha V) at window end
M_FEED_EXP = 3     # int exp(alpha A_s) dL^{A,c}
M_FEED_JUMP = 4    # sum exp(alpha A_s) (1 - exp(-alpha dL^A))
M_LOSS_CONT = 5    # L^{K,c} over the window
M_LOSS_JUMP = 6    # sum (1 - exp(alpha dL^K))
M_WINDOW = 7
NMART = 8

_FREE, _ONBAR, _ATTOP = 0, 1, 2


@njit(cache=True, nogil=True)
def _expseg(x0, c, h, alpha):
    """int_0^h exp(alpha*(x0 + c*u)) du."""
    if h <= 0.0:
        return 0.0
    ac = alpha * c
    if abs(ac * h) < 1e-12:
        return math.exp(alpha * (x0 + 0.5 * c * h)) * h
    return math.exp(alpha * x0) * math.expm1(ac * h) / ac


@njit(cache=True, nogil=True)
def _book_time(hist, vhist, v0, cv, a0, ca, h, on_barrier, nv, na, kcap, amp):
    """Book h time units of the affine segment into the joint (V, A) cells.

    The V axis has nv uniform bins over [0, K] plus a dedicated contact row
    (index nv) used while V rides the barrier; the A axis has na uniform
    bins over [0, amp].  Exact: the segment is split at every bin-edge
    crossing and each slice is booked at its midpoint.  Crossing times are
    generated as arithmetic progressions over grid indices, which keeps
    them strictly increasing even when a value starts on a gridline.
    """
    if h <= 0.0:
        return
    wv = kcap / nv
    wa = amp / na if (na > 1 and amp > 0.0) else 0.0
    if (not on_barrier) and cv > 0.0:
        mv = math.floor(v0 / wv) + 1.0
        sv = 1.0
        uv = (mv * wv - v0) / cv
    elif (not on_barrier) and cv < 0.0:
        mv = math.ceil(v0 / wv) - 1.0
        sv = -1.0
        uv = (mv * wv - v0) / cv
    else:
        mv, sv, uv = 0.0, 0.0, math.inf
    if wa > 0.0 and ca > 0.0:
        ma = math.floor(a0 / wa) + 1.0
        sa = 1.0
        ua = (ma * wa - a0) / ca
    elif wa > 0.0 and ca < 0.0:
        ma = math.ceil(a0 / wa) - 1.0
        sa = -1.0
        ua = (ma * wa - a0) / ca
    else:
        ma, sa, ua = 0.0, 0.0, math.inf
    u = 0.0
    while True:
        un = uv if uv < ua else ua
        if un > h:
            un = h
        if un > u:
            um = 0.5 * (u + un)
            if on_barrier:
                iv = nv
            else:
                iv = int((v0 + cv * um) / wv)
                if iv < 0:
                    iv = 0
                elif iv > nv - 1:
                    iv = nv - 1
            ia = 0
            if wa > 0.0:
                ia = int((a0 + ca * um) / wa)
                if ia < 0:
                    ia = 0
                elif ia > na - 1:
                    ia = na - 1
            hist[iv, ia] += un - u
            vhist[iv] += un - u
            u = un
        if un >= h:
            return
        if uv <= un:
            mv += sv
            uv = (mv * wv - v0) / cv
        if ua <= un:
            ma += sa
            ua = (ma * wa - a0) / ca


@njit(cache=True, nogil=True)
def event_kernel(drift, kcap,
                 jump_t, jump_x,
                 p_start, p_width, p_level, p_slope, period, amp,
                 u0, v0, total_t, burn_t, batch_len,
                 nv, na, alpha, mutate,
                 acc, hist, vhist, feed_batch, loss_batch, mart):
    """Exact event-driven reflected path for sigma == 0 models."""
    n_jumps = jump_t.shape[0]
    n_batch = feed_batch.shape[0]
    n_pieces = p_start.shape[0]
    have_alpha = not math.isnan(alpha)

    t = 0.0
    phase = u0
    k = 0
    for i in range(n_pieces):
        if phase < p_start[i] + p_width[i]:
            k = i
            break
        k = i
    a = p_level[k] + p_slope[k] * (phase - p_start[k])
    v = v0
    state = _FREE
    if v <= a:
        v = a
        state = _ONBAR
    elif v >= kcap:
        v = kcap
        state = _ATTOP
    acc[V_START] = v
    jptr = 0
    jsum = 0.0
    burn_done = burn_t <= 0.0
    if burn_done:
        acc[V_AT_BURN] = v
        acc[A_AT_BURN] = a
        if have_alpha:
            mart[M_E_V0] = math.exp(alpha * v)
    min_gap = v - a
    max_over = v - kcap

    # generous budget: every admissible event advances a bounded counter
    max_iter = 64 + 8 * (n_jumps + n_batch
                         + int(total_t / period + 1.0) * (n_pieces + 2))
    iters = 0
    while True:
        iters += 1
        if iters > max_iter:
            acc[V_END] = v
            acc[PHASE_END] = phase
            acc[EFF_TIME] = t
            return 2
        b = p_slope[k]
        if state == _ONBAR and b <= drift:
            state = _FREE
        if state == _ATTOP and drift <= 0.0:
            state = _FREE
        if state == _ONBAR:
            cv = b
        elif state == _ATTOP:
            cv = 0.0
        else:
            cv = drift

        # next event: 0 piece end, 1 jump, 2 contact, 3 top, 4 burn edge, 5 batch edge, 6 horizon
        h = p_start[k] + p_width[k] - phase
        ev = 0
        if jptr < n_jumps:
            hj = jump_t[jptr] - t
            if hj < h:
                h = hj
                ev = 1
        if state == _FREE:
            gap = v - a
            if b > drift:
                hc = gap / (b - drift) if gap > 0.0 else 0.0
                if hc < h:
                    h = hc
                    ev = 2
            if drift > 0.0 and v < kcap:
                ht = (kcap - v) / drift
                if ht < h:
                    h = ht
                    ev = 3
        if not burn_done:
            hb = burn_t - t
            if hb < h:
                h = hb
                ev = 4
        elif batch_len > 0.0:
            nb = math.floor((t - burn_t) / batch_len) + 1.0
            hb = burn_t + nb * batch_len - t
            if 0.0 < hb < h:
                h = hb
                ev = 5
        if total_t - t <= h:
            h = total_t - t
            ev = 6
        if h < 0.0:
            h = 0.0

        if h > 0.0:
            if burn_done:
                acc[EFF_TIME] += h
                _book_time(hist, vhist, v, cv, a, b, h, state == _ONBAR, nv, na, kcap, amp)
                bidx = 0
                if batch_len > 0.0:
                    bidx = int((t + 0.5 * h - burn_t) / batch_len)
                    if bidx < 0:
                        bidx = 0
                    elif bidx > n_batch - 1:
                        bidx = n_batch - 1
                if state == _ONBAR:
                    r = b - drift
                    if mutate == 0:
                        acc[FEED_CONT] += r * h
                        acc[FEED_A_INT] += r * (a * h + 0.5 * b * h * h)
                        if n_batch > 0:
                            feed_batch[bidx] += r * h
                        if have_alpha:
                            mart[M_FEED_EXP] += r * _expseg(a, b, h, alpha)
                    else:
                        # corrupted build: the two clamps book into the wrong regulators
                        acc[LOSS_CONT] += r * h
                        if n_batch > 0:
                            loss_batch[bidx] += r * h
                        if have_alpha:
                            mart[M_LOSS_CONT] += r * h
                elif state == _ATTOP:
                    if mutate == 0:
                        acc[LOSS_CONT] += drift * h
                        if n_batch > 0:
                            loss_batch[bidx] += drift * h
                        if have_alpha:
                            mart[M_LOSS_CONT] += drift * h
                    else:
                        acc[FEED_CONT] += drift * h
                        if n_batch > 0:
                            feed_batch[bidx] += drift * h
                        if have_alpha:
                            mart[M_FEED_EXP] += math.exp(alpha * a) * drift * h
                if have_alpha:
                    mart[M_OCC] += _expseg(v, cv, h, alpha)
            if state == _ONBAR:
                acc[FEED_FULL] += (b - drift) * h
            elif state == _ATTOP:
                acc[LOSS_FULL] += drift * h
            t += h
            phase += h
            a += b * h
            if state == _ONBAR:
                # resync against the exact piece formula to stop float drift
                a = p_level[k] + p_slope[k] * (phase - p_start[k])
                v = a
            elif state == _ATTOP:
                v = kcap
            else:
                v += cv * h

        if v - a < min_gap:
            min_gap = v - a
        if v - kcap > max_over:
            max_over = v - kcap

        if ev == 6:
            break
        elif ev == 0:
            k += 1
            if k == n_pieces:
                k = 0
                phase = 0.0
            else:
                phase = p_start[k]
            a = p_level[k]
            if a > v:
                # upward barrier discontinuity pushes V onto the new level
                dla = a - v
                acc[FEED_FULL] += dla
                if burn_done:
                    acc[FEED_JUMP] += dla
                    acc[FEED_SQ] += dla * dla
                    acc[FEED_A_INT] += a * dla
                    if n_batch > 0 and batch_len > 0.0:
                        bidx = int((t - burn_t) / batch_len)
                        if bidx > n_batch - 1:
                            bidx = n_batch - 1
                        feed_batch[bidx] += dla
                    if have_alpha:
                        mart[M_FEED_JUMP] += -math.exp(alpha * a) * math.expm1(-alpha * dla)
                v = a
                state = _ONBAR
            elif state == _ONBAR and a < v:
                state = _FREE
        elif ev == 1:
            y = jump_x[jptr]
            jptr += 1
            jsum += y
            vp = v + y
            state = _FREE
            if vp > kcap:
                over = vp - kcap
                if mutate == 0:
                    acc[LOSS_FULL] += over
                else:
                    acc[FEED_FULL] += over
                if burn_done:
                    if n_batch > 0 and batch_len > 0.0:
                        bidx = int((t - burn_t) / batch_len)
                        if bidx > n_batch - 1:
                            bidx = n_batch - 1
                    else:
                        bidx = 0
                    if mutate == 0:
                        acc[LOSS_JUMP] += over
                        acc[LOSS_SQ] += over * over
                        acc[LOSS_EVENTS] += 1.0
                        if n_batch > 0:
                            loss_batch[bidx] += over
                        if have_alpha:
                            mart[M_LOSS_JUMP] += 1.0 - math.exp(alpha * over)
                    else:
                        acc[FEED_JUMP] += over
                        acc[FEED_SQ] += over * over
                        acc[FEED_A_INT] += a * over
                        if n_batch > 0:
                            feed_batch[bidx] += over
                        if have_alpha:
                            mart[M_FEED_JUMP] += -math.exp(alpha * a) * math.expm1(-alpha * over)
                v = kcap
                state = _ATTOP
            elif vp < a:
                short = a - vp
                if mutate == 0:
                    acc[FEED_FULL] += short
                else:
                    acc[LOSS_FULL] += short
                if burn_done:
                    if n_batch > 0 and batch_len > 0.0:
                        bidx = int((t - burn_t) / batch_len)
                        if bidx > n_batch - 1:
                            bidx = n_batch - 1
                    else:
                        bidx = 0
                    if mutate == 0:
                        acc[FEED_JUMP] += short
                        acc[FEED_SQ] += short * short
                        acc[FEED_A_INT] += a * short
                        if n_batch > 0:
                            feed_batch[bidx] += short
                        if have_alpha:
                            mart[M_FEED_JUMP] += -math.exp(alpha * a) * math.expm1(-alpha * short)
                    else:
                        acc[LOSS_JUMP] += short
                        acc[LOSS_SQ] += short * short
                        acc[LOSS_EVENTS] += 1.0
                        if n_batch > 0:
                            loss_batch[bidx] += short
                        if have_alpha:
                            mart[M_LOSS_JUMP] += 1.0 - math.exp(alpha * short)
                v = a
                state = _ONBAR
            else:
                v = vp
            if not math.isfinite(v):
                return 1
        elif ev == 2:
            v = a
            state = _ONBAR
        elif ev == 3:
            v = kcap
            state = _ATTOP
        elif ev == 4:
            burn_done = True
            acc[V_AT_BURN] = v
            acc[A_AT_BURN] = a
            if have_alpha:
                mart[M_E_V0] = math.exp(alpha * v)

    acc[V_END] = v
    acc[PHASE_END] = phase
    acc[MIN_GAP] = min_gap
    acc[MAX_OVER] = max_over
    acc[X_TOTAL] = drift * total_t + jsum
    if have_alpha:
        mart[M_E_VT] = math.exp(alpha * v)
        mart[M_WINDOW] = total_t - burn_t
    return 0


@njit(cache=True, nogil=True)
def grid_chunk(state, drift, sigma, kcap, h, sqh,
               normals, jcounts, jsizes,
               p_start, p_width, p_level, p_slope, period, amp,
               burn_t, total_t, batch_len,
               nv, na, alpha, mutate,
               acc, hist, vhist, feed_batch, loss_batch, mart):
    """Advance the grid scheme by one chunk of pre-drawn steps.

    state = [t, v, phase, piece index, burn_done flag, last exp(alpha v)].
    jsizes holds exactly jcounts.sum() entries for this chunk.
    """
    t = state[0]
    v = state[1]
    phase = state[2]
    k = int(state[3])
    burn_done = state[4] > 0.5
    last_expv = state[5]
    jp = 0
    n_steps = normals.shape[0]
    n_batch = feed_batch.shape[0]
    n_pieces = p_start.shape[0]
    have_alpha = not math.isnan(alpha)
    wv = kcap / nv
    wa = amp / na if (na > 1 and amp > 0.0) else 0.0

    for i in range(n_steps):
        if t >= total_t:
            break
        phase += h
        while phase >= p_start[k] + p_width[k]:
            k += 1
            if k == n_pieces:
                k = 0
                phase -= period
        a1 = p_level[k] + p_slope[k] * (phase - p_start[k])
        nj = jcounts[i]
        js = 0.0
        for _ in range(nj):
            js += jsizes[jp]
            jp += 1
        dx = drift * h + sigma * sqh * normals[i] + js
        acc[X_TOTAL] += dx
        vp = v + dx
        dla = 0.0
        dlk = 0.0
        contact = False
        if vp < a1:
            dla = a1 - vp
            vp = a1
            contact = True
        elif vp > kcap:
            dlk = vp - kcap
            vp = kcap
        v = vp
        t += h
        if mutate == 1:
            # corrupted build: the two clamps book into the wrong regulators
            dla, dlk = dlk, dla
        acc[FEED_FULL] += dla
        acc[LOSS_FULL] += dlk
        if not burn_done:
            if t >= burn_t:
                burn_done = True
                acc[V_AT_BURN] = v
                acc[A_AT_BURN] = a1
                if have_alpha:
                    last_expv = math.exp(alpha * v)
                    mart[M_E_V0] = last_expv
        else:
            acc[EFF_TIME] += h
            bidx = 0
            if n_batch > 0 and batch_len > 0.0:
                bidx = int((t - 0.5 * h - burn_t) / batch_len)
                if bidx < 0:
                    bidx = 0
                elif bidx > n_batch - 1:
                    bidx = n_batch - 1
            had_jump = nj > 0
            if dla > 0.0:
                if had_jump:
                    acc[FEED_JUMP] += dla
                    acc[FEED_SQ] += dla * dla
                    if have_alpha:
                        mart[M_FEED_JUMP] += -math.exp(alpha * a1) * math.expm1(-alpha * dla)
                else:
                    acc[FEED_CONT] += dla
                    if have_alpha:
                        mart[M_FEED_EXP] += math.exp(alpha * a1) * dla
                acc[FEED_A_INT] += a1 * dla
                if n_batch > 0:
                    feed_batch[bidx] += dla
            if dlk > 0.0:
                if had_jump:
                    acc[LOSS_JUMP] += dlk
                    acc[LOSS_SQ] += dlk * dlk
                    acc[LOSS_EVENTS] += 1.0
                    if have_alpha:
                        mart[M_LOSS_JUMP] += 1.0 - math.exp(alpha * dlk)
                else:
                    acc[LOSS_CONT] += dlk
                    if have_alpha:
                        mart[M_LOSS_CONT] += dlk
                if n_batch > 0:
                    loss_batch[bidx] += dlk
            if contact:
                iv = nv
            else:
                iv = int(v / wv)
                if iv < 0:
                    iv = 0
                elif iv > nv - 1:
                    iv = nv - 1
            ia = 0
            if wa > 0.0:
                ia = int(a1 / wa)
                if ia < 0:
                    ia = 0
                elif ia > na - 1:
                    ia = na - 1
            hist[iv, ia] += h
            vhist[iv] += h
            if have_alpha:
                e = math.exp(alpha * v)
                mart[M_OCC] += 0.5 * (last_expv + e) * h
                last_expv = e
        if v - a1 < acc[MIN_GAP]:
            acc[MIN_GAP] = v - a1
        if v - kcap > acc[MAX_OVER]:
            acc[MAX_OVER] = v - kcap
        if not math.isfinite(v):
            return 1

    state[0] = t
    state[1] = v
    state[2] = phase
    state[3] = float(k)
    state[4] = 1.0 if burn_done else 0.0
    state[5] = last_expv
    return 0
