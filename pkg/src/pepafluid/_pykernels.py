"""Pure-Python twin of the compiled kernels (same signatures and results).

All functions take the flat rate tables of ``numeric.RateTables`` unpacked as
positional arrays so the compiled and Python versions are interchangeable.
"""

import math

import numpy as np

OK, NEGATIVE, NONFINITE = 0, 1, 2
DONE, ABSORBED, NEED_UNIFORMS, BUFFER_FULL = 0, 1, 2, 3
CLIP_TOL = 1e-9


class _Tab:
    __slots__ = ("d", "ptr", "idx", "rate", "pas", "factor", "C", "starts",
                 "has_pas", "mt_ptr", "mt_idx", "mt_rate", "chg_ptr", "chg_idx", "chg_val")

    def __init__(self, d, arg_ptr, arg_idx, arg_rate, arg_pas, factor,
                 chg_ptr, chg_idx, chg_val, mt_ptr=None, mt_idx=None, mt_rate=None):
        self.d = d
        self.ptr, self.idx, self.rate = arg_ptr, arg_idx, arg_rate
        self.pas = arg_pas.astype(bool)
        self.has_pas = bool(self.pas.any())
        self.factor = factor
        self.starts = arg_ptr[:-1]
        n = len(factor)
        C = np.zeros((d, n))
        for j in range(n):
            for k in range(chg_ptr[j], chg_ptr[j + 1]):
                C[chg_idx[k], j] = chg_val[k]
        self.C = C
        self.chg_ptr, self.chg_idx, self.chg_val = chg_ptr, chg_idx, chg_val
        self.mt_ptr, self.mt_idx, self.mt_rate = mt_ptr, mt_idx, mt_rate

    def rates(self, x):
        if len(self.factor) == 0:
            return np.zeros(0)
        xv = x[self.idx]
        vals = np.where(self.pas, np.inf, xv * self.rate)
        f = self.factor * np.minimum.reduceat(vals, self.starts)
        if self.has_pas:
            dead = np.logical_or.reduceat(self.pas & (xv <= 0), self.starts)
            f = np.where(dead, 0.0, f)
        return f

    def region(self, x):
        if self.mt_ptr is None:
            return 0
        rid = 0
        for m in range(len(self.mt_ptr) - 1):
            lo, hi = self.mt_ptr[m], self.mt_ptr[m + 1]
            best, arg = math.inf, 0
            for k in range(lo, hi):
                v = x[self.mt_idx[k]] * self.mt_rate[k]
                if v < best:
                    best, arg = v, k - lo
            rid = rid * (hi - lo) + arg
        return rid


def label_rates(x, d, arg_ptr, arg_idx, arg_rate, arg_pas, factor,
                chg_ptr, chg_idx, chg_val):
    """Per-label transition rates at ``x``."""
    tab = _Tab(d, arg_ptr, arg_idx, arg_rate, arg_pas, factor, chg_ptr, chg_idx, chg_val)
    return tab.rates(np.asarray(x, dtype=float))


def rhs(x, d, arg_ptr, arg_idx, arg_rate, arg_pas, factor, chg_ptr, chg_idx, chg_val):
    """Vector field ``F(x) = sum_l l f(x, l)``."""
    tab = _Tab(d, arg_ptr, arg_idx, arg_rate, arg_pas, factor, chg_ptr, chg_idx, chg_val)
    return tab.C @ tab.rates(np.asarray(x, dtype=float))


def region_ids(states, d, mt_ptr, mt_idx, mt_rate):
    """Region id of every row of ``states``."""
    tab = _Tab(d, np.zeros(1, np.int64), np.zeros(0, np.int64), np.zeros(0), np.zeros(0, np.uint8),
               np.zeros(0), np.zeros(1, np.int64), np.zeros(0, np.int64), np.zeros(0),
               mt_ptr, mt_idx, mt_rate)
    return np.array([tab.region(s) for s in np.atleast_2d(states)], dtype=np.int64)


def rk4(x0, h, nsteps, stride, d, arg_ptr, arg_idx, arg_rate, arg_pas, factor,
        chg_ptr, chg_idx, chg_val, mt_ptr, mt_idx, mt_rate, max_switches):
    """Fixed-step classical RK4.

    Returns
    -------
    tuple
        ``(rec_steps, rec_states, rec_regions, switch_steps, n_switches,
        last_switch, n_clipped, min_preclip, status, fail_step)``.  Only the
        first ``max_switches`` switch steps are stored.  Samples are taken at
        step 0, every ``stride`` steps and at the final step.
    """
    tab = _Tab(d, arg_ptr, arg_idx, arg_rate, arg_pas, factor, chg_ptr, chg_idx, chg_val,
               mt_ptr, mt_idx, mt_rate)
    C = tab.C
    x = np.array(x0, dtype=float)
    n_rec = nsteps // stride + 1 + (1 if nsteps % stride else 0)
    rec_steps = np.zeros(n_rec, dtype=np.int64)
    rec_states = np.zeros((n_rec, d))
    rec_regions = np.zeros(n_rec, dtype=np.int64)
    switches = np.zeros(max(max_switches, 1), dtype=np.int64)
    reg = tab.region(x)
    rec_states[0] = x
    rec_regions[0] = reg
    r = 1
    n_sw = n_clip = 0
    last_sw = -1
    min_pre = 0.0
    half = 0.5 * h
    sixth = h / 6.0
    for step in range(1, nsteps + 1):
        k1 = C @ tab.rates(x)
        k2 = C @ tab.rates(x + half * k1)
        k3 = C @ tab.rates(x + half * k2)
        k4 = C @ tab.rates(x + h * k3)
        x = x + sixth * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(x)):
            return (rec_steps[:r], rec_states[:r], rec_regions[:r], switches[:min(n_sw, max_switches)],
                    n_sw, last_sw, n_clip, min_pre, NONFINITE, step)
        neg = x < 0
        if neg.any():
            lo = float(x.min())
            min_pre = min(min_pre, lo)
            if lo < -CLIP_TOL:
                return (rec_steps[:r], rec_states[:r], rec_regions[:r],
                        switches[:min(n_sw, max_switches)], n_sw, last_sw, n_clip, min_pre, NEGATIVE, step)
            n_clip += int(neg.sum())
            x[neg] = 0.0
        nreg = tab.region(x)
        if nreg != reg:
            if n_sw < max_switches:
                switches[n_sw] = step
            n_sw += 1
            last_sw = step
            reg = nreg
        if step % stride == 0 or step == nsteps:
            rec_steps[r] = step
            rec_states[r] = x
            rec_regions[r] = reg
            r += 1
    return (rec_steps[:r], rec_states[:r], rec_regions[:r], switches[:min(n_sw, max_switches)],
            n_sw, last_sw, n_clip, min_pre, OK, -1)


def ssa(x, t, t_end, uniforms, u_pos, out_times, out_labels, d, arg_ptr, arg_idx,
        arg_rate, arg_pas, factor, chg_ptr, chg_idx, chg_val):
    """Gillespie direct method, resumable.

    ``x`` (int64) is updated in place.  Two uniforms are consumed per
    iteration: one for the holding time, one for the label choice.

    Returns
    -------
    tuple
        ``(n_events, u_pos, t, status)``.
    """
    n_lab = len(factor)
    ptr, idx, rate, pas = arg_ptr, arg_idx, arg_rate, arg_pas
    cap = len(out_times)
    n_u = len(uniforms)
    n_ev = 0
    f = [0.0] * n_lab
    while True:
        total = 0.0
        for j in range(n_lab):
            best = math.inf
            v = 0.0
            for k in range(ptr[j], ptr[j + 1]):
                xv = float(x[idx[k]])
                if pas[k]:
                    if xv <= 0.0:
                        best = 0.0
                        break
                else:
                    v = xv * rate[k]
                    if v < best:
                        best = v
            fj = factor[j] * best
            f[j] = fj
            total += fj
        if total <= 0.0:
            return n_ev, u_pos, t, ABSORBED
        if u_pos + 2 > n_u:
            return n_ev, u_pos, t, NEED_UNIFORMS
        if n_ev >= cap:
            return n_ev, u_pos, t, BUFFER_FULL
        u1 = uniforms[u_pos]
        u2 = uniforms[u_pos + 1]
        u_pos += 2
        tau = -math.log1p(-u1) / total
        if t + tau > t_end:
            return n_ev, u_pos, t_end, DONE
        t += tau
        target = u2 * total
        cum = 0.0
        sel = -1
        for j in range(n_lab):
            if f[j] > 0.0:
                cum += f[j]
                sel = j
                if target < cum:
                    break
        for k in range(chg_ptr[sel], chg_ptr[sel + 1]):
            x[chg_idx[k]] += int(chg_val[k])
        out_times[n_ev] = t
        out_labels[n_ev] = sel
        n_ev += 1
