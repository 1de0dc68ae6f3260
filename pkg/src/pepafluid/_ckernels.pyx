# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: rate evaluation, fixed-step RK4 and Gillespie SSA.

Signatures and results mirror ``_pykernels``; the SSA consumes the same
uniform stream in the same order, so traces are identical across backends.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport log1p, INFINITY, isfinite
from libc.stdlib cimport malloc, free

cnp.import_array()

cdef enum:
    OK = 0
    NEGATIVE = 1
    NONFINITE = 2
cdef enum:
    DONE = 0
    ABSORBED = 1
    NEED_UNIFORMS = 2
    BUFFER_FULL = 3
cdef double CLIP_TOL = 1e-9


cdef inline void _rates(const double* x, Py_ssize_t n_lab, const cnp.int64_t* ptr,
                        const cnp.int64_t* idx, const double* rate,
                        const unsigned char* pas, const double* factor,
                        double* f) noexcept nogil:
    cdef Py_ssize_t j, k
    cdef double best, v
    for j in range(n_lab):
        best = INFINITY
        for k in range(ptr[j], ptr[j + 1]):
            v = x[idx[k]]
            if pas[k]:
                if v <= 0.0:
                    best = 0.0
                    break
            else:
                v = v * rate[k]
                if v < best:
                    best = v
        f[j] = factor[j] * best


cdef inline void _field(const double* x, Py_ssize_t d, Py_ssize_t n_lab,
                        const cnp.int64_t* ptr, const cnp.int64_t* idx, const double* rate,
                        const unsigned char* pas, const double* factor,
                        const cnp.int64_t* cptr, const cnp.int64_t* cidx, const double* cval,
                        double* f, double* out) noexcept nogil:
    cdef Py_ssize_t i, j, k
    _rates(x, n_lab, ptr, idx, rate, pas, factor, f)
    for i in range(d):
        out[i] = 0.0
    for j in range(n_lab):
        for k in range(cptr[j], cptr[j + 1]):
            out[cidx[k]] += cval[k] * f[j]


cdef inline cnp.int64_t _region(const double* x, Py_ssize_t n_mt, const cnp.int64_t* mptr,
                              const cnp.int64_t* midx, const double* mrate) noexcept nogil:
    cdef Py_ssize_t m, k
    cdef cnp.int64_t rid = 0, arg
    cdef double best, v
    for m in range(n_mt):
        best = INFINITY
        arg = 0
        for k in range(mptr[m], mptr[m + 1]):
            v = x[midx[k]] * mrate[k]
            if v < best:
                best = v
                arg = k - mptr[m]
        rid = rid * (mptr[m + 1] - mptr[m]) + arg
    return rid


def label_rates(x, Py_ssize_t d, const cnp.int64_t[::1] arg_ptr, const cnp.int64_t[::1] arg_idx,
                const double[::1] arg_rate, const unsigned char[::1] arg_pas,
                const double[::1] factor, const cnp.int64_t[::1] chg_ptr,
                const cnp.int64_t[::1] chg_idx, const double[::1] chg_val):
    cdef double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t n_lab = factor.shape[0]
    out = np.zeros(n_lab)
    cdef double[::1] o = out
    if n_lab:
        _rates(&xv[0], n_lab, &arg_ptr[0], &arg_idx[0] if arg_idx.shape[0] else NULL,
               &arg_rate[0] if arg_rate.shape[0] else NULL,
               &arg_pas[0] if arg_pas.shape[0] else NULL, &factor[0], &o[0])
    return out


def rhs(x, Py_ssize_t d, const cnp.int64_t[::1] arg_ptr, const cnp.int64_t[::1] arg_idx,
        const double[::1] arg_rate, const unsigned char[::1] arg_pas,
        const double[::1] factor, const cnp.int64_t[::1] chg_ptr,
        const cnp.int64_t[::1] chg_idx, const double[::1] chg_val):
    f = label_rates(x, d, arg_ptr, arg_idx, arg_rate, arg_pas, factor, chg_ptr, chg_idx, chg_val)
    out = np.zeros(d)
    cdef double[::1] o = out
    cdef double[::1] fv = f
    cdef Py_ssize_t j, k
    for j in range(factor.shape[0]):
        for k in range(chg_ptr[j], chg_ptr[j + 1]):
            o[chg_idx[k]] += chg_val[k] * fv[j]
    return out


def region_ids(states, Py_ssize_t d, const cnp.int64_t[::1] mt_ptr, const cnp.int64_t[::1] mt_idx,
               const double[::1] mt_rate):
    cdef double[:, ::1] s = np.ascontiguousarray(np.atleast_2d(states), dtype=np.float64)
    cdef Py_ssize_t n = s.shape[0], r
    cdef Py_ssize_t n_mt = mt_ptr.shape[0] - 1
    out = np.zeros(n, dtype=np.int64)
    cdef cnp.int64_t[::1] o = out
    if n_mt == 0:
        return out
    for r in range(n):
        o[r] = _region(&s[r, 0], n_mt, &mt_ptr[0], &mt_idx[0], &mt_rate[0])
    return out


def rk4(x0, double h, cnp.int64_t nsteps, cnp.int64_t stride, Py_ssize_t d,
        const cnp.int64_t[::1] arg_ptr, const cnp.int64_t[::1] arg_idx,
        const double[::1] arg_rate, const unsigned char[::1] arg_pas,
        const double[::1] factor, const cnp.int64_t[::1] chg_ptr,
        const cnp.int64_t[::1] chg_idx, const double[::1] chg_val,
        const cnp.int64_t[::1] mt_ptr, const cnp.int64_t[::1] mt_idx,
        const double[::1] mt_rate, cnp.int64_t max_switches):
    cdef Py_ssize_t n_lab = factor.shape[0]
    cdef Py_ssize_t n_mt = mt_ptr.shape[0] - 1
    cdef cnp.int64_t n_rec = nsteps // stride + 1 + (1 if nsteps % stride else 0)
    rec_steps = np.zeros(n_rec, dtype=np.int64)
    rec_states = np.zeros((n_rec, d))
    rec_regions = np.zeros(n_rec, dtype=np.int64)
    switches = np.zeros(max(max_switches, 1), dtype=np.int64)
    cdef cnp.int64_t[::1] rs = rec_steps
    cdef double[:, ::1] rx = rec_states
    cdef cnp.int64_t[::1] rr = rec_regions
    cdef cnp.int64_t[::1] sw = switches
    cdef double* buf = <double*> malloc(sizeof(double) * (6 * d + n_lab + 1))
    if buf == NULL:
        raise MemoryError()
    cdef double* x = buf
    cdef double* k1 = buf + d
    cdef double* k2 = buf + 2 * d
    cdef double* k3 = buf + 3 * d
    cdef double* k4 = buf + 4 * d
    cdef double* tmp = buf + 5 * d
    cdef double* f = buf + 6 * d
    cdef const cnp.int64_t* P = &arg_ptr[0]
    cdef const cnp.int64_t* I = &arg_idx[0] if arg_idx.shape[0] else NULL
    cdef const double* R = &arg_rate[0] if arg_rate.shape[0] else NULL
    cdef const unsigned char* S = &arg_pas[0] if arg_pas.shape[0] else NULL
    cdef const double* F = &factor[0] if n_lab else NULL
    cdef const cnp.int64_t* CP = &chg_ptr[0]
    cdef const cnp.int64_t* CI = &chg_idx[0] if chg_idx.shape[0] else NULL
    cdef const double* CV = &chg_val[0] if chg_val.shape[0] else NULL
    cdef const cnp.int64_t* MP = &mt_ptr[0]
    cdef const cnp.int64_t* MI = &mt_idx[0] if mt_idx.shape[0] else NULL
    cdef const double* MR = &mt_rate[0] if mt_rate.shape[0] else NULL
    cdef double[::1] xin = np.ascontiguousarray(x0, dtype=np.float64)
    cdef Py_ssize_t i
    cdef cnp.int64_t step, r = 1, n_sw = 0, n_clip = 0, reg, nreg, fail = -1, last_sw = -1
    cdef double min_pre = 0.0, half = 0.5 * h, sixth = h / 6.0
    cdef int status = OK
    for i in range(d):
        x[i] = xin[i]
        rx[0, i] = x[i]
    reg = _region(x, n_mt, MP, MI, MR) if n_mt else 0
    rr[0] = reg
    with nogil:
        for step in range(1, nsteps + 1):
            _field(x, d, n_lab, P, I, R, S, F, CP, CI, CV, f, k1)
            for i in range(d):
                tmp[i] = x[i] + half * k1[i]
            _field(tmp, d, n_lab, P, I, R, S, F, CP, CI, CV, f, k2)
            for i in range(d):
                tmp[i] = x[i] + half * k2[i]
            _field(tmp, d, n_lab, P, I, R, S, F, CP, CI, CV, f, k3)
            for i in range(d):
                tmp[i] = x[i] + h * k3[i]
            _field(tmp, d, n_lab, P, I, R, S, F, CP, CI, CV, f, k4)
            for i in range(d):
                x[i] = x[i] + sixth * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
            for i in range(d):
                if not isfinite(x[i]):
                    status = NONFINITE
                    break
                if x[i] < 0.0:
                    if x[i] < min_pre:
                        min_pre = x[i]
                    if x[i] < -CLIP_TOL:
                        status = NEGATIVE
                        break
            if status != OK:
                fail = step
                break
            for i in range(d):
                if x[i] < 0.0:
                    x[i] = 0.0
                    n_clip += 1
            nreg = _region(x, n_mt, MP, MI, MR) if n_mt else 0
            if nreg != reg:
                if n_sw < max_switches:
                    sw[n_sw] = step
                n_sw += 1
                last_sw = step
                reg = nreg
            if step % stride == 0 or step == nsteps:
                rs[r] = step
                for i in range(d):
                    rx[r, i] = x[i]
                rr[r] = reg
                r += 1
    free(buf)
    return (rec_steps[:r], rec_states[:r], rec_regions[:r],
            switches[:min(n_sw, max_switches)], n_sw, last_sw, n_clip, min_pre, status, fail)


def ssa(cnp.int64_t[::1] x, double t, double t_end, const double[::1] uniforms,
        Py_ssize_t u_pos, double[::1] out_times, cnp.int64_t[::1] out_labels,
        Py_ssize_t d, const cnp.int64_t[::1] arg_ptr, const cnp.int64_t[::1] arg_idx,
        const double[::1] arg_rate, const unsigned char[::1] arg_pas,
        const double[::1] factor, const cnp.int64_t[::1] chg_ptr,
        const cnp.int64_t[::1] chg_idx, const double[::1] chg_val):
    cdef Py_ssize_t n_lab = factor.shape[0]
    cdef Py_ssize_t cap = out_times.shape[0]
    cdef Py_ssize_t n_u = uniforms.shape[0]
    cdef Py_ssize_t n_ev = 0, j, k, sel
    cdef double total, best, v, u1, u2, tau, target, cum
    cdef int status = DONE
    cdef double* f = <double*> malloc(sizeof(double) * (n_lab + 1))
    if f == NULL:
        raise MemoryError()
    with nogil:
        while True:
            total = 0.0
            for j in range(n_lab):
                best = INFINITY
                for k in range(arg_ptr[j], arg_ptr[j + 1]):
                    v = <double> x[arg_idx[k]]
                    if arg_pas[k]:
                        if v <= 0.0:
                            best = 0.0
                            break
                    else:
                        v = v * arg_rate[k]
                        if v < best:
                            best = v
                f[j] = factor[j] * best
                total += f[j]
            if total <= 0.0:
                status = ABSORBED
                break
            if u_pos + 2 > n_u:
                status = NEED_UNIFORMS
                break
            if n_ev >= cap:
                status = BUFFER_FULL
                break
            u1 = uniforms[u_pos]
            u2 = uniforms[u_pos + 1]
            u_pos += 2
            tau = -log1p(-u1) / total
            if t + tau > t_end:
                t = t_end
                status = DONE
                break
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
                x[chg_idx[k]] += <cnp.int64_t> chg_val[k]
            out_times[n_ev] = t
            out_labels[n_ev] = sel
            n_ev += 1
    free(f)
    return n_ev, u_pos, t, status
