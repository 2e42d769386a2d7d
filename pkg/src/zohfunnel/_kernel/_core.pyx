# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled closed-loop kernel for linear input/output plants.

Fuses the sampled feedback law (reciprocal gain map, both variants) with the
fixed-step RK4 hold-interval integration. Semantics match the pure-Python
loop in zohfunnel.sim; trajectories agree up to floating-point accumulation
order.
"""

import numpy as np

from libc.math cimport isfinite, sqrt


cdef inline void _deriv(double[:, ::1] R0, double[:, ::1] R1, double[:, ::1] S,
                        double[:, ::1] Gam, double[:, ::1] Q, double[:, ::1] P,
                        double[::1] y, double[::1] yd, double[::1] et, double[::1] u,
                        double[::1] dy, double[::1] dyd, double[::1] det,
                        int m, int l) noexcept nogil:
    cdef int i, j
    cdef double acc
    for i in range(m):
        dy[i] = yd[i]
    for i in range(m):
        acc = 0.0
        for j in range(m):
            acc += R0[i, j] * y[j]
        for j in range(m):
            acc += R1[i, j] * yd[j]
        for j in range(l):
            acc += S[i, j] * et[j]
        for j in range(m):
            acc += Gam[i, j] * u[j]
        dyd[i] = acc
    for i in range(l):
        acc = 0.0
        for j in range(l):
            acc += Q[i, j] * et[j]
        for j in range(m):
            acc += P[i, j] * y[j]
        det[i] = acc


cdef inline int _rk4_step(double[:, ::1] R0, double[:, ::1] R1, double[:, ::1] S,
                          double[:, ::1] Gam, double[:, ::1] Q, double[:, ::1] P,
                          double[::1] y, double[::1] yd, double[::1] et, double[::1] u,
                          double h,
                          double[:, ::1] ky, double[:, ::1] kyd, double[:, ::1] ket,
                          double[::1] ty, double[::1] tyd, double[::1] tet,
                          int m, int l) noexcept nogil:
    # returns 0 on success, 1 if the state went non-finite
    cdef int i
    cdef double h2 = 0.5 * h
    cdef double w = h / 6.0

    _deriv(R0, R1, S, Gam, Q, P, y, yd, et, u, ky[0], kyd[0], ket[0], m, l)
    for i in range(m):
        ty[i] = y[i] + h2 * ky[0, i]
        tyd[i] = yd[i] + h2 * kyd[0, i]
    for i in range(l):
        tet[i] = et[i] + h2 * ket[0, i]
    _deriv(R0, R1, S, Gam, Q, P, ty, tyd, tet, u, ky[1], kyd[1], ket[1], m, l)
    for i in range(m):
        ty[i] = y[i] + h2 * ky[1, i]
        tyd[i] = yd[i] + h2 * kyd[1, i]
    for i in range(l):
        tet[i] = et[i] + h2 * ket[1, i]
    _deriv(R0, R1, S, Gam, Q, P, ty, tyd, tet, u, ky[2], kyd[2], ket[2], m, l)
    for i in range(m):
        ty[i] = y[i] + h * ky[2, i]
        tyd[i] = yd[i] + h * kyd[2, i]
    for i in range(l):
        tet[i] = et[i] + h * ket[2, i]
    _deriv(R0, R1, S, Gam, Q, P, ty, tyd, tet, u, ky[3], kyd[3], ket[3], m, l)

    for i in range(m):
        y[i] = y[i] + w * (ky[0, i] + 2.0 * (ky[1, i] + ky[2, i]) + ky[3, i])
        yd[i] = yd[i] + w * (kyd[0, i] + 2.0 * (kyd[1, i] + kyd[2, i]) + kyd[3, i])
        if not (isfinite(y[i]) and isfinite(yd[i])):
            return 1
    for i in range(l):
        et[i] = et[i] + w * (ket[0, i] + 2.0 * (ket[1, i] + ket[2, i]) + ket[3, i])
        if not isfinite(et[i]):
            return 1
    return 0


def run_linear(R0, R1, S, Gam, Q, P, y0, yd0, eta0,
               yref_s, ydref_s, phi_s,
               double tau, double horizon, int substeps, int stride,
               double beta, double lam, int deriv_variant):
    """Closed-loop run; see zohfunnel.sim for the recording layout contract."""
    cdef double[:, ::1] mR0 = np.ascontiguousarray(R0, dtype=np.float64)
    cdef double[:, ::1] mR1 = np.ascontiguousarray(R1, dtype=np.float64)
    cdef double[:, ::1] mS = np.ascontiguousarray(S, dtype=np.float64)
    cdef double[:, ::1] mG = np.ascontiguousarray(Gam, dtype=np.float64)
    cdef double[:, ::1] mQ = np.ascontiguousarray(Q, dtype=np.float64)
    cdef double[:, ::1] mP = np.ascontiguousarray(P, dtype=np.float64)
    cdef double[:, ::1] myref = np.ascontiguousarray(yref_s, dtype=np.float64)
    cdef double[:, ::1] mydref = np.ascontiguousarray(ydref_s, dtype=np.float64)
    cdef double[::1] mphi = np.ascontiguousarray(phi_s, dtype=np.float64)

    cdef int m = mR0.shape[0]
    cdef int l = mQ.shape[0]
    cdef Py_ssize_t n_samples = mphi.shape[0]
    cdef int per = 1 + (substeps - 1) // stride
    cdef Py_ssize_t cap = n_samples * per + 1

    t_arr = np.empty(cap)
    y_arr = np.empty((cap, m))
    yd_arr = np.empty((cap, m))
    eta_arr = np.empty((cap, l))
    u_arr = np.empty((cap, m))
    is_sample = np.zeros(cap, dtype=np.uint8)
    smp_t = np.empty(n_samples)
    smp_E = np.empty((n_samples, m))
    smp_u = np.empty((n_samples, m))
    smp_branch = np.empty(n_samples, dtype=np.int64)
    smp_row = np.empty(n_samples, dtype=np.int64)

    cdef double[::1] vt = t_arr
    cdef double[:, ::1] vy = y_arr
    cdef double[:, ::1] vyd = yd_arr
    cdef double[:, ::1] veta = eta_arr
    cdef double[:, ::1] vu = u_arr
    cdef unsigned char[::1] vis = is_sample
    cdef double[::1] vst = smp_t
    cdef double[:, ::1] vsE = smp_E
    cdef double[:, ::1] vsu = smp_u
    cdef long long[::1] vsb = smp_branch
    cdef long long[::1] vsr = smp_row

    # live state and controller memory
    cdef double[::1] y = np.ascontiguousarray(y0, dtype=np.float64).copy()
    cdef double[::1] yd = np.ascontiguousarray(yd0, dtype=np.float64).copy()
    cdef double[::1] et = np.ascontiguousarray(eta0, dtype=np.float64).copy()
    cdef double[::1] e_prev = np.zeros(m)
    cdef double[::1] u = np.zeros(m)
    cdef double[::1] e_k = np.empty(m)
    cdef double[::1] sig = np.empty(m)
    cdef double[::1] E_fd = np.empty(m)

    # RK4 scratch
    cdef double[:, ::1] ky = np.empty((4, m))
    cdef double[:, ::1] kyd = np.empty((4, m))
    cdef double[:, ::1] ket = np.empty((4, max(l, 1)))
    cdef double[::1] ty = np.empty(m)
    cdef double[::1] tyd = np.empty(m)
    cdef double[::1] tet = np.empty(max(l, 1))

    cdef Py_ssize_t n = 0, n_smp = 0, k
    cdef int status = 0
    cdef double viol_time = 0.0
    cdef double guard = 1e-12 * (1.0 if horizon < 1.0 else horizon)
    cdef double t_k, t_end, h, phi_k, n1sq, alpha, nsig, nE, acc
    cdef int i, s, branch, blow

    with nogil:
        for k in range(n_samples):
            t_k = k * tau
            if t_k >= horizon - guard:
                break
            phi_k = mphi[k]

            # sampled error and funnel check
            n1sq = 0.0
            for i in range(m):
                e_k[i] = y[i] - myref[k, i]
                acc = phi_k * e_k[i]
                n1sq += acc * acc
            if not isfinite(n1sq) or n1sq >= 1.0:
                status = 1
                viol_time = t_k
                break
            alpha = 1.0 / (1.0 - n1sq)

            # backward-difference surrogate (recorded for both variants);
            # alpha scales phi_k * e_k as one factor so the rounding matches
            # the vectorized fallback to the last ulp
            for i in range(m):
                E_fd[i] = phi_k * (e_k[i] - e_prev[i]) / tau + alpha * (phi_k * e_k[i])
            if deriv_variant:
                for i in range(m):
                    sig[i] = phi_k * (yd[i] - mydref[k, i]) + alpha * (phi_k * e_k[i])
            else:
                for i in range(m):
                    sig[i] = E_fd[i]

            nsig = 0.0
            for i in range(m):
                nsig += sig[i] * sig[i]
            nsig = sqrt(nsig)
            if nsig < lam:
                branch = 0
                for i in range(m):
                    u[i] = -beta * sig[i]
            else:
                branch = 1
                for i in range(m):
                    u[i] = -beta * sig[i] / (nsig * nsig)
            for i in range(m):
                e_prev[i] = e_k[i]

            # sample bookkeeping
            vst[n_smp] = t_k
            for i in range(m):
                vsE[n_smp, i] = E_fd[i]
                vsu[n_smp, i] = u[i]
            vsb[n_smp] = branch
            vsr[n_smp] = n
            n_smp += 1

            # record the interval start, then integrate the hold interval
            vis[n] = 1
            vt[n] = t_k
            for i in range(m):
                vy[n, i] = y[i]
                vyd[n, i] = yd[i]
                vu[n, i] = u[i]
            for i in range(l):
                veta[n, i] = et[i]
            n += 1

            t_end = t_k + tau
            if t_end > horizon:
                t_end = horizon
            h = (t_end - t_k) / substeps
            blow = 0
            for s in range(substeps):
                blow = _rk4_step(mR0, mR1, mS, mG, mQ, mP, y, yd, et, u, h,
                                 ky, kyd, ket, ty, tyd, tet, m, l)
                if blow:
                    status = 2
                    viol_time = t_k + (s + 1) * h
                    break
                if s + 1 < substeps and (s + 1) % stride == 0:
                    vt[n] = t_k + (s + 1) * h
                    for i in range(m):
                        vy[n, i] = y[i]
                        vyd[n, i] = yd[i]
                        vu[n, i] = u[i]
                    for i in range(l):
                        veta[n, i] = et[i]
                    n += 1
            if status != 0:
                break

        if status == 0:
            # final row exactly at the horizon, input still held
            vt[n] = horizon
            for i in range(m):
                vy[n, i] = y[i]
                vyd[n, i] = yd[i]
                vu[n, i] = u[i]
            for i in range(l):
                veta[n, i] = et[i]
            n += 1
        elif status == 1:
            # diagnostic row at the violating sample, previous input held
            vt[n] = viol_time
            for i in range(m):
                vy[n, i] = y[i]
                vyd[n, i] = yd[i]
                vu[n, i] = u[i]
            for i in range(l):
                veta[n, i] = et[i]
            n += 1

    if status == 2:
        return {"status": 2, "viol_time": viol_time}
    return {
        "status": status,
        "viol_time": viol_time if status == 1 else float("nan"),
        "t": t_arr[:n].copy(),
        "y": y_arr[:n].copy(),
        "y_dot": yd_arr[:n].copy(),
        "eta": eta_arr[:n].copy(),
        "u": u_arr[:n].copy(),
        "is_sample": is_sample[:n].astype(bool),
        "sample_t": smp_t[:n_smp].copy(),
        "sample_E": smp_E[:n_smp].copy(),
        "sample_u": smp_u[:n_smp].copy(),
        "sample_branch": smp_branch[:n_smp].copy(),
        "sample_row": smp_row[:n_smp].copy(),
    }
