# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops for tabular learning and policy rollouts.

Must stay arithmetically identical to ``_kernels_py``: same operation order,
same random-number consumption. Both are driven by pre-drawn uniforms so the
two backends produce bit-identical tables.
"""

cdef enum:
    C_KIND_Q = 0
    C_KIND_RVIQ = 1
    C_KIND_RLEARN = 2

KIND_Q = C_KIND_Q
KIND_RVIQ = C_KIND_RVIQ
KIND_RLEARN = C_KIND_RLEARN


cdef inline double _linear(double v0, double v1, long n, long t) nogil:
    if n <= 0 or t >= n:
        return v1
    return v0 + (v1 - v0) * (<double>t / <double>n)


cdef inline long _argmax(double[:, ::1] table, long s, long n_act) nogil:
    cdef long a, best = 0
    cdef double v = table[s, 0]
    for a in range(1, n_act):
        if table[s, a] > v:
            v = table[s, a]
            best = a
    return best


cdef inline double _rowmax(double[:, ::1] table, long s, long n_act) nogil:
    cdef long a
    cdef double v = table[s, 0]
    for a in range(1, n_act):
        if table[s, a] > v:
            v = table[s, a]
    return v


cdef inline long _sample(const long long[::1] offsets, const double[::1] cumprob,
                         long sa, double u) nogil:
    cdef long j = offsets[sa]
    cdef long last = offsets[sa + 1] - 1
    while j < last and u >= cumprob[j]:
        j += 1
    return j


def run_tabular(int kind, double[:, ::1] table, double u_tilde, long state,
                const long long[::1] offsets, const long long[::1] next_state,
                const double[::1] reward, const double[::1] cumprob,
                const double[:, ::1] noise,
                double alpha0, double alpha1, long alpha_steps,
                double eps0, double eps1, long eps_steps,
                double alpha_u, double gamma, long ref_state, long t0):
    cdef long n_act = table.shape[1]
    cdef long steps = noise.shape[0]
    cdef long i, t, s, a, s2, j
    cdef double eps, alpha, u, q, td, m_next
    s = state
    with nogil:
        for i in range(steps):
            t = t0 + i
            eps = _linear(eps0, eps1, eps_steps, t)
            alpha = _linear(alpha0, alpha1, alpha_steps, t)
            if noise[i, 0] < eps:
                a = <long>(noise[i, 1] * n_act)
                if a >= n_act:
                    a = n_act - 1
            else:
                a = _argmax(table, s, n_act)
            j = _sample(offsets, cumprob, s * n_act + a, noise[i, 2])
            u = reward[j]
            s2 = next_state[j]
            q = table[s, a]
            if kind == C_KIND_Q:
                td = u + gamma * _rowmax(table, s2, n_act) - q
                table[s, a] = q + alpha * td
            elif kind == C_KIND_RVIQ:
                td = u + _rowmax(table, s2, n_act) - _rowmax(table, ref_state, n_act) - q
                table[s, a] = q + alpha * td
            else:
                td = u - u_tilde + _rowmax(table, s2, n_act) - q
                table[s, a] = q + alpha * td
                q = table[s, a]
                if q == _rowmax(table, s, n_act):
                    m_next = _rowmax(table, s2, n_act)
                    u_tilde = u_tilde + alpha_u * (u + m_next - q - u_tilde)
            s = s2
    return s, u_tilde


def rollout(const long long[::1] actions, long state,
            const long long[::1] offsets, const long long[::1] next_state,
            const double[::1] reward, const double[::1] cumprob,
            const double[::1] noise, long burn_in):
    cdef long n_act = (offsets.shape[0] - 1) // actions.shape[0]
    cdef long horizon = noise.shape[0]
    cdef long i, j, s = state
    cdef double total = 0.0
    with nogil:
        for i in range(horizon):
            j = _sample(offsets, cumprob, s * n_act + actions[s], noise[i])
            if i >= burn_in:
                total = total + reward[j]
            s = next_state[j]
    return total / (horizon - burn_in), s
