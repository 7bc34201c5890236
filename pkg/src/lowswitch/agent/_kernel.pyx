# cython: language_level=3
"""Compiled inner loops: multi-step learner execution and the backward
value recursion. Semantics are identical to ``_fallback.py``."""

import numpy as np

from libc.math cimport sqrt, pow
from libc.stdint cimport int64_t, uint8_t

DEF MAIN = 0
DEF UCB_Q = 1
DEF UCB_Q_ADV_EAGER = 2
DEF GREEDY_Q = 3
DEF RANDOM = 4

DEF OPT_TOL = 1e-9
DEF PROX_LIMIT = 6.0
DEF REFERENCE_GAP = 3.0


cdef inline int64_t _argmax(double[:, ::1] q, int64_t s, int64_t n_actions) noexcept nogil:
    cdef int64_t j, best = 0
    for j in range(1, n_actions):
        if q[s, j] > q[s, best]:
            best = j
    return best


cdef inline double _row_max(double[:, ::1] q, int64_t s, int64_t n_actions) noexcept nogil:
    cdef int64_t j
    cdef double m = q[s, 0]
    for j in range(1, n_actions):
        if q[s, j] > m:
            m = q[s, j]
    return m


cdef inline double _clamp0(double x) noexcept nogil:
    if x < 0.0:
        return 0.0
    return x


cdef inline void _settle(double[::1] v, double[::1] v_lcb, double[::1] v_ref,
                         uint8_t[::1] u_ref, int64_t x) noexcept nogil:
    if v[x] - v_lcb[x] > REFERENCE_GAP:
        v_ref[x] = v[x]
        u_ref[x] = 1
    elif u_ref[x]:
        v_ref[x] = v[x]
        u_ref[x] = 0


cdef inline uint8_t _prox_bad(double[::1] v, double[::1] v_ref, int64_t x) noexcept nogil:
    cdef double d = v[x] - v_ref[x]
    return d > PROX_LIMIT or d < -PROX_LIMIT


def run_learner(
    int algo,
    const double[:, :, ::1] cdf,
    const int64_t[:, ::1] last_support,
    const double[:, ::1] rewards,
    double gamma,
    double c_b,
    double iota,
    int64_t H,
    double threshold,
    bint ref_next,
    double[:, ::1] q,
    double[:, ::1] q_ucb,
    double[:, ::1] q_lcb,
    double[:, ::1] q_ref,
    double[:, ::1] q_lazy,
    double[:, ::1] q_snapshot,
    int64_t[:, ::1] visits,
    double[:, ::1] mu_ref,
    double[:, ::1] sigma_ref,
    double[:, ::1] mu_adv,
    double[:, ::1] sigma_adv,
    double[:, ::1] b_big_ref,
    double[:, ::1] delta_ref,
    double[:, ::1] staleness,
    double[::1] v,
    double[::1] v_lcb,
    double[::1] v_ref,
    uint8_t[::1] u_ref,
    uint8_t[:, ::1] buf_mask,
    double[:, ::1] buf_vals,
    int64_t[::1] scalars,
    const double[::1] uniforms,
    int64_t n_steps,
    int64_t[::1] out_state,
    int64_t[::1] out_action,
    double[::1] out_reward,
    int64_t[::1] out_next,
    uint8_t[::1] out_switched,
    int64_t[::1] out_n,
    bint monitor,
    const double[:, ::1] q_star,
    uint8_t[::1] out_opt,
    uint8_t[::1] out_pes,
    uint8_t[::1] out_prox,
    int64_t[::1] hard_counts,
    list events,
):
    """Advance one learner ``n_steps`` steps in place.

    ``scalars`` holds ``[t, current_state, u_switch, switch_count]`` and is
    updated on return. ``events`` receives ``(t, state, new_action)`` for
    every change of the execution policy's greedy action. Returns the number
    of uniforms consumed.
    """
    cdef int64_t S = q.shape[0]
    cdef int64_t A = q.shape[1]
    cdef int64_t t = scalars[0]
    cdef int64_t s = scalars[1]
    cdef bint u_switch = scalars[2] != 0
    cdef int64_t switch_count = scalars[3]
    cdef int64_t k, i, j, a, s_next, n, before, idx, n_touched, cur = 0
    cdef int64_t n_buf = 0
    cdef double u, r, eta, inv, b, old_q, old_vlcb, adv, var_ref, var_adv, b_next, b_r, target, m, expect
    cdef double one_minus = 1.0 - gamma
    cdef double omg3 = pow(one_minus, 3.0)
    cdef double omg2 = pow(one_minus, 2.0)
    cdef double iota2 = pow(iota, 2.0)
    cdef double inv_sqrt_omg = 1.0 / sqrt(one_minus)
    cdef bint switched
    cdef bint lazy = algo == MAIN
    cdef bint learn_adv = algo == MAIN or algo == UCB_Q_ADV_EAGER
    cdef int64_t n_opt_bad = 0, n_pes_bad = 0, n_prox_bad = 0
    cdef uint8_t flag
    cdef int64_t mono = hard_counts[0], vlcb_bad = hard_counts[1], buf_fail = hard_counts[2]

    policy_arr = np.zeros(max(S, 1), dtype=np.int64)
    stack_arr = np.zeros(max(S * A, 1), dtype=np.int64)
    opt_arr = np.zeros((S, A), dtype=np.uint8)
    pes_arr = np.zeros((S, A), dtype=np.uint8)
    prox_arr = np.zeros(max(S, 1), dtype=np.uint8)
    cdef int64_t[::1] policy = policy_arr
    cdef int64_t[::1] buf_stack = stack_arr
    cdef uint8_t[:, ::1] opt_flag = opt_arr
    cdef uint8_t[:, ::1] pes_flag = pes_arr
    cdef uint8_t[::1] prox_flag = prox_arr

    for i in range(S):
        policy[i] = _argmax(q_lazy, i, A) if lazy else _argmax(q, i, A)
        for j in range(A):
            if buf_mask[i, j]:
                buf_stack[n_buf] = i * A + j
                n_buf += 1
    if monitor:
        for i in range(S):
            for j in range(A):
                opt_flag[i, j] = q[i, j] < q_star[i, j] - OPT_TOL
                n_opt_bad += opt_flag[i, j]
                pes_flag[i, j] = q_lcb[i, j] > q_star[i, j] + OPT_TOL
                n_pes_bad += pes_flag[i, j]
            prox_flag[i] = _prox_bad(v, v_ref, i)
            n_prox_bad += prox_flag[i]

    for k in range(n_steps):
        switched = False
        if algo == RANDOM:
            a = <int64_t>(uniforms[cur] * A)
            if a > A - 1:
                a = A - 1
            cur += 1
        else:
            a = policy[s]
        u = uniforms[cur]
        cur += 1
        s_next = last_support[s, a]
        for j in range(S):
            if u < cdf[s, a, j]:
                s_next = j
                break
        visits[s, a] += 1
        n = visits[s, a]
        r = rewards[s, a]
        eta = <double>(H + 1) / <double>(H + n)
        old_q = q[s, a]
        old_vlcb = v_lcb[s]

        if algo == GREEDY_Q:
            q[s, a] = (1.0 - eta) * q[s, a] + eta * (r + gamma * v[s_next])
            v[s] = _row_max(q, s, A)
        elif algo == UCB_Q:
            b = c_b * sqrt(iota / (omg3 * n))
            q_ucb[s, a] = (1.0 - eta) * q_ucb[s, a] + eta * (r + gamma * v[s_next] + b)
            m = q_ucb[s, a]
            if q[s, a] < m:
                m = q[s, a]
            q[s, a] = m
            v[s] = _row_max(q, s, A)
        elif learn_adv:
            b = c_b * sqrt(iota / (omg3 * n))
            q_ucb[s, a] = (1.0 - eta) * q_ucb[s, a] + eta * (r + gamma * v[s_next] + b)
            q_lcb[s, a] = (1.0 - eta) * q_lcb[s, a] + eta * (r + gamma * v_lcb[s_next] - b)
            inv = 1.0 / n
            mu_ref[s, a] = (1.0 - inv) * mu_ref[s, a] + inv * v_ref[s_next]
            sigma_ref[s, a] = (1.0 - inv) * sigma_ref[s, a] + inv * (v_ref[s_next] * v_ref[s_next])
            adv = v[s_next] - v_ref[s_next]
            mu_adv[s, a] = (1.0 - eta) * mu_adv[s, a] + eta * adv
            sigma_adv[s, a] = (1.0 - eta) * sigma_adv[s, a] + eta * (adv * adv)
            var_ref = _clamp0(sigma_ref[s, a] - mu_ref[s, a] * mu_ref[s, a])
            var_adv = _clamp0(sigma_adv[s, a] - mu_adv[s, a] * mu_adv[s, a])
            b_next = c_b * sqrt(iota / n) * (sqrt(var_ref) + inv_sqrt_omg * sqrt(var_adv))
            delta_ref[s, a] = b_next - b_big_ref[s, a]
            b_big_ref[s, a] = b_next
            b_r = b_big_ref[s, a] + (1.0 - eta) * delta_ref[s, a] / eta + c_b * iota2 / (pow(<double>n, 0.75) * omg2)
            target = r + gamma * (v[s_next] - v_ref[s_next] + mu_ref[s, a]) + b_r
            q_ref[s, a] = (1.0 - eta) * q_ref[s, a] + eta * target
            m = q_ref[s, a]
            if q_ucb[s, a] < m:
                m = q_ucb[s, a]
            if q[s, a] < m:
                m = q[s, a]
            q[s, a] = m
            v[s] = _row_max(q, s, A)
            m = _row_max(q_lcb, s, A)
            if v_lcb[s] > m:
                m = v_lcb[s]
            v_lcb[s] = m

        if lazy:
            if u_switch:
                switched = True
                for idx in range(n_buf):
                    i = buf_stack[idx] // A
                    j = buf_stack[idx] % A
                    q_lazy[i, j] = buf_vals[i, j]
                    buf_mask[i, j] = 0
                n_touched = n_buf
                n_buf = 0
                u_switch = False
                switch_count += 1
                if monitor:
                    # q_lazy must now equal q as it stood at the end of the previous step.
                    for i in range(S):
                        for j in range(A):
                            expect = old_q if (i == s and j == a) else q[i, j]
                            if q_lazy[i, j] != expect:
                                buf_fail += 1
                for idx in range(n_touched):
                    i = buf_stack[idx] // A
                    before = policy[i]
                    policy[i] = _argmax(q_lazy, i, A)
                    if policy[i] != before:
                        events.append((t + 1, i, policy[i]))
            if not buf_mask[s, a]:
                buf_mask[s, a] = 1
                buf_stack[n_buf] = s * A + a
                n_buf += 1
            buf_vals[s, a] = q[s, a]
            staleness[s, a] = staleness[s, a] + (q_snapshot[s, a] - q[s, a])
            if staleness[s, a] > threshold:
                q_snapshot[s, a] = q[s, a]
                u_switch = True
                staleness[s, a] = 0.0
        elif algo != RANDOM:
            before = policy[s]
            policy[s] = _argmax(q, s, A)
            if policy[s] != before:
                switched = True
                switch_count += 1
                events.append((t + 1, s, policy[s]))

        if learn_adv:
            _settle(v, v_lcb, v_ref, u_ref, s)
            if ref_next:
                _settle(v, v_lcb, v_ref, u_ref, s_next)

        if monitor:
            if algo != RANDOM and algo != GREEDY_Q and q[s, a] > old_q:
                mono += 1
            if learn_adv and v_lcb[s] < old_vlcb:
                vlcb_bad += 1
            flag = q[s, a] < q_star[s, a] - OPT_TOL
            n_opt_bad += flag - opt_flag[s, a]
            opt_flag[s, a] = flag
            flag = q_lcb[s, a] > q_star[s, a] + OPT_TOL
            n_pes_bad += flag - pes_flag[s, a]
            pes_flag[s, a] = flag
            flag = _prox_bad(v, v_ref, s)
            n_prox_bad += flag - prox_flag[s]
            prox_flag[s] = flag
            flag = _prox_bad(v, v_ref, s_next)
            n_prox_bad += flag - prox_flag[s_next]
            prox_flag[s_next] = flag
            out_opt[k] = n_opt_bad > 0
            out_pes[k] = n_pes_bad > 0
            out_prox[k] = n_prox_bad > 0

        t += 1
        out_state[k] = s
        out_action[k] = a
        out_reward[k] = r
        out_next[k] = s_next
        out_switched[k] = switched
        out_n[k] = n
        s = s_next

    scalars[0] = t
    scalars[1] = s
    scalars[2] = u_switch
    scalars[3] = switch_count
    hard_counts[0] = mono
    hard_counts[1] = vlcb_bad
    hard_counts[2] = buf_fail
    return cur


def backward_values(
    const double[:, :, ::1] p_stack,
    const double[:, ::1] r_stack,
    const int64_t[::1] epoch_of_step,
    double gamma,
    double[:, ::1] out,
):
    """Fill ``out[t] = r_e + gamma * P_e @ out[t + 1]`` backwards from ``out[T]``."""
    cdef int64_t T = epoch_of_step.shape[0]
    cdef int64_t S = out.shape[1]
    cdef int64_t t, i, j, e
    cdef double acc
    with nogil:
        for t in range(T - 1, -1, -1):
            e = epoch_of_step[t]
            for i in range(S):
                acc = 0.0
                for j in range(S):
                    acc = acc + p_stack[e, i, j] * out[t + 1, j]
                out[t, i] = r_stack[e, i] + gamma * acc
