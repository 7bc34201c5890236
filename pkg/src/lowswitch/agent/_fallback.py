"""Pure-Python kernels with the exact semantics of ``_kernel.pyx``.

Tables are copied into nested lists for the duration of a call (scalar
indexing into numpy arrays is several times slower) and written back on
return.
"""

from __future__ import annotations

import math

import numpy as np

MAIN, UCB_Q, UCB_Q_ADV_EAGER, GREEDY_Q, RANDOM = range(5)
OPT_TOL = 1e-9
PROX_LIMIT = 6.0
REFERENCE_GAP = 3.0


def _argmax(row) -> int:
    best = 0
    for j in range(1, len(row)):
        if row[j] > row[best]:
            best = j
    return best


def _row_max(row) -> float:
    m = row[0]
    for x in row[1:]:
        if x > m:
            m = x
    return m


def _settle(v, v_lcb, v_ref, u_ref, x):
    if v[x] - v_lcb[x] > REFERENCE_GAP:
        v_ref[x] = v[x]
        u_ref[x] = 1
    elif u_ref[x]:
        v_ref[x] = v[x]
        u_ref[x] = 0


def _prox_bad(v, v_ref, x) -> int:
    d = v[x] - v_ref[x]
    return int(d > PROX_LIMIT or d < -PROX_LIMIT)


def run_learner(
    algo, cdf, last_support, rewards, gamma, c_b, iota, H, threshold, ref_next,
    q, q_ucb, q_lcb, q_ref, q_lazy, q_snapshot, visits,
    mu_ref, sigma_ref, mu_adv, sigma_adv, b_big_ref, delta_ref, staleness,
    v, v_lcb, v_ref, u_ref, buf_mask, buf_vals, scalars, uniforms, n_steps,
    out_state, out_action, out_reward, out_next, out_switched, out_n,
    monitor, q_star, out_opt, out_pes, out_prox, hard_counts, events,
):
    """See ``_kernel.run_learner``; same arguments, same effects."""
    arrays = {
        "q": q, "q_ucb": q_ucb, "q_lcb": q_lcb, "q_ref": q_ref, "q_lazy": q_lazy,
        "q_snapshot": q_snapshot, "visits": visits, "mu_ref": mu_ref, "sigma_ref": sigma_ref,
        "mu_adv": mu_adv, "sigma_adv": sigma_adv, "b_big_ref": b_big_ref, "delta_ref": delta_ref,
        "staleness": staleness, "v": v, "v_lcb": v_lcb, "v_ref": v_ref, "u_ref": u_ref,
        "buf_mask": buf_mask, "buf_vals": buf_vals,
    }
    L = {name: arr.tolist() for name, arr in arrays.items()}
    Q, QU, QL, QR, QZ, QM = L["q"], L["q_ucb"], L["q_lcb"], L["q_ref"], L["q_lazy"], L["q_snapshot"]
    N = L["visits"]
    MR, SR, MA, SA_, BB, DR, ST = (
        L["mu_ref"], L["sigma_ref"], L["mu_adv"], L["sigma_adv"], L["b_big_ref"], L["delta_ref"], L["staleness"]
    )
    V, VL, VR, UR = L["v"], L["v_lcb"], L["v_ref"], L["u_ref"]
    BM, BV = L["buf_mask"], L["buf_vals"]
    CDF = cdf.tolist()
    LAST = last_support.tolist()
    RW = rewards.tolist()
    QS = q_star.tolist() if monitor else None
    U = uniforms.tolist()

    S = len(Q)
    A = len(Q[0])
    t, s, u_switch, switch_count = (int(x) for x in scalars)
    u_switch = bool(u_switch)
    mono, vlcb_bad, buf_fail = (int(x) for x in hard_counts)
    one_minus = 1.0 - gamma
    omg3 = one_minus ** 3
    omg2 = one_minus ** 2
    iota2 = iota ** 2
    inv_sqrt_omg = 1.0 / math.sqrt(one_minus)
    sqrt = math.sqrt
    lazy = algo == MAIN
    learn_adv = algo in (MAIN, UCB_Q_ADV_EAGER)
    cur = 0

    policy = [_argmax(QZ[i]) if lazy else _argmax(Q[i]) for i in range(S)]
    buf_stack = [i * A + j for i in range(S) for j in range(A) if BM[i][j]]
    if monitor:
        opt_flag = [[int(Q[i][j] < QS[i][j] - OPT_TOL) for j in range(A)] for i in range(S)]
        pes_flag = [[int(QL[i][j] > QS[i][j] + OPT_TOL) for j in range(A)] for i in range(S)]
        prox_flag = [_prox_bad(V, VR, i) for i in range(S)]
        n_opt_bad = sum(map(sum, opt_flag))
        n_pes_bad = sum(map(sum, pes_flag))
        n_prox_bad = sum(prox_flag)
        o_opt, o_pes, o_prox = [], [], []
    o_state, o_action, o_reward, o_next, o_switched, o_n = [], [], [], [], [], []

    for _ in range(n_steps):
        switched = False
        if algo == RANDOM:
            a = min(int(U[cur] * A), A - 1)
            cur += 1
        else:
            a = policy[s]
        u = U[cur]
        cur += 1
        row = CDF[s][a]
        s_next = LAST[s][a]
        for j in range(S):
            if u < row[j]:
                s_next = j
                break
        N[s][a] += 1
        n = N[s][a]
        r = RW[s][a]
        eta = (H + 1) / (H + n)
        Qs = Q[s]
        old_q = Qs[a]
        old_vlcb = VL[s]

        if algo == GREEDY_Q:
            Qs[a] = (1.0 - eta) * Qs[a] + eta * (r + gamma * V[s_next])
            V[s] = _row_max(Qs)
        elif algo == UCB_Q:
            b = c_b * sqrt(iota / (omg3 * n))
            QU[s][a] = (1.0 - eta) * QU[s][a] + eta * (r + gamma * V[s_next] + b)
            m = QU[s][a]
            if Qs[a] < m:
                m = Qs[a]
            Qs[a] = m
            V[s] = _row_max(Qs)
        elif learn_adv:
            b = c_b * sqrt(iota / (omg3 * n))
            QU[s][a] = (1.0 - eta) * QU[s][a] + eta * (r + gamma * V[s_next] + b)
            QL[s][a] = (1.0 - eta) * QL[s][a] + eta * (r + gamma * VL[s_next] - b)
            inv = 1.0 / n
            vr = VR[s_next]
            MR[s][a] = (1.0 - inv) * MR[s][a] + inv * vr
            SR[s][a] = (1.0 - inv) * SR[s][a] + inv * (vr * vr)
            adv = V[s_next] - vr
            MA[s][a] = (1.0 - eta) * MA[s][a] + eta * adv
            SA_[s][a] = (1.0 - eta) * SA_[s][a] + eta * (adv * adv)
            var_ref = SR[s][a] - MR[s][a] * MR[s][a]
            if var_ref < 0.0:
                var_ref = 0.0
            var_adv = SA_[s][a] - MA[s][a] * MA[s][a]
            if var_adv < 0.0:
                var_adv = 0.0
            b_next = c_b * sqrt(iota / n) * (sqrt(var_ref) + inv_sqrt_omg * sqrt(var_adv))
            DR[s][a] = b_next - BB[s][a]
            BB[s][a] = b_next
            b_r = BB[s][a] + (1.0 - eta) * DR[s][a] / eta + c_b * iota2 / (n ** 0.75 * omg2)
            target = r + gamma * (V[s_next] - vr + MR[s][a]) + b_r
            QR[s][a] = (1.0 - eta) * QR[s][a] + eta * target
            m = QR[s][a]
            if QU[s][a] < m:
                m = QU[s][a]
            if Qs[a] < m:
                m = Qs[a]
            Qs[a] = m
            V[s] = _row_max(Qs)
            m = _row_max(QL[s])
            if VL[s] > m:
                m = VL[s]
            VL[s] = m

        if lazy:
            if u_switch:
                switched = True
                for idx in buf_stack:
                    i, j = divmod(idx, A)
                    QZ[i][j] = BV[i][j]
                    BM[i][j] = 0
                touched = buf_stack
                buf_stack = []
                u_switch = False
                switch_count += 1
                if monitor:
                    for i in range(S):
                        for j in range(A):
                            expect = old_q if (i == s and j == a) else Q[i][j]
                            if QZ[i][j] != expect:
                                buf_fail += 1
                for idx in touched:
                    i = idx // A
                    before = policy[i]
                    policy[i] = _argmax(QZ[i])
                    if policy[i] != before:
                        events.append((t + 1, i, policy[i]))
            if not BM[s][a]:
                BM[s][a] = 1
                buf_stack.append(s * A + a)
            BV[s][a] = Qs[a]
            ST[s][a] = ST[s][a] + (QM[s][a] - Qs[a])
            if ST[s][a] > threshold:
                QM[s][a] = Qs[a]
                u_switch = True
                ST[s][a] = 0.0
        elif algo != RANDOM:
            before = policy[s]
            policy[s] = _argmax(Qs)
            if policy[s] != before:
                switched = True
                switch_count += 1
                events.append((t + 1, s, policy[s]))

        if learn_adv:
            _settle(V, VL, VR, UR, s)
            if ref_next:
                _settle(V, VL, VR, UR, s_next)

        if monitor:
            if algo != RANDOM and algo != GREEDY_Q and Qs[a] > old_q:
                mono += 1
            if learn_adv and VL[s] < old_vlcb:
                vlcb_bad += 1
            flag = int(Qs[a] < QS[s][a] - OPT_TOL)
            n_opt_bad += flag - opt_flag[s][a]
            opt_flag[s][a] = flag
            flag = int(QL[s][a] > QS[s][a] + OPT_TOL)
            n_pes_bad += flag - pes_flag[s][a]
            pes_flag[s][a] = flag
            flag = _prox_bad(V, VR, s)
            n_prox_bad += flag - prox_flag[s]
            prox_flag[s] = flag
            flag = _prox_bad(V, VR, s_next)
            n_prox_bad += flag - prox_flag[s_next]
            prox_flag[s_next] = flag
            o_opt.append(n_opt_bad > 0)
            o_pes.append(n_pes_bad > 0)
            o_prox.append(n_prox_bad > 0)

        t += 1
        o_state.append(s)
        o_action.append(a)
        o_reward.append(r)
        o_next.append(s_next)
        o_switched.append(switched)
        o_n.append(n)
        s = s_next

    for name, arr in arrays.items():
        arr[...] = np.asarray(L[name], dtype=arr.dtype)
    k = len(o_state)
    out_state[:k] = o_state
    out_action[:k] = o_action
    out_reward[:k] = o_reward
    out_next[:k] = o_next
    out_switched[:k] = o_switched
    out_n[:k] = o_n
    if monitor:
        out_opt[:k] = o_opt
        out_pes[:k] = o_pes
        out_prox[:k] = o_prox
    scalars[:] = (t, s, int(u_switch), switch_count)
    hard_counts[:] = (mono, vlcb_bad, buf_fail)
    return cur


def backward_values(p_stack, r_stack, epoch_of_step, gamma, out):
    """Fill ``out[t] = r_e + gamma * P_e @ out[t + 1]`` backwards from ``out[T]``."""
    T = len(epoch_of_step)
    if T == 0:
        return
    # Walk epochs as contiguous runs so each run reuses one matrix.
    boundaries = np.flatnonzero(np.diff(epoch_of_step)) + 1
    starts = np.concatenate(([0], boundaries))
    ends = np.concatenate((boundaries, [T]))
    w = out[T].copy()
    for start, end in zip(starts[::-1], ends[::-1]):
        e = epoch_of_step[start]
        p, r = p_stack[e], r_stack[e]
        for t in range(end - 1, start - 1, -1):
            w = r + gamma * (p @ w)
            out[t] = w
