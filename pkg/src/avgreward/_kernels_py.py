"""Pure-Python twin of the compiled kernels in ``_kernels.pyx``.

Operation order mirrors the Cython source line for line so both backends
produce bit-identical results from the same pre-drawn uniforms.
"""

KIND_Q = 0
KIND_RVIQ = 1
KIND_RLEARN = 2


def _linear(v0, v1, n, t):
    if n <= 0 or t >= n:
        return v1
    return v0 + (v1 - v0) * (t / n)


def _sample(offsets, cumprob, sa, u):
    j = offsets[sa]
    last = offsets[sa + 1] - 1
    while j < last and u >= cumprob[j]:
        j += 1
    return j


def run_tabular(kind, table, u_tilde, state, offsets, next_state, reward, cumprob,
                noise, alpha0, alpha1, alpha_steps, eps0, eps1, eps_steps,
                alpha_u, gamma, ref_state, t0):
    n_act = table.shape[1]
    rows = table.tolist()
    offsets = offsets.tolist()
    next_state = next_state.tolist()
    reward = reward.tolist()
    cumprob = cumprob.tolist()
    s = int(state)
    u_tilde = float(u_tilde)
    for i, (r_explore, r_action, r_next) in enumerate(noise.tolist()):
        t = t0 + i
        eps = _linear(eps0, eps1, eps_steps, t)
        alpha = _linear(alpha0, alpha1, alpha_steps, t)
        row = rows[s]
        if r_explore < eps:
            a = min(int(r_action * n_act), n_act - 1)
        else:
            a = row.index(max(row))
        j = _sample(offsets, cumprob, s * n_act + a, r_next)
        u = reward[j]
        s2 = next_state[j]
        q = row[a]
        if kind == KIND_Q:
            td = u + gamma * max(rows[s2]) - q
            row[a] = q + alpha * td
        elif kind == KIND_RVIQ:
            td = u + max(rows[s2]) - max(rows[ref_state]) - q
            row[a] = q + alpha * td
        else:
            td = u - u_tilde + max(rows[s2]) - q
            row[a] = q + alpha * td
            q = row[a]
            if q == max(row):
                m_next = max(rows[s2])
                u_tilde = u_tilde + alpha_u * (u + m_next - q - u_tilde)
        s = s2
    table[:, :] = rows
    return s, u_tilde


def rollout(actions, state, offsets, next_state, reward, cumprob, noise, burn_in):
    n_act = (len(offsets) - 1) // len(actions)
    actions = actions.tolist()
    offsets = offsets.tolist()
    next_state = next_state.tolist()
    reward = reward.tolist()
    cumprob = cumprob.tolist()
    s = int(state)
    total = 0.0
    for i, u in enumerate(noise.tolist()):
        j = _sample(offsets, cumprob, s * n_act + actions[s], u)
        if i >= burn_in:
            total = total + reward[j]
        s = next_state[j]
    return total / (len(noise) - burn_in), s
