"""Pure-Python/numpy implementations of the hot loops.

Every function here has a twin in ``_ckernels.pyx`` with the same signature
and the same floating-point operation order, so both backends agree to the
last bit on the same input.
"""
import numpy as np


def propagate_potential(ceff, cluster, vs, decay, v0):
    """Integrate body potentials sample by sample.

    Parameters
    ----------
    ceff : (n_agents, n) float64
        Effective capacitance of each agent at each sample (pF). Inside a
        coupled cluster this includes the agent's share of the coupling
        capacitance.
    cluster : (n_agents, n) int64
        Cluster id per agent and sample. Agents sharing an id at sample k are
        electrically merged and end the sample at one common potential.
    vs : float
        Rest potential the front end relaxes towards.
    decay : float
        Per-sample relaxation factor ``exp(-dt / tau)``.
    v0 : float
        Initial potential of every agent.

    Returns
    -------
    (n_agents, n) float64 potentials.
    """
    ceff = np.ascontiguousarray(ceff, dtype=np.float64)
    cluster = np.ascontiguousarray(cluster, dtype=np.int64)
    n_agents, n = ceff.shape
    out = np.empty((n_agents, n), dtype=np.float64)
    if n == 0:
        return out
    cap = ceff.tolist()
    cl = cluster.tolist()
    v = [float(v0)] * n_agents
    prev = [cap[a][0] for a in range(n_agents)]
    q = [0.0] * n_agents
    c = [0.0] * n_agents
    rows = [[0.0] * n for _ in range(n_agents)]
    for k in range(n):
        for a in range(n_agents):
            v[a] = vs + (v[a] - vs) * decay
            q[a] = 0.0
            c[a] = 0.0
        for a in range(n_agents):
            g = cl[a][k]
            q[g] += prev[a] * v[a]
            c[g] += cap[a][k]
        for a in range(n_agents):
            g = cl[a][k]
            v[a] = q[g] / c[g]
            rows[a][k] = v[a]
            prev[a] = cap[a][k]
    out[:] = rows
    return out


def window_majority(codes, valid, starts, length):
    """Majority label code per window, ties going to the earliest occurrence.

    Returns ``(majority, count, tie, invalid)`` arrays, one entry per window.
    """
    codes = np.ascontiguousarray(codes, dtype=np.int64)
    valid = np.ascontiguousarray(valid, dtype=np.uint8)
    starts = np.ascontiguousarray(starts, dtype=np.int64)
    m = len(starts)
    majority = np.empty(m, dtype=np.int64)
    count = np.empty(m, dtype=np.int64)
    tie = np.zeros(m, dtype=bool)
    invalid = np.zeros(m, dtype=bool)
    for w, s in enumerate(starts):
        seg = codes[s:s + length]
        uniq, first, cnt = np.unique(seg, return_index=True, return_counts=True)
        best = cnt.max()
        cands = np.flatnonzero(cnt == best)
        pick = cands[np.argmin(first[cands])]
        majority[w] = uniq[pick]
        count[w] = best
        tie[w] = len(cands) > 1
        invalid[w] = not valid[s:s + length].all()
    return majority, count, tie, invalid


def soft_vote(probas, radius):
    """Argmax of the mean probability vector over ``[t - radius, t + radius]``."""
    probas = np.ascontiguousarray(probas, dtype=np.float64)
    n = probas.shape[0]
    out = np.empty(n, dtype=np.int64)
    for t in range(n):
        lo = max(0, t - radius)
        hi = min(n, t + radius + 1)
        acc = probas[lo].copy()
        for j in range(lo + 1, hi):
            acc += probas[j]
        out[t] = int(np.argmax(acc / (hi - lo)))
    return out
