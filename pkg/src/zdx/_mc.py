"""Numba kernels for excursion sampling.

Both kernels take a ``numpy.random.Generator`` and draw uniforms from it, so a
stream fully determines the output.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(nogil=True, cache=True)
def _pick(cum_row, u):
    j = 0
    while u >= cum_row[j]:
        j += 1
    return j


@njit(nogil=True, cache=True)
def chain_excursions(succ, cum, node_site, start_nodes, start_cum, n_exc, n_sites, chained, first_node, gen):
    """Excursions of a finite chain from a node of site 0 back to site 0.

    Returns visits (n_exc, n_sites) with the origin counted once, the number
    of chain steps per excursion, and the node at the final return.
    """
    visits = np.zeros((n_exc, n_sites), dtype=np.int64)
    steps = np.zeros(n_exc, dtype=np.int64)
    node = first_node
    for e in range(n_exc):
        if e > 0 or node < 0:
            if not chained or node < 0:
                node = start_nodes[_pick(start_cum, gen.random())]
        visits[e, 0] = 1
        k = 0
        while True:
            node = succ[node, _pick(cum[node], gen.random())]
            k += 1
            s = node_site[node]
            if s == 0:
                break
            if s > 0:
                visits[e, s] += 1
        steps[e] = k
    return visits, steps, node


@njit(nogil=True, cache=True)
def direct_excursions(nxt, step, cum, table, bits, lookup, W, d, start_cum, n_exc, n_sites, cap,
                      chained, first_state, gen):
    """Excursions of the lattice walk itself from 0 until the first return.

    ``nxt[s, k]``/``step[s, k]``/``cum[s, k]``: choice k from state s leads to
    state nxt and displacement step.  When ``bits`` > 0 the law is dyadic and
    ``table[s, r]`` maps ``bits`` random bits r to a choice (52 bits per
    uniform).  ``lookup`` maps |x|_inf <= W to a tracked-site index (-1 for
    none).  Excursions reaching ``cap`` steps are marked censored.
    """
    visits = np.zeros((n_exc, n_sites), dtype=np.int64)
    lengths = np.zeros(n_exc, dtype=np.int64)
    censored = np.zeros(n_exc, dtype=np.bool_)
    mask = (1 << bits) - 1 if bits > 0 else 0
    per = 52 // bits if bits > 0 else 0
    buf = 0
    left = 0
    state = first_state
    for e in range(n_exc):
        if e > 0 or state < 0:
            if not chained or state < 0 or censored[e - 1]:
                state = _pick(start_cum, gen.random())
        visits[e, 0] = 1
        x = 0
        y = 0
        k = 0
        while True:
            if bits > 0:
                if left == 0:
                    buf = np.int64(gen.random() * 4503599627370496.0)
                    left = per
                c = table[state, buf & mask]
                buf >>= bits
                left -= 1
            else:
                c = _pick(cum[state], gen.random())
            x += step[state, c, 0]
            if d == 2:
                y += step[state, c, 1]
            state = nxt[state, c]
            k += 1
            if x == 0 and y == 0:
                break
            if -W <= x <= W and -W <= y <= W:
                s = lookup[x + W, y + W]
                if s > 0:
                    visits[e, s] += 1
            if k >= cap:
                censored[e] = True
                break
        lengths[e] = k
    return visits, lengths, censored, state


@njit(nogil=True, cache=True)
def birkhoff_sums(nxt, step, cum, table, bits, beta, W, d, start_cum, checkpoints, n_traj, gen):
    """Z_n = sum_{k=1}^n beta(S_k) at each checkpoint n, for ``n_traj`` trajectories from S_0 = 0.

    ``beta`` is a dense array over |x|_inf <= W (indexed [x+W, y+W]).
    Tables are as in :func:`direct_excursions`.
    """
    n_cp = len(checkpoints)
    out = np.zeros((n_traj, n_cp))
    mask = (1 << bits) - 1 if bits > 0 else 0
    per = 52 // bits if bits > 0 else 0
    buf = 0
    left = 0
    n_max = checkpoints[n_cp - 1]
    for t in range(n_traj):
        state = _pick(start_cum, gen.random())
        x = 0
        y = 0
        z = 0.0
        c_i = 0
        for k in range(1, n_max + 1):
            if bits > 0:
                if left == 0:
                    buf = np.int64(gen.random() * 4503599627370496.0)
                    left = per
                c = table[state, buf & mask]
                buf >>= bits
                left -= 1
            else:
                c = _pick(cum[state], gen.random())
            x += step[state, c, 0]
            if d == 2:
                y += step[state, c, 1]
            state = nxt[state, c]
            if -W <= x <= W and -W <= y <= W:
                z += beta[x + W, y + W]
            if k == checkpoints[c_i]:
                out[t, c_i] = z
                c_i += 1
    return out
