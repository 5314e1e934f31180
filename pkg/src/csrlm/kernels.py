"""Hot loops of the generation process.

Every function here is compiled by numba when available (see ``_accel``) and
otherwise runs as ordinary Python. Symbol indices are 1-based; 0 marks a
missing neighbour. Random numbers are drawn exclusively through
``rng.random()`` so that jitted and interpreted runs consume the same stream.

Sentences under construction are kept as a doubly linked list over node ids
plus a swap-remove pool of non-terminal node ids, which makes every rule
application O(1) regardless of sentence length.
"""

from __future__ import annotations

import math

import numpy as np

from ._accel import jit

RULE_TERMINAL = 0
RULE_BRANCH = 1
RULE_CONTEXT = 2

OUT_EMITTED = 0
OUT_BRANCHED = 1
OUT_FLIP_ACCEPTED = 2
OUT_FLIP_REJECTED = 3
OUT_NOOP = 4

STATUS_REACHED = 0
STATUS_COMPLETE = 1
STATUS_RUNAWAY = 2


@jit
def uniform_index(rng, n):
    """Uniform integer in ``[0, n)`` from a single double."""
    i = int(rng.random() * n)
    if i >= n:
        i = n - 1
    return i


@jit
def draw_rule(rng, q, t):
    u = rng.random()
    if u < q * t:
        return RULE_TERMINAL
    if u < q:
        return RULE_BRANCH
    return RULE_CONTEXT


@jit
def draw_child(rng, k, K, eps):
    # With prob. eps redraw uniformly over all K symbols, else copy the parent:
    # P(same) = 1 - eps + eps/K = 1 - (K-1) eps/K, P(other) = eps/K each.
    if rng.random() < eps:
        return 1 + uniform_index(rng, K)
    return k


@jit
def draw_other(rng, k, K):
    j = 1 + uniform_index(rng, K - 1)
    if j >= k:
        j += 1
    return j


@jit
def local_delta_energy(cur, new, left, right, J):
    """Energy change of replacing ``cur`` by ``new`` between ``left`` and ``right``.

    A neighbour value of 0 means there is no neighbour on that side.
    """
    d = 0
    if left != 0:
        d += int(cur == left) - int(new == left)
    if right != 0:
        d += int(cur == right) - int(new == right)
    return J * d


@jit
def metropolis(rng, dE, kT):
    if dE <= 0.0:
        return True
    return rng.random() < math.exp(-dE / kT)


@jit
def derive(sym, term, nxt, prv, ntl, ntp, root, K, J, q, t, eps, kT, stop_len, cap, rng):
    """Run one derivation from a single non-terminal ``root``.

    Stops when the sentence length reaches ``stop_len``, when no non-terminal
    is left, or when the length exceeds ``cap``. Node 0 is always the head.
    Returns ``(status, length, tail)``.
    """
    sym[0] = root
    term[0] = False
    nxt[0] = -1
    prv[0] = -1
    ntl[0] = 0
    ntp[0] = 0
    n = 1
    n_nt = 1
    tail = 0
    qt = q * t
    while True:
        if n >= stop_len:
            return STATUS_REACHED, n, tail
        if n_nt == 0:
            return STATUS_COMPLETE, n, tail
        if n > cap:
            return STATUS_RUNAWAY, n, tail
        u = rng.random()
        if u < qt:
            idx = uniform_index(rng, n_nt)
            x = ntl[idx]
            term[x] = True
            last = ntl[n_nt - 1]
            ntl[idx] = last
            ntp[last] = idx
            ntp[x] = -1
            n_nt -= 1
        elif u < q:
            idx = uniform_index(rng, n_nt)
            x = ntl[idx]
            k = sym[x]
            y = draw_child(rng, k, K, eps)
            z = draw_child(rng, k, K, eps)
            m = n
            sym[x] = y
            sym[m] = z
            term[m] = False
            nx = nxt[x]
            nxt[m] = nx
            prv[m] = x
            if nx != -1:
                prv[nx] = m
            else:
                tail = m
            nxt[x] = m
            ntl[n_nt] = m
            ntp[m] = n_nt
            n_nt += 1
            n += 1
        elif K >= 2:
            idx = uniform_index(rng, n_nt)
            x = ntl[idx]
            k = sym[x]
            new = draw_other(rng, k, K)
            left = sym[prv[x]] if prv[x] != -1 else 0
            right = sym[nxt[x]] if nxt[x] != -1 else 0
            if metropolis(rng, local_delta_energy(k, new, left, right, J), kT):
                sym[x] = new


@jit
def flatten(sym, term, nxt, out_sym, out_term, offset, limit):
    """Copy the linked sentence starting at node 0 into ``out_*[offset:]``.

    At most ``limit`` cells are copied; returns the number copied.
    """
    x = 0
    c = 0
    while x != -1 and c < limit:
        out_sym[offset + c] = sym[x]
        out_term[offset + c] = term[x]
        c += 1
        x = nxt[x]
    return c


def _node_buffers(size):
    return (
        np.zeros(size, np.int64),
        np.zeros(size, np.bool_),
        np.zeros(size, np.int64),
        np.zeros(size, np.int64),
        np.zeros(size, np.int64),
        np.zeros(size, np.int64),
    )


node_buffers = jit(_node_buffers)


@jit
def grow_fixed(K, J, q, t, eps, kT, target, rng):
    """Grow one sentence from a uniformly drawn root until it has ``target`` cells.

    Returns ``(status, symbols, terminal)``; status is ``STATUS_COMPLETE`` if
    every cell turned terminal first (only possible for ``t > 0``).
    """
    sym, term, nxt, prv, ntl, ntp = node_buffers(target + 1)
    root = 1 + uniform_index(rng, K)
    status, n, tail = derive(sym, term, nxt, prv, ntl, ntp, root, K, J, q, t, eps, kT,
                             target, target + 1, rng)
    out_sym = np.zeros(n, np.int64)
    out_term = np.zeros(n, np.bool_)
    flatten(sym, term, nxt, out_sym, out_term, 0, n)
    return status, out_sym, out_term


@jit
def grow_stream(K, J, q, t, eps, kT, target, cap, complete, rng):
    """Chain sentence derivations into a stream of ``target`` cells.

    Each sentence after the first starts from the symbol index of the last
    cell of its predecessor. With ``complete`` every sentence is derived to
    the end (a sentence longer than ``cap`` aborts with ``STATUS_RUNAWAY``);
    otherwise derivation stops as soon as the stream covers ``target`` cells.
    Returns ``(status, symbols, terminal, n_sentences)``.
    """
    size = cap + 2 if complete else target + 1
    sym, term, nxt, prv, ntl, ntp = node_buffers(size)
    out_sym = np.zeros(target, np.int64)
    out_term = np.zeros(target, np.bool_)
    filled = 0
    n_sent = 0
    root = 1 + uniform_index(rng, K)
    while filled < target:
        if complete:
            stop_len = cap + 2
        else:
            stop_len = target - filled
        status, n, tail = derive(sym, term, nxt, prv, ntl, ntp, root, K, J, q, t, eps, kT,
                                 stop_len, cap, rng)
        n_sent += 1
        if status == STATUS_RUNAWAY:
            return STATUS_RUNAWAY, out_sym[:filled], out_term[:filled], n_sent
        filled += flatten(sym, term, nxt, out_sym, out_term, filled, target - filled)
        root = sym[tail]
    return STATUS_REACHED, out_sym, out_term, n_sent


@jit
def context_updates(sym, term, K, J, kT, n_attempts, rng):
    """In-place context-rule attempts on a flat sentence; returns accepted count."""
    N = sym.shape[0]
    sites = np.flatnonzero(~term)
    n_nt = sites.shape[0]
    acc = 0
    if n_nt == 0 or K < 2:
        return acc
    for _ in range(n_attempts):
        x = sites[uniform_index(rng, n_nt)]
        k = sym[x]
        new = draw_other(rng, k, K)
        left = sym[x - 1] if x > 0 else 0
        right = sym[x + 1] if x < N - 1 else 0
        if metropolis(rng, local_delta_energy(k, new, left, right, J), kT):
            sym[x] = new
            acc += 1
    return acc


@jit
def context_sweeps_measure(sym, K, J, kT, n_sweeps, i, j, rng):
    """Context-only Metropolis on a fixed all non-terminal chain.

    After each sweep (``N`` attempts) records M^2 and the indicator
    ``sigma_i == sigma_j``. ``sym`` is updated in place.
    """
    N = sym.shape[0]
    counts = np.zeros(K + 1, np.int64)
    for x in range(N):
        counts[sym[x]] += 1
    s2 = 0
    for k in range(1, K + 1):
        s2 += counts[k] * counts[k]
    m2 = np.empty(n_sweeps)
    same = np.empty(n_sweeps)
    for s in range(n_sweeps):
        for _ in range(N):
            x = uniform_index(rng, N)
            k = sym[x]
            new = draw_other(rng, k, K)
            left = sym[x - 1] if x > 0 else 0
            right = sym[x + 1] if x < N - 1 else 0
            if metropolis(rng, local_delta_energy(k, new, left, right, J), kT):
                s2 += 2 * (counts[new] - counts[k]) + 2
                counts[k] -= 1
                counts[new] += 1
                sym[x] = new
        v = (K * s2 / (N * N) - 1.0) / (K - 1)
        m2[s] = v if v > 0.0 else 0.0
        same[s] = 1.0 if sym[i] == sym[j] else 0.0
    return m2, same
