# cython: language_level=3
"""Compiled simple-path enumeration; same contract as ``_pathenum_py``."""

from libc.stdint cimport uint64_t

DEF MAXN = 64


cdef inline int _low(uint64_t m) nogil:
    return __builtin_ctzll(m)


cdef extern from *:
    int __builtin_ctzll(unsigned long long) nogil


cdef uint64_t _component(uint64_t* adj, int start, uint64_t blocked) nogil:
    cdef uint64_t seen = (<uint64_t>1) << start
    cdef uint64_t frontier = seen
    cdef uint64_t nxt, f, b
    while frontier:
        nxt = 0
        f = frontier
        while f:
            b = f & (~f + 1)
            f ^= b
            nxt |= adj[_low(b)]
        nxt &= ~seen & ~blocked
        seen |= nxt
        frontier = nxt
    return seen


cdef uint64_t _ends_from(uint64_t* adj, int start, int x, bint prune) nogil:
    cdef int vstack[MAXN]
    cdef uint64_t rstack[MAXN]
    cdef int depth = 0
    cdef uint64_t start_bit = (<uint64_t>1) << start
    cdef uint64_t xb = (<uint64_t>1) << x
    cdef uint64_t target = 0
    cdef uint64_t acc = xb
    cdef uint64_t onpath = start_bit | xb
    cdef uint64_t rem, wb
    cdef int v, w
    if prune:
        target = _component(adj, x, start_bit)
    vstack[0] = x
    rstack[0] = adj[x] & ~onpath
    depth = 1
    while depth > 0:
        if prune and acc == target:
            break
        v = vstack[depth - 1]
        rem = rstack[depth - 1]
        if rem == 0:
            depth -= 1
            onpath &= ~((<uint64_t>1) << v)
            continue
        wb = rem & (~rem + 1)
        rstack[depth - 1] = rem ^ wb
        acc |= wb
        onpath |= wb
        w = _low(wb)
        vstack[depth] = w
        rstack[depth] = adj[w] & ~onpath
        depth += 1
    return acc


def simple_path_ends(adj, int start, bint prune=True):
    cdef int n = len(adj)
    cdef uint64_t cadj[MAXN]
    cdef int i, x
    cdef uint64_t hops, xb
    if n > MAXN:
        raise ValueError("compiled kernel supports at most 64 vertices")
    for i in range(n):
        cadj[i] = <uint64_t>adj[i]
    ends = [0] * n
    hops = cadj[start] & ~((<uint64_t>1) << start)
    while hops:
        xb = hops & (~hops + 1)
        hops ^= xb
        x = _low(xb)
        ends[x] = int(_ends_from(cadj, start, x, prune))
    return ends


def count_simple_paths(adj, int start):
    cdef int n = len(adj)
    cdef uint64_t cadj[MAXN]
    cdef int vstack[MAXN]
    cdef uint64_t rstack[MAXN]
    cdef int depth, v, w, i
    cdef uint64_t onpath, rem, wb
    cdef long long total = 0
    if n > MAXN:
        raise ValueError("compiled kernel supports at most 64 vertices")
    for i in range(n):
        cadj[i] = <uint64_t>adj[i]
    onpath = (<uint64_t>1) << start
    vstack[0] = start
    rstack[0] = cadj[start] & ~onpath
    depth = 1
    with nogil:
        while depth > 0:
            v = vstack[depth - 1]
            rem = rstack[depth - 1]
            if rem == 0:
                depth -= 1
                onpath &= ~((<uint64_t>1) << v)
                continue
            wb = rem & (~rem + 1)
            rstack[depth - 1] = rem ^ wb
            total += 1
            onpath |= wb
            w = _low(wb)
            vstack[depth] = w
            rstack[depth] = cadj[w] & ~onpath
            depth += 1
    return total
