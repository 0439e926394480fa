"""Pure-Python simple-path enumeration over bitmask adjacency."""


def _component(adj, start, blocked):
    seen = 1 << start
    frontier = seen
    while frontier:
        nxt = 0
        f = frontier
        while f:
            b = f & -f
            f ^= b
            nxt |= adj[b.bit_length() - 1]
        nxt &= ~seen & ~blocked
        seen |= nxt
        frontier = nxt
    return seen


def simple_path_ends(adj, start, prune=True):
    """Endpoints of simple paths leaving ``start``, grouped by first hop.

    Returns a list ``ends`` with ``ends[x]`` the bitmask of every vertex ``z``
    such that a simple path ``start, x, ..., z`` exists (``z == x`` included).
    ``adj[v]`` is the neighbour bitmask of ``v``; parallel edges collapse.

    Paths are enumerated depth-first with an explicit on-path mask. With
    ``prune`` the search from a first hop stops once every vertex of its
    component in ``G - start`` has been reached.
    """
    n = len(adj)
    ends = [0] * n
    start_bit = 1 << start
    hops = adj[start] & ~start_bit
    while hops:
        xb = hops & -hops
        hops ^= xb
        x = xb.bit_length() - 1
        target = _component(adj, x, start_bit) if prune else -1
        acc = xb
        onpath = start_bit | xb
        stack = [(x, adj[x] & ~onpath)]
        while stack:
            if acc == target:
                break
            v, rem = stack[-1]
            if not rem:
                stack.pop()
                onpath &= ~(1 << v)
                continue
            wb = rem & -rem
            stack[-1] = (v, rem ^ wb)
            acc |= wb
            onpath |= wb
            stack.append((wb.bit_length() - 1, adj[wb.bit_length() - 1] & ~onpath))
        ends[x] = acc
    return ends


def count_simple_paths(adj, start):
    """Number of simple paths with at least two vertices starting at ``start``."""
    total = 0
    stack = [(start, adj[start] & ~(1 << start))]
    onpath = 1 << start
    while stack:
        v, rem = stack[-1]
        if not rem:
            stack.pop()
            onpath &= ~(1 << v)
            continue
        wb = rem & -rem
        stack[-1] = (v, rem ^ wb)
        total += 1
        onpath |= wb
        w = wb.bit_length() - 1
        stack.append((w, adj[w] & ~onpath))
    return total
