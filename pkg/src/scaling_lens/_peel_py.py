"""Pure-Python peeling kernel, used when the compiled extension is absent.

Same contract as ``scaling_lens._peel.peel_kernel``: operates on the
reverse (concept -> texts) CSR adjacency plus per-text counters of
unknown neighbors and sums of their ids.  When a text's counter reaches 1
the sum IS the id of its unique unknown neighbor, so each peel step is
O(1) plus the fan-out updates; total work is O(edges).  The result is
independent of processing order (peeling is confluent), so this kernel
and the compiled one produce identical outputs.
"""


def peel_kernel(rev_indptr, rev_indices, cnt, ssum, learned, stack):
    """Peel to completion in place; returns the number of concepts learned."""
    rp = rev_indptr.tolist()
    ri = rev_indices.tolist()
    c = cnt.tolist()
    s = ssum.tolist()
    lrn = learned.tolist()

    todo = [t for t in range(len(c)) if c[t] == 1]
    n_peeled = 0
    while todo:
        t = todo.pop()
        if c[t] != 1:
            continue
        r = s[t]
        lrn[r] = 1
        n_peeled += 1
        for k in range(rp[r], rp[r + 1]):
            t2 = ri[k]
            c[t2] -= 1
            s[t2] -= r
            if c[t2] == 1:
                todo.append(t2)

    learned[:] = lrn
    cnt[:] = c
    ssum[:] = s
    return n_peeled
