"""Independent reference implementations used as test oracles.

Everything here is evaluated with mpmath at 50 digits straight from the
defining formulas, term by term, and never calls into v2xrelay's numeric code.
"""


import mpmath as mp

mp.mp.dps = 50


def relay_signal(y, q_src, h_src, s2_relay):
    return [mp.sqrt(q_src) * h_src * mp.mpf(v) + s2_relay for v in y]


def dest_signal(y, q_src, h_src, s2_relay, q_relay, h_dst, s2_dest):
    return [mp.sqrt(q_relay) * h_dst * v + s2_dest for v in relay_signal(y, q_src, h_src, s2_relay)]


def combined_signal(y, q_src, relays, s2_dest):
    """relays: iterable of (h_src, h_dst, q_relay, s2_relay)."""
    out = [mp.mpf(0)] * len(y)
    L = 0
    for h_src, h_dst, q_r, s2_r in relays:
        L += 1
        for k, v in enumerate(y):
            out[k] += mp.sqrt(q_r) * h_dst * (mp.sqrt(q_src) * h_src * v + s2_r)
    return [v + L * s2_dest for v in out]


def combined_snr(q_src, y_sq, relays, s2_dest):
    num = mp.mpf(0)
    den = mp.mpf(0)
    L = 0
    for h_src, h_dst, q_r, s2_r in relays:
        L += 1
        num += mp.sqrt(q_r) * h_dst * mp.sqrt(q_src) * h_src
        den += mp.sqrt(q_r) * h_dst * s2_r
    return num**2 * y_sq / (den**2 + (L * mp.mpf(s2_dest)) ** 2)


def single_snr(q_src, y_sq, h_src, h_dst, q_r, s2_r):
    U = abs(mp.sqrt(q_r) * h_dst * mp.sqrt(q_src) * h_src) * mp.sqrt(y_sq)
    I = abs(mp.sqrt(q_r) * h_dst * s2_r)
    return (U / I) ** 2


def capacity(snr, bandwidth=1):
    return mp.mpf(1) / 2 * mp.log(1 + snr, 2) * bandwidth


def grid_search_allocation(q_src, y_sq, relays, s2_dest, total, quantum, mins):
    """Best combined SNR over every split on the quantum grid.

    ``relays`` as in :func:`combined_snr` but without powers:
    (h_src, h_dst, s2_relay).  Each power is ``min_w + k * quantum``.
    Float arithmetic, fully enumerated.
    """
    import numpy as np

    L = len(relays)
    free = int(round((total - sum(mins)) / quantum))
    h_src = np.array([r[0] for r in relays])
    h_dst = np.array([r[1] for r in relays])
    s2 = np.array([r[2] for r in relays])
    best, best_p = -1.0, None
    if L == 1:
        combos = np.array([[free]])
    elif L == 2:
        k = np.arange(free + 1)
        combos = np.stack([k, free - k], axis=1)
    else:
        rows = [(a, b, free - a - b) for a in range(free + 1) for b in range(free + 1 - a)]
        combos = np.array(rows)
    P = np.asarray(mins)[None, :] + combos * quantum
    amp = np.sqrt(P) * h_dst
    num = (amp @ h_src) ** 2 * q_src * y_sq
    den = (amp @ s2) ** 2 + (L * s2_dest) ** 2
    snr = num / den
    k = int(np.argmax(snr))
    return float(snr[k]), P[k]


def naive_topk(keys, ids, L):
    """Sort by descending key, ties by ascending id, with plain Python."""
    pairs = sorted(zip(keys, ids), key=lambda t: (-t[0], t[1]))
    return [i for _, i in pairs[:L]]
