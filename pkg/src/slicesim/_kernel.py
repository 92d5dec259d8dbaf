"""JIT-compiled inner loop of the base-station scheduler.

One call serves one slicing window for one slice. Queue state lives in the
caller-owned arrays so it carries across windows. Packets are stored
column-wise, sorted by arrival slot; `user_pkt`/`user_start` give a CSR view
grouping each user's packets in arrival order.

Mutable state per slice:
  user_head[u]      next unserved packet of user u (offset into its CSR row)
  head_remaining[u] unserved bytes of that packet (partial-packet carryover)
  state[0]          round-robin cursor (user whose turn is current)
  state[1]          number of enqueued, not yet departed packets
  state[2]          queued bytes
  state[3]          global pointer into the arrival-sorted packet arrays
"""

import numpy as np
from numba import njit

CURSOR, ELIGIBLE, QUEUED_BYTES, NEXT_ARRIVAL = 0, 1, 2, 3


@njit(cache=True)
def serve_window(
    pkt_arrival,
    pkt_size,
    user_pkt,
    user_start,
    user_head,
    head_remaining,
    state,
    window_start,
    window_slots,
    budget_per_slot,
):
    """Run the slot loop for one window; returns service and latency totals.

    Each slot enqueues the packets arriving in it, then serves up to
    budget_per_slot bytes round-robin across users at packet granularity.
    A packet's latency is (departure_slot - arrival_slot + 1), counted when
    its last byte is served.
    """
    n_pkt = pkt_arrival.shape[0]
    n_users = user_head.shape[0]

    cursor = state[CURSOR]
    eligible = state[ELIGIBLE]
    queued_bytes = state[QUEUED_BYTES]
    next_arrival = state[NEXT_ARRIVAL]

    served_bytes = np.int64(0)
    lat_sum = np.int64(0)
    lat_count = np.int64(0)
    departed = np.int64(0)

    for t in range(window_start, window_start + window_slots):
        while next_arrival < n_pkt and pkt_arrival[next_arrival] <= t:
            eligible += 1
            queued_bytes += pkt_size[next_arrival]
            next_arrival += 1
        if eligible == 0:
            continue
        budget = budget_per_slot
        while budget > 0 and eligible > 0:
            user = -1
            for k in range(n_users):
                cand = cursor + k
                if cand >= n_users:
                    cand -= n_users
                pos = user_start[cand] + user_head[cand]
                if pos < user_start[cand + 1] and pkt_arrival[user_pkt[pos]] <= t:
                    user = cand
                    break
            if user < 0:
                break
            pos = user_start[user] + user_head[user]
            pkt = user_pkt[pos]
            remaining = head_remaining[user]
            chunk = remaining if remaining <= budget else budget
            budget -= chunk
            remaining -= chunk
            served_bytes += chunk
            queued_bytes -= chunk
            if remaining == 0:
                lat_sum += t - pkt_arrival[pkt] + 1
                lat_count += 1
                departed += 1
                eligible -= 1
                user_head[user] += 1
                nxt = user_start[user] + user_head[user]
                if nxt < user_start[user + 1]:
                    head_remaining[user] = pkt_size[user_pkt[nxt]]
                else:
                    head_remaining[user] = 0
                cursor = user + 1
                if cursor >= n_users:
                    cursor = 0
            else:
                head_remaining[user] = remaining
                cursor = user  # resume this packet next slot

    oldest_arrival = np.int64(-1)
    if lat_count == 0 and queued_bytes > 0:
        for u in range(n_users):
            pos = user_start[u] + user_head[u]
            if pos < user_start[u + 1]:
                arr = pkt_arrival[user_pkt[pos]]
                if arr <= window_start + window_slots - 1 and (
                    oldest_arrival < 0 or arr < oldest_arrival
                ):
                    oldest_arrival = arr

    state[CURSOR] = cursor
    state[ELIGIBLE] = eligible
    state[QUEUED_BYTES] = queued_bytes
    state[NEXT_ARRIVAL] = next_arrival
    return served_bytes, lat_sum, lat_count, departed, oldest_arrival
