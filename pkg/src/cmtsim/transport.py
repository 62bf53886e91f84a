"""Reliable multipath transport: sender association and receiver.

One data chunk per packet, sequenced by a single TSN space that is striped
round-robin across paths.  The receiver acks with cumulative TSN plus gap
blocks; acks are delayed (every 2nd packet or a 200 ms timer) except that
any out-of-order arrival, gap fill or duplicate acks immediately.

Loss detection is per path: a missing chunk collects one report for every
ack that newly covers a higher TSN last sent on the same path, and is fast
retransmitted at the report threshold.  Each path takes at most one
fast-retransmit window cut per flight of data.  Fast retransmissions go
out immediately, bypassing the window check; they are routed to the path
with the largest slow-start threshold by default and never produce RTT
samples.

A per-path retransmission timer backs off exponentially and resets on the
next RTT sample.  When it fires, the whole flight on that path is presumed
lost: every chunk is marked for retransmission and leaves the window
accounting, one is resent at once, and the rest drain ahead of new data as
windows allow.  All of this is controller-agnostic; window decisions live
behind the congestion hook contract.
"""

from bisect import bisect_right
from functools import partial

from .netsim import CTRL, DATA, Packet

CHUNK_BYTES = 1452       # user payload per chunk, one chunk per packet
HEADER_BYTES = 48        # per-packet overhead on the wire
SACK_BASE_BYTES = 60
SACK_GAP_BYTES = 4


class Chunk:
    __slots__ = ("tsn", "size", "path", "sent_at", "rtx", "miss", "frtx_done",
                 "rtx_pending")

    def __init__(self, tsn, size):
        self.tsn = tsn
        self.size = size
        self.path = -1
        self.sent_at = 0.0
        self.rtx = False
        self.miss = 0
        self.frtx_done = False
        self.rtx_pending = False


class PathState:
    """Transport-side per-path state; window state lives in the controller."""

    def __init__(self, path_id, route, rto_initial):
        self.path_id = path_id
        self.route = route
        self.out_bytes = 0
        self.out_tsns = set()
        self.srtt = None
        self.rttvar = None
        self.rto = rto_initial
        self.backoff = 1
        self.probe_chunk = None
        self.probe_time = 0.0
        self.hi_acked = 0        # highest TSN acked that was last sent here
        self.hi_sent = 0
        self.recovery_exit = None
        self.rto_timer = None
        self.fast_rtx = 0
        self.timeouts = 0


class Association:
    """Sender side: send queue, outstanding chunks, ack processing."""

    def __init__(self, sim, net, cc, chunk_bytes=CHUNK_BYTES,
                 header_bytes=HEADER_BYTES, dupthresh=4, rto_initial=1.0,
                 rto_min=1.0, rto_max=60.0, rtx_policy="rtx-ssthresh",
                 flow="sctp"):
        if rtx_policy not in ("rtx-ssthresh", "rtx-same"):
            raise ValueError(f"bad rtx policy {rtx_policy!r}")
        self.sim = sim
        self.net = net
        self.cc = cc
        self.chunk_bytes = chunk_bytes
        self.header_bytes = header_bytes
        self.dupthresh = dupthresh
        self.rto_initial = rto_initial
        self.rto_min = rto_min
        self.rto_max = rto_max
        self.rtx_policy = rtx_policy
        self.flow = flow
        self.paths = []
        self.send_queue = 0
        self.next_tsn = 1
        self.outstanding = {}
        self.rtx_queue = []       # chunks marked at timeout, awaiting resend
        self.cum_floor = 0
        self._rr = 0
        self.sacks_received = 0
        self.data_sent = 0
        self.cc_events = []       # (time, path, kind, w_before, w_after, ssthresh, beta)
        cc.bind_srtt(self.srtt_for)

    def set_routes(self, routes):
        self.paths = [PathState(i, r, self.rto_initial)
                      for i, r in enumerate(routes)]

    def srtt_for(self, path):
        return self.paths[path].srtt

    def enqueue(self, n_bytes):
        self.send_queue += n_bytes
        self.try_send()

    def total_outstanding(self):
        return sum(ps.out_bytes for ps in self.paths)

    def _pick_path(self):
        n = len(self.paths)
        for k in range(n):
            i = (self._rr + k) % n
            if self.paths[i].out_bytes < self.cc.cwnd(i):
                self._rr = (i + 1) % n
                return self.paths[i]
        return None

    def _pending_rtx(self):
        """First chunk still owed a retransmission, dropping stale entries."""
        while self.rtx_queue:
            ch = self.rtx_queue[0]
            if ch.rtx_pending and ch.tsn in self.outstanding:
                return ch
            self.rtx_queue.pop(0)
        return None

    def try_send(self):
        """Emit chunks while some path's window has room.

        Chunks marked for retransmission go first, each to the policy path
        and only when that path's window has room; new data is held back
        until the mark queue is empty.  A path may send whenever
        outstanding is below the window, so it can overshoot by at most
        one chunk; that slack is what lets an ack see the window as fully
        used.
        """
        now = self.sim.now
        while True:
            ch = self._pending_rtx()
            if ch is None:
                break
            dest = self._rtx_dest(self.paths[ch.path])
            if dest.out_bytes >= self.cc.cwnd(dest.path_id):
                return
            self.rtx_queue.pop(0)
            self._retransmit(ch, now)
        while self.send_queue > 0:
            ps = self._pick_path()
            if ps is None:
                return
            size = min(self.chunk_bytes, self.send_queue)
            self.send_queue -= size
            tsn = self.next_tsn
            self.next_tsn = tsn + 1
            ch = Chunk(tsn, size)
            self.outstanding[tsn] = ch
            self._transmit(ch, ps, now, fresh=True)

    def _transmit(self, ch, ps, now, fresh):
        ch.path = ps.path_id
        ch.sent_at = now
        ps.out_bytes += ch.size
        ps.out_tsns.add(ch.tsn)
        if ch.tsn > ps.hi_sent:
            ps.hi_sent = ch.tsn
        if fresh and ps.probe_chunk is None:
            ps.probe_chunk = ch
            ps.probe_time = now
        pkt = Packet(DATA, ch.size + self.header_bytes, self.flow,
                     ps.path_id, (ch.tsn, ch.size))
        self.net.send(ps.route, pkt)
        self.data_sent += 1
        if ps.rto_timer is None:
            ps.rto_timer = self.sim.at(now + ps.rto, partial(self._on_rto, ps))

    # ---- ack path ----

    def on_ctrl(self, pkt):
        cum, gaps, _rwnd = pkt.payload
        self.on_sack(cum, gaps, pkt.path, self.sim.now)

    def on_sack(self, cum, gaps, arrival_path, now):
        self.sacks_received += 1
        n = len(self.paths)
        pre_out = [ps.out_bytes for ps in self.paths]
        pre_w = [self.cc.cwnd(i) for i in range(n)]
        newly = []
        if cum > self.cum_floor:
            if cum - self.cum_floor < len(self.outstanding):
                span = range(self.cum_floor + 1, cum + 1)
            else:
                span = sorted(t for t in self.outstanding if t <= cum)
            for tsn in span:
                ch = self.outstanding.pop(tsn, None)
                if ch is not None:
                    newly.append(ch)
            self.cum_floor = cum
        if gaps:
            # Blocks can span thousands of TSNs the sender already saw
            # acked, so scan the (small) unacked set instead of the ranges.
            starts = [g[0] for g in gaps]
            hi_gap = gaps[-1][1]
            covered = sorted(t for t in self.outstanding if t <= hi_gap)
            for tsn in covered:
                j = bisect_right(starts, tsn) - 1
                if j >= 0 and tsn <= gaps[j][1]:
                    newly.append(self.outstanding.pop(tsn))
        if not newly:
            return
        d = [0] * n
        hi_new = [0] * n
        for ch in newly:
            ps = self.paths[ch.path]
            if ch.rtx_pending:
                # Original copy arrived before the queued resend went out;
                # its bytes already left the flight when it was marked.
                ch.rtx_pending = False
            else:
                ps.out_bytes -= ch.size
                ps.out_tsns.discard(ch.tsn)
            d[ch.path] += ch.size
            if ch.tsn > hi_new[ch.path]:
                hi_new[ch.path] = ch.tsn
            if ps.probe_chunk is ch:
                if not ch.rtx:
                    self._rtt_update(ps, now - ps.probe_time)
                ps.probe_chunk = None
        for ps in self.paths:
            if ps.recovery_exit is not None:
                live = ps.out_tsns
                if not live or min(live) > ps.recovery_exit:
                    ps.recovery_exit = None
        to_rtx = []
        for i in range(n):
            hi = hi_new[i]
            if hi == 0:
                continue
            ps = self.paths[i]
            if hi > ps.hi_acked:
                ps.hi_acked = hi
            for tsn in ps.out_tsns:
                if tsn >= hi:
                    continue
                ch = self.outstanding[tsn]
                ch.miss += 1
                if ch.miss >= self.dupthresh and not ch.frtx_done:
                    ch.frtx_done = True
                    to_rtx.append(ch)
        to_rtx.sort(key=lambda c: c.tsn)
        for ch in to_rtx:
            ps = self.paths[ch.path]
            ps.fast_rtx += 1
            if ps.recovery_exit is None:
                ps.recovery_exit = ps.hi_sent
                self._cc_cut("fast_rtx", ps.path_id, now)
            self._retransmit(ch, now)
        for i in range(n):
            ps = self.paths[i]
            if not ps.out_tsns:
                if ps.rto_timer is not None:
                    ps.rto_timer.cancel()
                    ps.rto_timer = None
            elif d[i] > 0:
                if ps.rto_timer is not None:
                    ps.rto_timer.cancel()
                ps.rto_timer = self.sim.at(now + ps.rto,
                                           partial(self._on_rto, ps))
        for i in range(n):
            if d[i] > 0:
                self.cc.on_bytes_acked(i, d[i], now)
                self.cc.on_increase_check(i, d[i], pre_out[i] >= pre_w[i])
        self.try_send()

    def _rtt_update(self, ps, sample):
        if sample <= 0:
            raise ValueError(f"bad rtt sample {sample!r}")
        if ps.srtt is None:
            ps.srtt = sample
            ps.rttvar = sample / 2.0
        else:
            ps.rttvar = 0.75 * ps.rttvar + 0.25 * abs(ps.srtt - sample)
            ps.srtt = 0.875 * ps.srtt + 0.125 * sample
        ps.backoff = 1
        ps.rto = min(max(ps.srtt + 4.0 * ps.rttvar, self.rto_min),
                     self.rto_max)

    def _cc_cut(self, kind, path, now):
        w_before = self.cc.cwnd(path)
        beta = self.cc.beta_of(path)
        if kind == "fast_rtx":
            self.cc.on_fast_rtx(path)
        else:
            self.cc.on_timeout(path)
        self.cc_events.append((now, path, kind, w_before, self.cc.cwnd(path),
                               self.cc.ssthresh(path), beta))

    def _rtx_dest(self, origin):
        if self.rtx_policy == "rtx-same" or len(self.paths) == 1:
            return origin
        best = None
        for ps in self.paths:
            if best is None or self.cc.ssthresh(ps.path_id) > self.cc.ssthresh(best.path_id):
                best = ps
        return best

    def _retransmit(self, ch, now):
        old = self.paths[ch.path]
        if old.probe_chunk is ch:
            old.probe_chunk = None
        if ch.rtx_pending:
            ch.rtx_pending = False
        else:
            old.out_bytes -= ch.size
            old.out_tsns.discard(ch.tsn)
        ch.rtx = True
        ch.miss = 0
        self._transmit(ch, self._rtx_dest(old), now, fresh=False)

    def _on_rto(self, ps):
        ps.rto_timer = None
        if not ps.out_tsns:
            return
        now = self.sim.now
        ps.timeouts += 1
        ps.backoff *= 2
        ps.rto = min(ps.rto * 2.0, self.rto_max)
        ps.recovery_exit = None
        self._cc_cut("timeout", ps.path_id, now)
        # The whole flight on this path is presumed lost: move it out of the
        # window accounting and owe every chunk a retransmission.  One goes
        # out immediately; the rest drain ahead of new data as windows allow.
        marked = [self.outstanding[t] for t in sorted(ps.out_tsns)]
        for ch in marked:
            ch.rtx_pending = True
            ch.miss = 0
            ch.frtx_done = False
        ps.out_tsns.clear()
        ps.out_bytes = 0
        self.rtx_queue.extend(marked)
        self.rtx_queue.sort(key=lambda c: c.tsn)
        first = self._pending_rtx()
        if first is not None:
            self.rtx_queue.pop(0)
            self._retransmit(first, now)
        self.try_send()


class Receiver:
    """Receiver side: reorder buffer, cumulative ack, delayed-SACK policy."""

    def __init__(self, sim, net, rwnd=16_000_000, delack_factor=2,
                 delack_timeout=0.2, on_deliver=None, flow="sctp"):
        self.sim = sim
        self.net = net
        self.rwnd = rwnd
        self.delack_factor = delack_factor
        self.delack_timeout = delack_timeout
        self.on_deliver = on_deliver
        self.flow = flow
        self.rev_routes = []
        self.cum = 0
        self._buf = {}
        self._blocks = []        # sorted disjoint [start, end] runs in _buf
        self._buffered_bytes = 0
        self._delack = 0
        self._delack_timer = None
        self._pending_rev = None
        self.delivered_bytes = 0
        self.delivered_chunks = 0
        self.received = 0
        self.dups = 0
        self.sacks_sent = 0

    def set_routes(self, rev_routes):
        self.rev_routes = list(rev_routes)

    def on_data(self, pkt):
        tsn, size = pkt.payload
        self.received += 1
        rev = self.rev_routes[pkt.path]
        if tsn <= self.cum or tsn in self._buf:
            self.dups += 1
            self._send_sack(rev)
            return
        immediate = tsn != self.cum + 1 or bool(self._buf)
        if tsn == self.cum + 1:
            self.cum = tsn
            self._deliver(size)
            if self._blocks and self._blocks[0][0] == self.cum + 1:
                start, end = self._blocks.pop(0)
                for t in range(start, end + 1):
                    nxt = self._buf.pop(t)
                    self._buffered_bytes -= nxt
                    self.cum = t
                    self._deliver(nxt)
        else:
            self._buf[tsn] = size
            self._buffered_bytes += size
            self._insert_block(tsn)
        if immediate:
            self._send_sack(rev)
            return
        self._delack += 1
        if self._delack >= self.delack_factor:
            self._send_sack(rev)
        else:
            self._pending_rev = rev
            if self._delack_timer is None:
                self._delack_timer = self.sim.after(self.delack_timeout,
                                                    self._on_delack_timer)

    def _deliver(self, size):
        self.delivered_bytes += size
        self.delivered_chunks += 1
        if self.on_deliver is not None:
            self.on_deliver(size, self.sim.now)

    def _on_delack_timer(self):
        self._delack_timer = None
        self._send_sack(self._pending_rev)

    def _insert_block(self, tsn):
        """Merge tsn into the sorted disjoint run list (tsn not buffered yet)."""
        bl = self._blocks
        i = 0
        while i < len(bl) and bl[i][1] + 1 < tsn:
            i += 1
        if i == len(bl):
            bl.append([tsn, tsn])
        elif tsn == bl[i][1] + 1:
            bl[i][1] = tsn
            if i + 1 < len(bl) and bl[i + 1][0] == tsn + 1:
                bl[i][1] = bl[i + 1][1]
                del bl[i + 1]
        elif tsn == bl[i][0] - 1:
            bl[i][0] = tsn
        else:
            bl.insert(i, [tsn, tsn])

    def _gap_blocks(self):
        return [(s, e) for s, e in self._blocks]

    def _send_sack(self, rev):
        self._delack = 0
        if self._delack_timer is not None:
            self._delack_timer.cancel()
            self._delack_timer = None
        gaps = tuple(self._gap_blocks())
        size = SACK_BASE_BYTES + SACK_GAP_BYTES * len(gaps)
        pkt = Packet(CTRL, size, self.flow, rev.path_id,
                     (self.cum, gaps, self.rwnd - self._buffered_bytes))
        self.net.send(rev, pkt)
        self.sacks_sent += 1
