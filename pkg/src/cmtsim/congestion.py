"""Congestion controllers for the multipath sender.

Three controllers share one hook contract.  The transport calls the hooks,
reads windows back through accessors, and owns nothing else of the
congestion state:

    on_bytes_acked(path, d, now)      new bytes acked for chunks last sent
                                      on this path, before any growth
    on_increase_check(path, d, used)  window growth decision for this ack
    on_fast_rtx(path)                 loss detected by missing reports
    on_timeout(path)                  retransmission timer fired

``cmt-cc`` grows every path like an independent TCP flow: one MTU per
window of acked data in congestion avoidance, halving on loss.

``cmt-berp`` keeps a per-path bandwidth estimate fed by ack arrivals,
turns the estimates into per-path shares (beta), couples the avoidance
increase across paths through an aggressiveness factor (alpha), and on
loss shrinks a path by its own share of the pooled bandwidth instead of
a blind half.

``mptcp-coupled`` is the same code path with every share pinned to 0.5,
which reduces the loss cut to a plain halving; the bandwidth estimator
still runs so traces stay comparable.

All windows are bytes (floats), bandwidth is bytes/second internally and
bits/second in trace output.
"""

DEFAULT_FILTER_GAIN = 0.9


def bwe_sample(d_bytes, t_now, t_prev):
    """Raw bandwidth sample from one ack: bytes acked over time since the
    previous sample.  Returns None when no time has passed (two acks in the
    same instant), the caller must skip the update."""
    if t_now == t_prev:
        return None
    return d_bytes / (t_now - t_prev)


def bwe_filter(est_prev, sample, sample_prev, gain=DEFAULT_FILTER_GAIN):
    """Low-pass step: blend the previous estimate with the average of the
    last two raw samples.  A constant sample stream is a fixed point."""
    return gain * est_prev + (1.0 - gain) * (sample + sample_prev) / 2.0


def compute_beta(estimates):
    """Per-path shares of the summed bandwidth estimates.

    Paths with no estimate contribute zero; before any path has produced a
    sample every path gets an equal share.
    """
    total = 0.0
    for e in estimates:
        total += e
    n = len(estimates)
    if total <= 0.0:
        return [1.0 / n] * n
    return [e / total for e in estimates]


def compute_alpha(cwnds, srtts, betas):
    """Coupled-increase aggressiveness across the whole association.

    Scaled so that a single path with share 0.5 gets exactly plain TCP
    growth (alpha == 1).
    """
    total_w = 0.0
    for w in cwnds:
        total_w += w
    best = 0.0
    denom = 0.0
    for w, srtt, b in zip(cwnds, srtts, betas):
        term = b * w / (srtt * srtt)
        if term > best:
            best = term
        denom += w / srtt
    return 2.0 * total_w * best / (denom * denom)


class PaLedger:
    """Partial-bytes-acked bookkeeping, per path or one shared pool."""

    def __init__(self, n_paths, scope):
        if scope not in ("per-path", "global"):
            raise ValueError(f"bad pa scope {scope!r}")
        self.shared = scope == "global"
        self._v = [0.0] if self.shared else [0.0] * n_paths

    def _slot(self, path):
        return 0 if self.shared else path

    def get(self, path):
        return self._v[self._slot(path)]

    def add(self, path, d):
        self._v[self._slot(path)] += d

    def consume(self, path, amount):
        """Debit after a window increase; never goes negative."""
        i = self._slot(path)
        left = self._v[i] - amount
        self._v[i] = left if left > 0.0 else 0.0

    def reset(self, path):
        self._v[self._slot(path)] = 0.0


class Controller:
    """Shared state and the slow-start rule; subclasses fill in the rest."""

    name = ""

    def __init__(self, n_paths, mtu=1500, initial_cwnd_mtus=2,
                 initial_ssthresh=16_000_000, pa_scope="per-path",
                 srtt_fn=None, fallback_rtt=1.0,
                 filter_gain=DEFAULT_FILTER_GAIN):
        self.n = n_paths
        self.gain = filter_gain
        self.mtu = float(mtu)
        self.w = [initial_cwnd_mtus * self.mtu] * n_paths
        self.ss = [float(initial_ssthresh)] * n_paths
        self.pa = PaLedger(n_paths, pa_scope)
        self._srtt_fn = srtt_fn
        self._fallback_rtt = fallback_rtt

    def bind_srtt(self, fn):
        """Late-bind the transport's per-path smoothed RTT accessor."""
        self._srtt_fn = fn

    def cwnd(self, path):
        return self.w[path]

    def ssthresh(self, path):
        return self.ss[path]

    def srtt_or_fallback(self, path):
        if self._srtt_fn is not None:
            srtt = self._srtt_fn(path)
            if srtt is not None:
                return srtt
        return self._fallback_rtt

    # trace accessors, overridden where the controller has richer state
    def beta_of(self, path):
        return 0.5

    def bwe_bps(self, path):
        return 0.0

    def alpha_now(self):
        return 0.0

    def on_bytes_acked(self, path, d, now):
        self.pa.add(path, d)

    def on_increase_check(self, path, d, cwnd_was_full):
        if not cwnd_was_full:
            return
        w = self.w[path]
        if w < self.ss[path]:
            # slow start: grow by what was acked, at most one MTU per ack
            self.w[path] = w + min(d, self.mtu)
        else:
            self._avoidance_increase(path, w)

    def _avoidance_increase(self, path, w):
        raise NotImplementedError

    def on_fast_rtx(self, path):
        raise NotImplementedError

    def on_timeout(self, path):
        raise NotImplementedError


class CmtStandardController(Controller):
    """Uncoupled per-path control: TCP-style AIMD on every path."""

    name = "cmt-cc"

    def _avoidance_increase(self, path, w):
        if self.pa.get(path) >= w:
            self.w[path] = w + self.mtu
            self.pa.consume(path, w)

    def _cut_ssthresh(self, path):
        s = max(self.w[path] / 2.0, 4.0 * self.mtu)
        self.ss[path] = s
        return s

    def on_fast_rtx(self, path):
        self.w[path] = self._cut_ssthresh(path)
        self.pa.reset(path)

    def on_timeout(self, path):
        self._cut_ssthresh(path)
        self.w[path] = self.mtu
        self.pa.reset(path)


class PooledBweController(Controller):
    """Bandwidth-share coupled control.

    Every ack with d > 0 feeds the path's bandwidth filter.  Shares and the
    aggressiveness factor are recomputed on the spot, so the later hooks of
    the same ack already see fresh values.
    """

    name = "cmt-berp"

    def __init__(self, n_paths, **kw):
        super().__init__(n_paths, **kw)
        self.est = [0.0] * n_paths        # filtered bandwidth, bytes/s
        self.raw_prev = [0.0] * n_paths   # previous raw sample
        self.t_prev = [0.0] * n_paths     # time of the previous counted ack
        self.n_samples = [0] * n_paths
        self.beta = []
        self.alpha = 0.0
        self._update_shares()

    def beta_of(self, path):
        return self.beta[path]

    def bwe_bps(self, path):
        return self.est[path] * 8.0

    def alpha_now(self):
        return self.alpha

    def _update_shares(self):
        self.beta = compute_beta(self.est)

    def on_bytes_acked(self, path, d, now):
        if d > 0:
            sample = bwe_sample(d, now, self.t_prev[path])
            if sample is not None:
                if self.n_samples[path] == 0:
                    self.est[path] = sample
                else:
                    self.est[path] = bwe_filter(self.est[path], sample,
                                                self.raw_prev[path], self.gain)
                self.raw_prev[path] = sample
                self.t_prev[path] = now
                self.n_samples[path] += 1
                self._update_shares()
            srtts = [self.srtt_or_fallback(i) for i in range(self.n)]
            self.alpha = compute_alpha(self.w, srtts, self.beta)
        self.pa.add(path, d)

    def _avoidance_increase(self, path, w):
        pa = self.pa.get(path)
        if pa >= w:
            total_w = 0.0
            for x in self.w:
                total_w += x
            grow = min(self.alpha * pa * self.mtu / total_w,
                       pa * self.mtu / w)
            self.w[path] = w + grow
            self.pa.consume(path, w)

    def _cut_ssthresh(self, path):
        w = self.w[path]
        s = max(w - self.beta[path] * w, 4.0 * self.mtu)
        self.ss[path] = s
        return s

    def on_fast_rtx(self, path):
        self.w[path] = self._cut_ssthresh(path)
        self.pa.reset(path)

    def on_timeout(self, path):
        self._cut_ssthresh(path)
        self.w[path] = self.mtu
        self.pa.reset(path)


class MptcpCoupledController(PooledBweController):
    """Coupled control with every share pinned to one half."""

    name = "mptcp-coupled"

    def _update_shares(self):
        self.beta = [0.5] * self.n


CONTROLLERS = {
    CmtStandardController.name: CmtStandardController,
    PooledBweController.name: PooledBweController,
    MptcpCoupledController.name: MptcpCoupledController,
}


def make_controller(algo, n_paths, **kw):
    try:
        cls = CONTROLLERS[algo]
    except KeyError:
        raise ValueError(f"unknown congestion algorithm {algo!r}") from None
    return cls(n_paths, **kw)
