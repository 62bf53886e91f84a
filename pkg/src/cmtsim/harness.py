"""Experiment harness: topologies, traffic, metrics and parameter sweeps.

Three scenario templates share one sender/receiver pair with two paths:

``A``  disjoint paths.  Each path is access (10 Mb/s) -> middle (1 Mb/s)
       -> egress (10 Mb/s).  The swept variable is the middle-link error
       loss; access/egress links keep a fixed error loss.  Ack-direction
       links are 10 Mb/s and lossless.

``B``  both paths funnel through one shared 1 Mb/s link whose error loss
       is the swept variable; access/egress links as in A.

``C``  the A topology with error loss removed, plus one constant-bit-rate
       UDP cross flow per middle link.  The swept variable is the cross
       load as a fraction of the middle link rate, so any loss is real
       queue contention.

A run transfers one file and reports completion time, goodput and loss
accounting.  Runs are deterministic in (config, algorithm, variable,
seed); sweep output is sorted, so reruns are byte-identical.
"""

import math
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

from . import config as configmod
from .congestion import make_controller
from .engine import Simulator
from .netsim import CBR, Network, Packet
from .transport import Association, Receiver

TIME_CAP_DEFAULT = 10_000.0
CBR_PACKET_BYTES = 512

RESULT_COLUMNS = ("scenario", "algo", "seed", "variable", "transfer_time_s",
                  "goodput_bps", "fast_rtx", "timeouts", "err_drops",
                  "queue_drops", "timed_out")
SUMMARY_COLUMNS = ("scenario", "algo", "variable", "n", "mean_transfer_time_s",
                   "stdev_transfer_time_s", "mean_goodput_bps",
                   "stdev_goodput_bps")
TRACE_COLUMNS = ("time", "path", "cwnd", "ssthresh", "srtt", "bwe", "alpha",
                 "beta")
EVENT_COLUMNS = ("time", "path", "event", "cwnd_before", "cwnd_after",
                 "ssthresh_after", "beta")


@dataclass
class MetricsRecord:
    scenario: str
    algo: str
    seed: int
    variable: float
    transfer_time_s: float
    goodput_bps: float
    fast_rtx: int
    timeouts: int
    err_drops: int
    queue_drops: int
    timed_out: bool
    per_path_fast_rtx: tuple = ()
    per_path_timeouts: tuple = ()

    def row(self):
        return (self.scenario, self.algo, self.seed, self.variable,
                self.transfer_time_s, self.goodput_bps, self.fast_rtx,
                self.timeouts, self.err_drops, self.queue_drops,
                int(self.timed_out))


class CbrSource:
    """Fixed-size packets at a constant rate, started with a jittered phase."""

    def __init__(self, sim, net, name, route, rate_bps,
                 pkt_bytes=CBR_PACKET_BYTES):
        self.sim = sim
        self.net = net
        self.name = name
        self.route = route
        self.pkt_bytes = pkt_bytes
        self.interval = pkt_bytes * 8.0 / rate_bps
        self.start = sim.stream(f"app.cbr.{name}").random() * self.interval
        self.k = 0
        self.sent = 0
        sim.at(self.start, self._tick)

    def _tick(self):
        self.net.send(self.route,
                      Packet(CBR, self.pkt_bytes, self.name,
                             self.route.path_id, None))
        self.sent += 1
        self.k += 1
        self.sim.at(self.start + self.k * self.interval, self._tick)


class CbrSink:
    def __init__(self):
        self.packets = 0
        self.bytes = 0

    def __call__(self, pkt):
        self.packets += 1
        self.bytes += pkt.size


class TraceRecorder:
    """Samples per-path controller state on a fixed grid, starting at t=0."""

    def __init__(self, sim, assoc, interval):
        self.sim = sim
        self.assoc = assoc
        self.interval = interval
        self.rows = []
        self.k = 0
        sim.at(0.0, self._tick)

    def _tick(self):
        now = self.sim.now
        cc = self.assoc.cc
        for ps in self.assoc.paths:
            i = ps.path_id
            self.rows.append((now, i, cc.cwnd(i), cc.ssthresh(i),
                              ps.srtt if ps.srtt is not None else 0.0,
                              cc.bwe_bps(i), cc.alpha_now(), cc.beta_of(i)))
        self.k += 1
        self.sim.at(self.k * self.interval, self._tick)


class SimInstance:
    def __init__(self, sim, net, assoc, recv, scenario, algo, variable, seed,
                 file_size, time_cap):
        self.sim = sim
        self.net = net
        self.assoc = assoc
        self.recv = recv
        self.scenario = scenario
        self.algo = algo
        self.variable = variable
        self.seed = seed
        self.file_size = file_size
        self.time_cap = time_cap
        self.trace = None
        self.cbr_sources = []
        self.cbr_sinks = []
        self.done_at = None


def _make_endpoints(cfg, algo, seed):
    # Every RNG stream in a run derives from (master seed, run seed), so a
    # sweep point is replayable in isolation.
    sim = Simulator(f"{cfg['engine.master_seed']}.{seed}")
    net = Network(sim)
    cc = make_controller(
        algo, 2,
        mtu=cfg["transport.mtu"],
        initial_cwnd_mtus=cfg["transport.initial_cwnd_mtus"],
        initial_ssthresh=cfg["transport.rwnd"],
        pa_scope=cfg["cc.pa_scope"],
        fallback_rtt=cfg["transport.rto_initial"],
        filter_gain=cfg["cc.p"],
    )
    assoc = Association(
        sim, net, cc,
        chunk_bytes=cfg["transport.chunk_bytes"],
        header_bytes=cfg["link.header_overhead"],
        dupthresh=cfg["transport.dupthresh"],
        rto_initial=cfg["transport.rto_initial"],
        rto_min=cfg["transport.rto_min"],
        rto_max=cfg["transport.rto_max"],
        rtx_policy=cfg["transport.rtx_policy"],
    )
    recv = Receiver(
        sim, net,
        rwnd=cfg["transport.rwnd"],
        delack_factor=cfg["transport.delayed_ack_factor"],
        delack_timeout=cfg["transport.delayed_ack_timeout"],
    )
    return sim, net, cc, assoc, recv


def _link(net, cfg, name, capacity, loss):
    return net.add_link(name, capacity, cfg["link.prop_delay"], loss,
                        cfg["link.queue_capacity"])


def _wire(net, assoc, recv, fwd_hops, rev_hops):
    fwd = [net.route(f"path{i}.data", i, hops, recv.on_data)
           for i, hops in enumerate(fwd_hops)]
    rev = [net.route(f"path{i}.sack", i, hops, assoc.on_ctrl)
           for i, hops in enumerate(rev_hops)]
    assoc.set_routes(fwd)
    recv.set_routes(rev)


def _build_disjoint(cfg, algo, variable, seed, scenario, edge_loss, mid_loss,
                    cross_load=None):
    sim, net, cc, assoc, recv = _make_endpoints(cfg, algo, seed)
    _link(net, cfg, "S-N1", 10e6, edge_loss)
    _link(net, cfg, "N1-N3", 1e6, mid_loss)
    _link(net, cfg, "N3-D", 10e6, edge_loss)
    _link(net, cfg, "S-N2", 10e6, edge_loss)
    _link(net, cfg, "N2-N4", 1e6, mid_loss)
    _link(net, cfg, "N4-D", 10e6, edge_loss)
    for name in ("D-N3", "N3-N1", "N1-S", "D-N4", "N4-N2", "N2-S"):
        _link(net, cfg, name, 10e6, 0.0)
    _wire(net, assoc, recv,
          [["S-N1", "N1-N3", "N3-D"], ["S-N2", "N2-N4", "N4-D"]],
          [["D-N3", "N3-N1", "N1-S"], ["D-N4", "N4-N2", "N2-S"]])
    inst = SimInstance(sim, net, assoc, recv, scenario, algo, variable, seed,
                       cfg["scenario.file_size"], cfg["sim.time_cap"])
    if cross_load is not None and cross_load > 0.0:
        for src, mid, sink_name in (("U1", "N1-N3", "U3"),
                                    ("U2", "N2-N4", "U4")):
            sink = CbrSink()
            route = net.route(f"cbr.{src}-{sink_name}",
                              0 if mid == "N1-N3" else 1, [mid], sink)
            inst.cbr_sinks.append(sink)
            inst.cbr_sources.append(
                CbrSource(sim, net, src, route, cross_load * 1e6))
    return inst


def build_scenario_a(cfg, algo, loss, seed):
    return _build_disjoint(cfg, algo, loss, seed, "A",
                           cfg["scenario.edge_loss"], loss)


def build_scenario_c(cfg, algo, load, seed):
    return _build_disjoint(cfg, algo, load, seed, "C",
                           cfg["scenario_c.edge_loss"], 0.0, cross_load=load)


def build_scenario_b(cfg, algo, loss, seed):
    """Shared-bottleneck variant: both paths cross one 1 Mb/s link."""
    sim, net, cc, assoc, recv = _make_endpoints(cfg, algo, seed)
    edge = cfg["scenario.edge_loss"]
    _link(net, cfg, "S-N1.a", 10e6, edge)
    _link(net, cfg, "S-N1.b", 10e6, edge)
    _link(net, cfg, "N1-N2", 1e6, loss)
    _link(net, cfg, "N2-N3", 10e6, edge)
    _link(net, cfg, "N2-N4", 10e6, edge)
    _link(net, cfg, "N3-D", 10e6, edge)
    _link(net, cfg, "N4-D", 10e6, edge)
    for name in ("D-N3", "N3-N2", "D-N4", "N4-N2", "N2-N1", "N1-S.a",
                 "N1-S.b"):
        _link(net, cfg, name, 10e6, 0.0)
    _wire(net, assoc, recv,
          [["S-N1.a", "N1-N2", "N2-N3", "N3-D"],
           ["S-N1.b", "N1-N2", "N2-N4", "N4-D"]],
          [["D-N3", "N3-N2", "N2-N1", "N1-S.a"],
           ["D-N4", "N4-N2", "N2-N1", "N1-S.b"]])
    return SimInstance(sim, net, assoc, recv, "B", algo, loss, seed,
                       cfg["scenario.file_size"], cfg["sim.time_cap"])


_BUILDERS = {"A": build_scenario_a, "B": build_scenario_b,
             "C": build_scenario_c}


def build_instance(cfg, algo, variable, seed, trace=False):
    template = cfg["scenario.template"]
    inst = _BUILDERS[template](cfg, algo, variable, seed)
    if trace:
        inst.trace = TraceRecorder(inst.sim, inst.assoc,
                                   cfg["output.trace_interval"])
    return inst


def run_experiment(inst) -> MetricsRecord:
    """Drive one instance to file completion or the simulated-time cap."""

    def on_deliver(size, now):
        if inst.done_at is None and inst.recv.delivered_bytes >= inst.file_size:
            inst.done_at = now
            inst.sim.stop()

    inst.recv.on_deliver = on_deliver
    inst.assoc.enqueue(inst.file_size)
    inst.sim.run_until(inst.time_cap)
    timed_out = inst.done_at is None
    t = inst.time_cap if timed_out else inst.done_at
    moved = inst.recv.delivered_bytes if timed_out else inst.file_size
    counters = inst.net.counters()
    paths = inst.assoc.paths
    return MetricsRecord(
        scenario=inst.scenario,
        algo=inst.algo,
        seed=inst.seed,
        variable=inst.variable,
        transfer_time_s=t,
        goodput_bps=moved * 8.0 / t,
        fast_rtx=sum(ps.fast_rtx for ps in paths),
        timeouts=sum(ps.timeouts for ps in paths),
        err_drops=counters["error_dropped"],
        queue_drops=counters["queue_dropped"],
        timed_out=timed_out,
        per_path_fast_rtx=tuple(ps.fast_rtx for ps in paths),
        per_path_timeouts=tuple(ps.timeouts for ps in paths),
    )


def run_point(cfg, algo, variable, seed) -> MetricsRecord:
    return run_experiment(build_instance(cfg, algo, variable, seed))


def default_grid(template):
    if template == "C":
        return [round(0.1 * k, 1) for k in range(1, 11)]
    return [round(0.01 * k, 2) for k in range(1, 11)]


def sweep_points(cfg):
    grid = cfg["scenario.grid"]
    if grid is None:
        grid = default_grid(cfg["scenario.template"])
    return [(algo, var, seed)
            for algo in cfg["scenario.algos"]
            for var in grid
            for seed in cfg["scenario.seeds"]]


def _sweep_worker(args):
    cfg, algo, variable, seed = args
    return run_point(cfg, algo, variable, seed)


def sweep(cfg, jobs=1):
    """Run the whole grid; returns (records, summary_rows), both sorted."""
    points = sweep_points(cfg)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(_sweep_worker,
                                    [(cfg,) + p for p in points]))
    else:
        records = [run_point(cfg, *p) for p in points]
    records.sort(key=lambda r: (r.scenario, r.algo, r.variable, r.seed))
    return records, summarize(records)


def summarize(records):
    rows = []
    groups = {}
    for r in records:
        groups.setdefault((r.scenario, r.algo, r.variable), []).append(r)
    for (scenario, algo, variable) in sorted(groups):
        rs = groups[(scenario, algo, variable)]
        times = [r.transfer_time_s for r in rs]
        gps = [r.goodput_bps for r in rs]
        n = len(rs)
        rows.append((scenario, algo, variable, n,
                     math.fsum(times) / n,
                     statistics.stdev(times) if n > 1 else 0.0,
                     math.fsum(gps) / n,
                     statistics.stdev(gps) if n > 1 else 0.0))
    return rows


def config_defaults():
    return configmod.defaults()
