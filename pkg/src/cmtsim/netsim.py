"""Links, packets and routes.

A link models store-and-forward transmission: serialization at a fixed
bit rate, a drop-tail queue of bounded length (the packet being serialized
does not count against the queue), constant propagation delay, and
Bernoulli error loss.  The loss draw happens when the packet has finished
consuming link capacity, from the link's own named RNG stream, so a lossy
link still carries the load of the packets it destroys.

Counter identity, maintained at every instant:

    enqueued == delivered + error_dropped + queue_dropped + in_transit
"""

from collections import deque

DATA = "data"
CTRL = "ctrl"
CBR = "cbr"


class Packet:
    __slots__ = ("kind", "size", "flow", "path", "payload", "route", "hop")

    def __init__(self, kind, size, flow, path, payload=None):
        self.kind = kind
        self.size = size          # bytes on the wire
        self.flow = flow
        self.path = path
        self.payload = payload
        self.route = None
        self.hop = 0


class Route:
    """An ordered tuple of links ending at a delivery callback."""

    __slots__ = ("name", "path_id", "links", "deliver")

    def __init__(self, name, path_id, links, deliver):
        self.name = name
        self.path_id = path_id
        self.links = tuple(links)
        self.deliver = deliver


class Link:
    def __init__(self, sim, name, capacity_bps, prop_delay_s, loss_prob,
                 queue_capacity=50):
        if capacity_bps <= 0 or prop_delay_s < 0 or not 0.0 <= loss_prob <= 1.0:
            raise ValueError(f"bad link parameters for {name}")
        self.sim = sim
        self.name = name
        self.capacity_bps = capacity_bps
        self.prop_delay_s = prop_delay_s
        self.loss_prob = loss_prob
        self.queue_capacity = queue_capacity
        self._rng = sim.stream(f"loss.link.{name}") if loss_prob > 0 else None
        self._queue = deque()
        self._busy = False
        self._tx_count = 0
        # test hook: 0-based ordinals (among packets that finish serialization)
        # to drop deterministically, checked before the random draw
        self.scripted_drops = ()
        self.enqueued = 0
        self.delivered = 0
        self.error_dropped = 0
        self.queue_dropped = 0
        self.in_transit = 0

    def offer(self, pkt, forward) -> bool:
        """Accept a packet for transmission, or drop-tail it.

        forward(pkt) is invoked on the far side after serialization plus
        propagation, unless the packet is lost.
        """
        self.enqueued += 1
        if self._busy:
            if len(self._queue) >= self.queue_capacity:
                self.queue_dropped += 1
                return False
            self.in_transit += 1
            self._queue.append((pkt, forward))
            return True
        self.in_transit += 1
        self._start(pkt, forward)
        return True

    def _start(self, pkt, forward):
        self._busy = True
        self.sim.after(pkt.size * 8.0 / self.capacity_bps,
                       lambda: self._tx_done(pkt, forward))

    def _tx_done(self, pkt, forward):
        if self._queue:
            nxt, fwd = self._queue.popleft()
            self._start(nxt, fwd)
        else:
            self._busy = False
        idx = self._tx_count
        self._tx_count = idx + 1
        if idx in self.scripted_drops or (
                self._rng is not None and self._rng.random() < self.loss_prob):
            self.error_dropped += 1
            self.in_transit -= 1
            return
        self.sim.after(self.prop_delay_s, lambda: self._deliver(pkt, forward))

    def _deliver(self, pkt, forward):
        self.delivered += 1
        self.in_transit -= 1
        forward(pkt)

    def conservation_ok(self) -> bool:
        return self.enqueued == (self.delivered + self.error_dropped
                                 + self.queue_dropped + self.in_transit)


class Network:
    """Named links plus route construction and hop-by-hop forwarding."""

    def __init__(self, sim):
        self.sim = sim
        self.links = {}

    def add_link(self, name, capacity_bps, prop_delay_s, loss_prob,
                 queue_capacity=50) -> Link:
        if name in self.links:
            raise ValueError(f"duplicate link {name}")
        link = Link(self.sim, name, capacity_bps, prop_delay_s, loss_prob,
                    queue_capacity)
        self.links[name] = link
        return link

    def route(self, name, path_id, link_names, deliver) -> Route:
        return Route(name, path_id, [self.links[n] for n in link_names], deliver)

    def send(self, route, pkt):
        pkt.route = route
        pkt.hop = 0
        route.links[0].offer(pkt, self._advance)

    def _advance(self, pkt):
        route = pkt.route
        pkt.hop += 1
        if pkt.hop < len(route.links):
            route.links[pkt.hop].offer(pkt, self._advance)
        else:
            route.deliver(pkt)

    def counters(self) -> dict:
        total = {"enqueued": 0, "delivered": 0, "error_dropped": 0,
                 "queue_dropped": 0, "in_transit": 0}
        for link in self.links.values():
            total["enqueued"] += link.enqueued
            total["delivered"] += link.delivered
            total["error_dropped"] += link.error_dropped
            total["queue_dropped"] += link.queue_dropped
            total["in_transit"] += link.in_transit
        return total
