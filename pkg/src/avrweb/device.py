"""The assembled device: NIC, stack, connection slot, web layer, bridge.

One object owns every piece of simulated hardware and firmware state.
The virtual wire pushes frames in through :meth:`deliver`; each call to
:meth:`poll` runs one firmware loop iteration (sample sensors, consume
RX, serve HTTP, move bridge traffic) and returns the frames the NIC
wants on the wire.

A device-IP change requested through the control page is held until the
connection slot is back to LISTEN, meaning the response that confirmed
it has been delivered; from the next poll on, the device answers only
on its new address.
"""

from __future__ import annotations

from . import devmodel, nicsim
from .bridge import Bridge, BridgeConfig, SpiDeviceStub
from .devmodel import DeviceState, ProfileEntry
from .httpd import HttpServer
from .netstack import NetConfig, NetStack, default_config
from .nicsim import NicState
from .tcplite import TcpConn, TcpState

HTTP_PORT = 80


class DeviceNode:
    def __init__(
        self,
        config: NetConfig | None = None,
        *,
        template: str = "appendix",
        iss_seed: int = 0,
        profile: list[ProfileEntry] | None = None,
        bridge_config: BridgeConfig | None = None,
        nic_trace=None,
    ):
        self.config = config if config is not None else default_config()
        self.nic = NicState(self.config.mac, trace=nic_trace)
        self.stack = NetStack(self.config)
        self.conn = TcpConn(local_port=HTTP_PORT, iss_seed=iss_seed)
        self.http = HttpServer(template=template)
        self.device = DeviceState()
        self.profile = profile
        self.spi_device = SpiDeviceStub()
        if bridge_config is None:
            bridge_config = BridgeConfig(peer_ip=self.config.server_ip)
        self.bridge = Bridge(bridge_config, spi_sink=self.spi_device)
        self.pending_ip = None

    def deliver(self, frame: bytes) -> None:
        """Frame arriving from the medium."""
        nicsim.wire_deliver(self.nic, frame)

    def set_link(self, up: bool) -> None:
        self.nic.set_link(up)

    def poll(self, now_us: int) -> list[bytes]:
        """One firmware loop pass; returns frames for the wire."""
        self.device = devmodel.sample_sensors(self.device, now_us, self.profile)
        result = self.stack.poll(self.nic, self.conn, self.device, bridge=self.bridge, http=self.http)
        self.device = result.device
        if result.ip_change is not None:
            self.pending_ip = result.ip_change
        if self.pending_ip is not None and self.conn.state is TcpState.LISTEN:
            # the confirming response is fully out; switch identity now
            self.config.ip = self.pending_ip
            self.pending_ip = None
        return nicsim.tx_drain(self.nic)
