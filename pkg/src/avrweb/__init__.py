"""Simulated smart device on a virtual LAN.

A lean TCP/IP stack and HTTP/1.0 control page for a simulated
SPI-attached Ethernet controller, plus the virtual wire, host client
and scenario harness used to exercise it end to end.
"""

__version__ = "0.1.0"

from .wire import Ipv4Address, MacAddress

__all__ = ["Ipv4Address", "MacAddress", "__version__"]
