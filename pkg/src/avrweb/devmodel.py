"""State of the simulated device peripherals.

Two status LEDs with a stored animation mode, a 10-bit ADC preset, an
integer-Celsius temperature sensor, a 2x16 character LCD and the served
request counter. Commands change exactly one field and leave the rest
untouched; the sensor reading is a pure function of the profile and the
simulated time, so every evolution of the state is reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path

from .wire import Ipv4Address

LCD_LINES = 2
LCD_COLS = 16
ADC_MAX = 1023
REQUEST_COUNT_WRAP = 1000  # rendered as three digits, 999 wraps to 000
TEMPERATURE_MIN_C = -40  # plausible band for the kind of sensor the board carries
TEMPERATURE_MAX_C = 125
MICROSECONDS_PER_HOUR = 3_600_000_000

DEFAULT_TEMPERATURE_C = 27
DEFAULT_ADC_PRESET = 482


class LedMode(Enum):
    BLINKING = "blinking"
    SCANNING = "scanning"


class ProfileOutOfRange(ValueError):
    """A sensor profile produced a value outside the device's limits."""


def _blank_line() -> str:
    return " " * LCD_COLS


@dataclass(frozen=True)
class DeviceState:
    led1: bool = False
    led2: bool = False
    led_mode: LedMode = LedMode.SCANNING
    adc_preset: int = DEFAULT_ADC_PRESET
    temperature_c: int = DEFAULT_TEMPERATURE_C
    lcd: tuple[str, str] = (_blank_line(), _blank_line())
    request_count: int = 0
    anim_tick: int = 0

    def __post_init__(self) -> None:
        if not 0 <= self.adc_preset <= ADC_MAX:
            raise ValueError(f"ADC preset {self.adc_preset} outside 0..{ADC_MAX}")
        if any(len(line) != LCD_COLS for line in self.lcd):
            raise ValueError(f"LCD lines must be exactly {LCD_COLS} characters")
        if not 0 <= self.request_count < REQUEST_COUNT_WRAP:
            raise ValueError("request count outside 0..999")


# Control commands, produced by the web layer and applied here.

@dataclass(frozen=True)
class SetLed:
    index: int  # 1 or 2
    on: bool


@dataclass(frozen=True)
class SetLedMode:
    mode: LedMode


@dataclass(frozen=True)
class SetDeviceIp:
    ip: Ipv4Address


@dataclass(frozen=True)
class SetServerIp:
    ip: Ipv4Address


@dataclass(frozen=True)
class WriteLcd:
    line: int  # 1 or 2
    text: str  # truncated to 16 characters


ControlCommand = SetLed | SetLedMode | SetDeviceIp | SetServerIp | WriteLcd


def apply(device: DeviceState, cmd: ControlCommand) -> DeviceState:
    """Apply one command; only the targeted field changes.

    The two IP commands are network configuration, not peripheral
    state, and leave the device untouched; the owner of the network
    config handles them.
    """
    if isinstance(cmd, SetLed):
        if cmd.index == 1:
            return replace(device, led1=cmd.on)
        return replace(device, led2=cmd.on)
    if isinstance(cmd, SetLedMode):
        return replace(device, led_mode=cmd.mode)
    if isinstance(cmd, WriteLcd):
        text = cmd.text[:LCD_COLS].ljust(LCD_COLS)
        lines = list(device.lcd)
        lines[cmd.line - 1] = text
        return replace(device, lcd=(lines[0], lines[1]))
    if isinstance(cmd, (SetDeviceIp, SetServerIp)):
        return device
    raise TypeError(f"unknown command {cmd!r}")


def count_request(device: DeviceState) -> DeviceState:
    """Bump the served-page counter, wrapping 999 back to 000."""
    return replace(device, request_count=(device.request_count + 1) % REQUEST_COUNT_WRAP)


def tick_animation(device: DeviceState) -> DeviceState:
    """Advance the LED animation counter (blinking/scanning are cosmetic)."""
    return replace(device, anim_tick=device.anim_tick + 1)


# Sensor profile: step function over whole hours of simulated time.

@dataclass(frozen=True)
class ProfileEntry:
    hour: int
    temperature_c: int
    adc_preset: int | None = None


def load_profile(path: str | Path) -> list[ProfileEntry]:
    """Read a profile file: one "hour,temperature_c[,adc]" entry per line."""
    entries = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) not in (2, 3):
            raise ValueError(f"{path}:{lineno}: expected hour,temperature[,adc]")
        try:
            hour, temp = int(parts[0]), int(parts[1])
            adc = int(parts[2]) if len(parts) == 3 else None
        except ValueError:
            raise ValueError(f"{path}:{lineno}: fields must be integers") from None
        entries.append(ProfileEntry(hour, temp, adc))
    entries.sort(key=lambda e: e.hour)
    return entries


def _profile_at(profile: list[ProfileEntry], hour: int) -> ProfileEntry:
    current = profile[0]
    for entry in profile:
        if entry.hour > hour:
            break
        current = entry
    return current  # before the first entry, the first applies; after the last, it holds


def sample_sensors(device: DeviceState, sim_time_us: int, profile: list[ProfileEntry] | None = None) -> DeviceState:
    """Read the sensors at a point in simulated time.

    Without a profile the temperature is a constant 27 degrees and the
    ADC preset keeps its value. A profile drives the temperature (and
    optionally the ADC) as a step function of whole hours.
    """
    if not profile:
        return replace(device, temperature_c=DEFAULT_TEMPERATURE_C)
    entry = _profile_at(profile, sim_time_us // MICROSECONDS_PER_HOUR)
    if not TEMPERATURE_MIN_C <= entry.temperature_c <= TEMPERATURE_MAX_C:
        raise ProfileOutOfRange(f"temperature {entry.temperature_c} outside {TEMPERATURE_MIN_C}..{TEMPERATURE_MAX_C}")
    new = replace(device, temperature_c=entry.temperature_c)
    if entry.adc_preset is not None:
        if not 0 <= entry.adc_preset <= ADC_MAX:
            raise ProfileOutOfRange(f"ADC value {entry.adc_preset} outside 0..{ADC_MAX}")
        new = replace(new, adc_preset=entry.adc_preset)
    return new
