"""Whole-machine energy metering for a trial.

A :class:`MeterSession` polls a set of power sources on a background thread
and turns the samples into an :class:`EnergyReport`. CPU energy comes from
the RAPL powercap counters when they are readable; otherwise the CPU is
charged a constant share of its TDP. RAM is always estimated at 0.375 W/GB
and GPUs are polled through ``nvidia-smi``.
"""

from __future__ import annotations

import glob
import logging
import os
import subprocess
import threading
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

log = logging.getLogger(__name__)

MICROJOULES_PER_JOULE = 1e6
JOULES_PER_KWH = 3.6e6
RAM_WATTS_PER_GB = 0.375
DEFAULT_CARBON_INTENSITY = 0.2375  # kgCO2eq/kWh
DEFAULT_CPU_TDP = 65.0
RAPL_ROOT = "/sys/class/powercap"
NVIDIA_SMI = ["nvidia-smi", "--query-gpu=power.draw", "--format=csv,noheader,nounits"]

PUE_ENV = "GREENFRONT_PUE"
INTENSITY_ENV = "GREENFRONT_CARBON_INTENSITY"


class MeterError(RuntimeError):
    pass


def read_rapl_delta(prev_uj: float, curr_uj: float, max_range_uj: float) -> float:
    """Joules between two RAPL counter readings, tolerating one wraparound."""
    if max_range_uj <= 0:
        raise ValueError("max_range must be positive")
    return ((curr_uj - prev_uj) % max_range_uj) / MICROJOULES_PER_JOULE


def apply_pue(joules: float, pue: float) -> float:
    if pue < 1.0:
        raise ValueError(f"PUE must be >= 1, got {pue}")
    return joules * pue


def emissions(kwh: float, intensity: float = DEFAULT_CARBON_INTENSITY) -> float:
    """kgCO2eq emitted for ``kwh`` at ``intensity`` kgCO2eq/kWh."""
    if kwh < 0 or intensity < 0:
        raise ValueError("energy and carbon intensity must be nonnegative")
    return kwh * intensity


@dataclass
class Inventory:
    cpu_tdp_watts: float = DEFAULT_CPU_TDP
    core_fraction: float = 1.0
    ram_gb: float | None = None
    gpu: bool = False
    gpu_tdp_watts: float | None = None

    def resolved_ram_gb(self) -> float:
        if self.ram_gb is not None:
            return self.ram_gb
        try:
            return os.sysconf("SC_PAGE_SIZE") * os.sysconf("SC_PHYS_PAGES") / 1024**3
        except (ValueError, OSError, AttributeError):
            return 0.0


def estimate_constant_power(inventory: Inventory) -> dict[str, float]:
    """TDP-style fallback watts: ``ram`` at 0.375 W/GB, ``cpu`` at TDP x share."""
    ram = inventory.resolved_ram_gb()
    if ram < 0 or inventory.cpu_tdp_watts < 0 or inventory.core_fraction < 0:
        raise ValueError("inventory values must be nonnegative")
    return {
        "cpu": inventory.cpu_tdp_watts * inventory.core_fraction,
        "ram": RAM_WATTS_PER_GB * ram,
    }


@dataclass
class MeterConfig:
    interval_seconds: float = 1.0
    pue: float = 1.0
    carbon_intensity: float = DEFAULT_CARBON_INTENSITY
    inventory: Inventory = field(default_factory=Inventory)
    rapl_root: str = RAPL_ROOT

    def __post_init__(self):
        if self.interval_seconds <= 0:
            raise ValueError("sampling interval must be positive")
        if self.pue < 1.0:
            raise ValueError("PUE must be >= 1")
        if self.carbon_intensity < 0:
            raise ValueError("carbon intensity must be >= 0")

    @classmethod
    def from_env(cls, **kwargs) -> "MeterConfig":
        """Build a config, letting the environment override PUE and intensity."""
        if os.environ.get(PUE_ENV):
            kwargs["pue"] = float(os.environ[PUE_ENV])
        if os.environ.get(INTENSITY_ENV):
            kwargs["carbon_intensity"] = float(os.environ[INTENSITY_ENV])
        return cls(**kwargs)

    @classmethod
    def from_dict(cls, d: dict) -> "MeterConfig":
        d = dict(d)
        inv = d.pop("inventory", None) or {}
        return cls(inventory=Inventory(**inv), **d)


# --- power sources -----------------------------------------------------------


class ConstantSource:
    """Fixed wattage for one component, e.g. a TDP estimate."""

    kind = "constant"

    def __init__(self, component: str, watts: float, label: str = "constant"):
        if watts < 0:
            raise ValueError("constant watts must be >= 0")
        self.component = component
        self.watts = float(watts)
        self.label = label

    def start(self, now):
        pass

    def read(self, now) -> float:
        return self.watts

    def energy(self):
        """Integrated energy if the source counts it directly, else None."""
        return None


class RaplSource:
    """Package-domain RAPL counters summed into one ``cpu`` component."""

    kind = "rapl"
    label = "rapl"

    def __init__(self, counter_paths, max_ranges, component: str = "cpu"):
        self.component = component
        self.paths = [Path(p) for p in counter_paths]
        self.max_ranges = [float(m) for m in max_ranges]
        if not self.paths:
            raise MeterError("no RAPL counters")
        if any(m <= 0 for m in self.max_ranges):
            raise ValueError("RAPL max_range must be positive")
        self._last = None
        self._last_t = None
        self._joules = 0.0

    @classmethod
    def discover(cls, root: str = RAPL_ROOT) -> "RaplSource":
        """Find readable top-level ``intel-rapl:N`` domains under ``root``."""
        zones = sorted(
            d for d in glob.glob(os.path.join(root, "intel-rapl:*"))
            if os.path.basename(d).count(":") == 1
        )
        paths, ranges = [], []
        for zone in zones:
            counter = os.path.join(zone, "energy_uj")
            try:
                with open(counter) as fh:
                    int(fh.read().strip())
                with open(os.path.join(zone, "max_energy_range_uj")) as fh:
                    ranges.append(int(fh.read().strip()))
            except (OSError, ValueError) as exc:
                raise MeterError(f"RAPL counter {counter} unreadable: {exc}") from exc
            paths.append(counter)
        if not paths:
            raise MeterError(f"no RAPL domains under {root}")
        return cls(paths, ranges)

    def _counters(self):
        out = []
        for p in self.paths:
            out.append(int(p.read_text().strip()))
        return out

    def start(self, now):
        self._last = self._counters()
        self._last_t = now
        self._joules = 0.0

    def read(self, now) -> float:
        current = self._counters()
        delta = sum(
            read_rapl_delta(a, b, m) for a, b, m in zip(self._last, current, self.max_ranges)
        )
        self._joules += delta
        dt = now - self._last_t
        self._last, self._last_t = current, now
        return delta / dt if dt > 0 else 0.0

    def energy(self):
        return self._joules


def parse_nvidia_smi(text: str) -> list[float]:
    """Watts per device from ``nvidia-smi --format=csv,noheader,nounits``."""
    watts = []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        try:
            watts.append(float(line))
        except ValueError:
            # "[N/A]" on devices that do not report power
            watts.append(0.0)
    return watts


class GpuPollSource:
    kind = "gpu_poll"
    label = "nvidia-smi"

    def __init__(self, command=None, component: str = "gpu", timeout: float = 5.0):
        self.command = list(command or NVIDIA_SMI)
        self.component = component
        self.timeout = timeout

    def start(self, now):
        self.read(now)

    def read(self, now) -> float:
        try:
            out = subprocess.run(self.command, capture_output=True, text=True,
                                 timeout=self.timeout, check=True).stdout
        except (OSError, subprocess.SubprocessError) as exc:
            raise MeterError(f"GPU power query failed: {exc}") from exc
        return sum(parse_nvidia_smi(out))

    def energy(self):
        return None


def default_sources(config: MeterConfig) -> tuple[list, list[str]]:
    """Sources for this machine plus any provenance warnings."""
    warnings = []
    inv = config.inventory
    const = estimate_constant_power(inv)
    sources = []
    try:
        sources.append(RaplSource.discover(config.rapl_root))
    except MeterError as exc:
        warnings.append(f"{exc}; CPU charged at TDP fallback {const['cpu']:.3g} W")
        sources.append(ConstantSource("cpu", const["cpu"], "tdp"))
    sources.append(ConstantSource("ram", const["ram"], "0.375 W/GB"))
    if inv.gpu:
        gpu = GpuPollSource()
        try:
            gpu.read(0.0)
            sources.append(gpu)
        except MeterError as exc:
            if inv.gpu_tdp_watts is not None:
                warnings.append(f"{exc}; GPU charged at TDP {inv.gpu_tdp_watts:g} W")
                sources.append(ConstantSource("gpu", inv.gpu_tdp_watts, "tdp"))
            else:
                warnings.append(f"{exc}; GPU energy not measured")
    return sources, warnings


# --- integration and reports -------------------------------------------------


@dataclass(frozen=True)
class PowerSample:
    timestamp: float
    watts_by_component: dict


def integrate(samples) -> dict[str, float]:
    """Trapezoidal joules per component over a strictly increasing timeline."""
    totals: dict[str, float] = {}
    for s in samples:
        for c in s.watts_by_component:
            totals.setdefault(c, 0.0)
    for a, b in zip(samples, samples[1:]):
        dt = b.timestamp - a.timestamp
        if dt <= 0:
            raise ValueError("sample timestamps must be strictly increasing")
        for c in totals:
            wa = a.watts_by_component.get(c, 0.0)
            wb = b.watts_by_component.get(c, 0.0)
            totals[c] += 0.5 * (wa + wb) * dt
    return totals


@dataclass
class EnergyReport:
    joules_by_component: dict
    total_joules: float
    pue_adjusted_joules: float
    kwh: float
    kg_co2eq: float
    duration_seconds: float
    sample_count: int
    pue: float = 1.0
    warnings: list = field(default_factory=list)

    @classmethod
    def from_components(cls, joules_by_component, duration, sample_count,
                        pue=1.0, intensity=DEFAULT_CARBON_INTENSITY, warnings=None):
        total = float(sum(joules_by_component.values()))
        adjusted = apply_pue(total, pue)
        kwh = adjusted / JOULES_PER_KWH
        return cls(dict(joules_by_component), total, adjusted, kwh, emissions(kwh, intensity),
                   duration, sample_count, pue, list(warnings or []))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "EnergyReport":
        return cls(**d)


_active_lock = threading.Lock()
_active_session = None


class MeterSession:
    """Background sampler; use as a context manager or via start/stop.

    Only one session may be active per process, since every source measures
    the whole machine.
    """

    def __init__(self, config: MeterConfig | None = None, sources=None):
        self.config = config or MeterConfig()
        if sources is None:
            sources, self.warnings = default_sources(self.config)
        else:
            self.warnings = []
        self.sources = list(sources)
        self.samples: list[PowerSample] = []
        self._buffer_lock = threading.Lock()
        self._stop = threading.Event()
        self._thread = None
        self._t0 = None
        self.report: EnergyReport | None = None

    def _sample(self):
        now = time.perf_counter()
        watts = {}
        for src in self.sources:
            try:
                w = src.read(now)
            except (OSError, MeterError, ValueError) as exc:
                msg = f"{src.label} read failed: {exc}"
                if msg not in self.warnings:
                    self.warnings.append(msg)
                w = 0.0
            watts[src.component] = watts.get(src.component, 0.0) + w
        with self._buffer_lock:
            if self.samples and now <= self.samples[-1].timestamp:
                return
            self.samples.append(PowerSample(now, watts))

    def _run(self):
        while not self._stop.wait(self.config.interval_seconds):
            self._sample()

    def start(self) -> "MeterSession":
        global _active_session
        with _active_lock:
            if _active_session is not None:
                raise MeterError("another meter session is already active")
            _active_session = self
        now = time.perf_counter()
        try:
            for src in self.sources:
                src.start(now)
        except Exception:
            with _active_lock:
                _active_session = None
            raise
        self._t0 = now
        self._sample()
        self._thread = threading.Thread(target=self._run, name="greenfront-meter", daemon=True)
        self._thread.start()
        return self

    def stop(self) -> EnergyReport:
        global _active_session
        if self._thread is None:
            raise MeterError("session was never started")
        self._stop.set()
        self._thread.join()
        self._sample()
        with _active_lock:
            if _active_session is self:
                _active_session = None
        self.report = self._build_report()
        return self.report

    def _build_report(self) -> EnergyReport:
        samples = list(self.samples)
        joules = integrate(samples)
        for src in self.sources:
            counted = src.energy()
            if counted is not None:
                # counters are exact; replace the integrated average-power curve
                joules[src.component] = counted
        duration = samples[-1].timestamp - self._t0 if samples else 0.0
        return EnergyReport.from_components(
            joules, duration, len(samples), self.config.pue,
            self.config.carbon_intensity, self.warnings,
        )

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        if self.report is None and self._thread is not None:
            self.stop()
        return False


def measure(workload, config: MeterConfig | None = None, sources=None):
    """Run ``workload()`` inside a session; returns ``(result, EnergyReport)``."""
    session = MeterSession(config, sources).start()
    try:
        result = workload()
    finally:
        report = session.stop()
    return result, report
