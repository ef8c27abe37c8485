"""Deterministic synthetic flow logs with injected scan campaigns and
line-accurate ground truth."""

from __future__ import annotations

import ipaddress
import random
from dataclasses import dataclass
from typing import Iterable, Sequence

from .config import ConfigError, DEFAULT_LOCAL_NETS
from .ingest import FlowRecord, Protocol, format_line
from .scanrules import LocalNetworks, ScanAlert, ScanKind

BENIGN_PORTS = (80, 443, 53, 22, 25, 110, 143, 8080)

_MAX_REJECTS = 1000


@dataclass(frozen=True)
class ScanSpec:
    """One injected scan: a vertical spec fixes the target address and walks
    ports, a horizontal spec fixes the port and walks local addresses.

    adjacency controls placement in the finished log: "adjacent" probes sit
    on consecutive lines, "interleaved" probes always have background
    traffic between them.
    """

    kind: ScanKind
    scanner_ip: str
    target: str | int
    probes: int
    inter_probe_gap: int
    start_time: int
    adjacency: str = "interleaved"

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", ScanKind(self.kind))
        if self.adjacency not in ("adjacent", "interleaved"):
            raise ConfigError(f"unknown adjacency {self.adjacency!r}")
        if self.probes < 2:
            raise ConfigError("a scan needs at least 2 probes")
        if self.inter_probe_gap < 0 or self.start_time < 0:
            raise ConfigError("scan times must be non-negative")

    def probe_times(self) -> list[int]:
        return [self.start_time + i * self.inter_probe_gap for i in range(self.probes)]


@dataclass(frozen=True)
class GenConfig:
    duration: int
    background_rate: float
    local_nets: tuple[str, ...] = DEFAULT_LOCAL_NETS
    seed: int = 0
    scans: tuple[ScanSpec, ...] = ()
    start_tod: int = 14 * 3600  # time of day of the first second of the log

    def __post_init__(self) -> None:
        object.__setattr__(self, "scans", tuple(self.scans))
        object.__setattr__(self, "local_nets", tuple(self.local_nets))
        if self.duration < 1:
            raise ConfigError("duration must be at least 1 second")
        if self.background_rate < 0:
            raise ConfigError("background_rate must be non-negative")
        if not 0 <= self.start_tod < 86400:
            raise ConfigError("start_tod must be a time of day in seconds")
        try:
            nets = LocalNetworks(self.local_nets)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        for spec in self.scans:
            self._check_scan(spec, nets)

    def _check_scan(self, spec: ScanSpec, nets: LocalNetworks) -> None:
        try:
            ipaddress.IPv4Address(spec.scanner_ip)
        except ValueError as exc:
            raise ConfigError(f"bad scanner_ip {spec.scanner_ip!r}") from exc
        if nets.contains(spec.scanner_ip):
            raise ConfigError(f"scanner {spec.scanner_ip} must be outside local_nets")
        if spec.kind is ScanKind.VERTICAL:
            if not isinstance(spec.target, str):
                raise ConfigError("vertical scan target must be an address")
            try:
                ipaddress.IPv4Address(spec.target)
            except ValueError as exc:
                raise ConfigError(f"bad vertical target {spec.target!r}") from exc
            if not nets.contains(spec.target):
                raise ConfigError(f"vertical target {spec.target} must be local")
        else:
            if not isinstance(spec.target, int) or not 1 <= spec.target <= 65535:
                raise ConfigError("horizontal scan target must be a port number")
        if spec.probe_times()[-1] > self.duration:
            raise ConfigError("scan does not fit inside duration")


@dataclass(frozen=True)
class GroundTruthScan:
    kind: ScanKind
    scanner_ip: str
    target: str | int
    line_numbers: tuple[int, ...]


@dataclass(frozen=True)
class GroundTruth:
    scans: tuple[GroundTruthScan, ...]


def ground_truth_to_text(truth: GroundTruth) -> str:
    """One scan per line: kind,scanner,target,probes,lineno;lineno;..."""
    lines = ["# kind,scanner_ip,target,probes,line_numbers"]
    for scan in truth.scans:
        numbers = ";".join(str(n) for n in scan.line_numbers)
        lines.append(f"{scan.kind.value},{scan.scanner_ip},{scan.target},{len(scan.line_numbers)},{numbers}")
    return "\n".join(lines) + "\n"


def ground_truth_from_text(text: str) -> GroundTruth:
    scans = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        kind, scanner, target, count, numbers = line.split(",")
        parsed = tuple(int(n) for n in numbers.split(";"))
        if len(parsed) != int(count):
            raise ValueError(f"ground truth count mismatch on {line!r}")
        fixed: str | int = int(target) if ScanKind(kind) is ScanKind.HORIZONTAL else target
        scans.append(GroundTruthScan(ScanKind(kind), scanner, fixed, parsed))
    return GroundTruth(tuple(scans))


def _ip_text(value: int) -> str:
    return f"{(value >> 24) & 255}.{(value >> 16) & 255}.{(value >> 8) & 255}.{value & 255}"


class _AddressSpace:
    """Seeded draws of local and remote addresses. Remote sources are never
    repeated, never local, and never a scanner, so background traffic can
    not look like a scan no matter what timeout or policy reads it back."""

    def __init__(self, rng: random.Random, cidrs: Sequence[str], scanner_ips: Iterable[str]):
        self._rng = rng
        nets = [ipaddress.ip_network(c) for c in cidrs]
        self._masks = [(int(n.network_address), int(n.netmask)) for n in nets]
        self._bases = [(int(n.network_address), n.num_addresses) for n in nets]
        self._taken = {int(ipaddress.IPv4Address(ip)) for ip in scanner_ips}

    def _is_local(self, value: int) -> bool:
        return any((value & mask) == net for net, mask in self._masks)

    def local_ip(self) -> str:
        base, size = self._bases[self._rng.randrange(len(self._bases))]
        offset = self._rng.randrange(1, size - 1) if size > 2 else self._rng.randrange(size)
        return _ip_text(base + offset)

    def distinct_local_ips(self, count: int) -> list[str]:
        seen: set[str] = set()
        out: list[str] = []
        for _ in range(_MAX_REJECTS):
            ip = self.local_ip()
            if ip not in seen:
                seen.add(ip)
                out.append(ip)
                if len(out) == count:
                    return out
        raise ConfigError("local_nets too small for the requested probe count")

    def fresh_remote_ip(self) -> str:
        for _ in range(_MAX_REJECTS):
            value = self._rng.randrange(1, 1 << 32)
            if value in self._taken or self._is_local(value):
                continue
            self._taken.add(value)
            return _ip_text(value)
        raise ConfigError("could not draw a fresh remote address")


def _background_record(rng: random.Random, space: _AddressSpace, tod: int) -> FlowRecord:
    roll = rng.random()
    if roll < 0.02:
        protocol, sport, dport = Protocol.ICMP, 0, 0
    else:
        protocol = Protocol.UDP if roll < 0.10 else Protocol.TCP
        sport = rng.randint(1024, 65535)
        dport = rng.choice(BENIGN_PORTS)
    return FlowRecord(
        raw_field_1=rng.randint(0, 9999),
        raw_field_2=rng.randint(0, 9999),
        event_time=tod,
        protocol=protocol,
        source_ip=space.fresh_remote_ip(),
        source_port=sport,
        dest_ip=space.local_ip(),
        dest_port=dport,
        raw_field_8=rng.randint(0, 999),
        packets=rng.randint(1, 40),
    )


def _probe_record(rng: random.Random, spec: ScanSpec, sport: int, dst_ip: str, dst_port: int, tod: int) -> FlowRecord:
    return FlowRecord(
        raw_field_1=rng.randint(0, 9999),
        raw_field_2=rng.randint(0, 9999),
        event_time=tod,
        protocol=Protocol.TCP,
        source_ip=spec.scanner_ip,
        source_port=sport,
        dest_ip=dst_ip,
        dest_port=dst_port,
        raw_field_8=rng.randint(0, 999),
        packets=rng.randint(1, 6),
    )


def _draw_background_time(rng: random.Random, duration: int, forbidden: list[tuple[int, int]]) -> int:
    for _ in range(_MAX_REJECTS):
        t = rng.randrange(duration)
        if not any(lo <= t <= hi for lo, hi in forbidden):
            return t
    raise ConfigError("background flows cannot avoid the adjacent scan windows")


def generate(config: GenConfig) -> tuple[list[str], GroundTruth]:
    """Produce log lines sorted by time plus ground truth locating every
    injected probe by line number. Same config, same bytes."""
    rng = random.Random(config.seed)
    space = _AddressSpace(rng, config.local_nets, (s.scanner_ip for s in config.scans))
    tod = lambda offset: (config.start_tod + offset) % 86400

    # entries: (time offset, order-breaking rank, record, probe label)
    entries: list[tuple[int, tuple[int, ...], FlowRecord, tuple[int, int] | None]] = []

    for si, spec in enumerate(config.scans):
        sport = rng.randint(1024, 65535)
        if spec.kind is ScanKind.VERTICAL:
            ports = rng.sample(range(1, 65536), spec.probes)
            targets = [(str(spec.target), port) for port in ports]
        else:
            hosts = space.distinct_local_ips(spec.probes)
            targets = [(host, int(spec.target)) for host in hosts]
        for pi, t in enumerate(spec.probe_times()):
            dst_ip, dst_port = targets[pi]
            record = _probe_record(rng, spec, sport, dst_ip, dst_port, tod(t))
            entries.append((t, (1, si, pi), record, (si, pi)))

    forbidden = [
        (spec.start_time, spec.probe_times()[-1])
        for spec in config.scans
        if spec.adjacency == "adjacent"
    ]
    for i in range(round(config.background_rate * config.duration)):
        t = _draw_background_time(rng, config.duration, forbidden)
        entries.append((t, (0, i), _background_record(rng, space, tod(t)), None))

    # Background sorts before probes at the same second, so probes of one
    # scan stay contiguous when their gap is zero.
    entries.sort(key=lambda e: (e[0], e[1]))

    for si, spec in enumerate(config.scans):
        if spec.adjacency == "interleaved":
            _force_interleaving(rng, space, entries, si)
        else:
            positions = [i for i, e in enumerate(entries) if e[3] is not None and e[3][0] == si]
            if positions[-1] - positions[0] != len(positions) - 1:
                raise ConfigError(f"scan {si} cannot stay adjacent; scans overlap in time")

    truth = _collect_truth(config.scans, entries)
    # Format in place so records are freed as lines appear; corpora can run
    # to millions of entries.
    lines: list[str] = []
    for i, entry in enumerate(entries):
        lines.append(format_line(entry[2]))
        entries[i] = None  # type: ignore[call-overload]
    return lines, truth


def _force_interleaving(
    rng: random.Random,
    space: _AddressSpace,
    entries: list[tuple[int, tuple[int, ...], FlowRecord, tuple[int, int] | None]],
    si: int,
) -> None:
    """Insert a background flow wherever two probes of scan si touch."""
    while True:
        positions = [i for i, e in enumerate(entries) if e[3] is not None and e[3][0] == si]
        insert_at = None
        for a, b in zip(positions, positions[1:]):
            if b == a + 1:
                insert_at = a + 1
                break
        if insert_at is None:
            return
        t = entries[insert_at - 1][0]
        record = _background_record(rng, space, entries[insert_at - 1][2].event_time)
        entries.insert(insert_at, (t, (0, -1), record, None))


def _collect_truth(
    scans: Sequence[ScanSpec],
    entries: list[tuple[int, tuple[int, ...], FlowRecord, tuple[int, int] | None]],
) -> GroundTruth:
    by_scan: dict[int, list[tuple[int, int]]] = {si: [] for si in range(len(scans))}
    for pos, entry in enumerate(entries):
        if entry[3] is not None:
            si, pi = entry[3]
            by_scan[si].append((pi, pos + 1))
    out = []
    for si, spec in enumerate(scans):
        numbers = tuple(line for _, line in sorted(by_scan[si]))
        out.append(GroundTruthScan(spec.kind, spec.scanner_ip, spec.target, numbers))
    return GroundTruth(tuple(out))


def ground_truth_check(detections: Iterable[object], truth: GroundTruth) -> tuple[float, int]:
    """Score detections against ground truth.

    A detection matches a scan when kind, scanner, and target agree; a
    target of None (detectors that do not report one) matches on the first
    two alone. Returns (recall, false positive count).
    """
    expected = [(s.kind, s.scanner_ip, s.target) for s in truth.scans]
    matched: set[int] = set()
    false_positives = 0
    for det in detections:
        if isinstance(det, ScanAlert):
            kind, scanner, target = det.kind, det.remote_ip, det.fixed
        else:
            kind, scanner, target = det  # type: ignore[misc]
        kind = ScanKind(kind)
        hit = False
        for i, (ek, es, et) in enumerate(expected):
            if kind is ek and scanner == es and (target is None or target == et):
                matched.add(i)
                hit = True
        if not hit:
            false_positives += 1
    recall = len(matched) / len(expected) if expected else 1.0
    return recall, false_positives


def _netbus_slow() -> GenConfig:
    # Four probes to one service port across four hosts, twelve minutes
    # apart, buried in an hour of benign noise.
    return GenConfig(
        duration=3600,
        background_rate=3.0,
        seed=1105,
        scans=(
            ScanSpec(
                kind=ScanKind.HORIZONTAL,
                scanner_ip="5.5.5.10",
                target=12346,
                probes=4,
                inter_probe_gap=720,
                start_time=213,
                adjacency="interleaved",
            ),
        ),
    )


_PRESETS = {"netbus-slow": _netbus_slow}

PRESET_NAMES = tuple(sorted(_PRESETS))


def preset(name: str) -> GenConfig:
    maker = _PRESETS.get(name)
    if maker is None:
        raise ConfigError(f"unknown preset {name!r} (have: {', '.join(PRESET_NAMES)})")
    return maker()


def gen_config_from_dict(data: dict) -> GenConfig:
    """Build a GenConfig from a parsed YAML mapping."""
    if not isinstance(data, dict):
        raise ConfigError("generator config must be a mapping")
    known = {"duration", "background_rate", "local_nets", "seed", "scans", "start_tod"}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown generator config keys: {', '.join(sorted(unknown))}")
    scans = []
    for item in data.get("scans", []):
        scan_known = {"kind", "scanner_ip", "target", "probes", "inter_probe_gap", "start_time", "adjacency"}
        extra = set(item) - scan_known
        if extra:
            raise ConfigError(f"unknown scan keys: {', '.join(sorted(extra))}")
        try:
            scans.append(ScanSpec(**item))
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
    kwargs = {k: v for k, v in data.items() if k != "scans"}
    if "local_nets" in kwargs:
        kwargs["local_nets"] = tuple(kwargs["local_nets"])
    try:
        return GenConfig(scans=tuple(scans), **kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
