"""``plcbench`` command line.

Exit status: 0 on success, 1 for configuration errors, 2 for runtime or
network failures.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import signal
import sys
import threading
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

from . import __version__, frame_model, offload
from .errors import InvalidConfig, PlcBenchError, UnsupportedInterface
from .profiles import BUCKETS, PROFILES, Device, Interface, get_profile

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2
MODES = ("emulate", "measure", "tables", "breakeven", "roundtrip-selftest")
FORMATS = ("csv", "md", "json")
N_RANGE = (1, 100)

log = logging.getLogger("plcbench")


class ConfigError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _split(values: Sequence[str] | None) -> list[str]:
    return [part for v in values or () for part in str(v).split(",") if part]


@dataclass(frozen=True)
class BenchConfig:
    mode: str
    profiles: tuple[str, ...] = ()
    interfaces: tuple[str, ...] = ()
    n_values: tuple[int, ...] = BUCKETS
    out: str | None = None
    format: str = "csv"
    t_update_from: tuple[str, ...] = ()
    scenario: str | None = None
    endpoint: str | None = None
    count: int | None = None
    warmup: int = 50
    seed: int = 0
    duration: float | None = None
    emulator_config: str | None = None
    ports: dict = field(default_factory=dict)
    peer: str | None = None

    def validate(self) -> "BenchConfig":
        if self.mode not in MODES:
            raise InvalidConfig(f"unknown mode {self.mode!r}")
        if self.format not in FORMATS:
            raise InvalidConfig(f"unknown format {self.format!r}")
        for name in self.profiles:
            get_profile(name)
        for name in self.interfaces:
            Interface.parse(name)
        lo, hi = N_RANGE
        for n in self.n_values:
            if not lo <= n <= hi:
                raise InvalidConfig(f"n={n} outside [{lo}, {hi}]")
        if (self.count is not None and self.count < 1) or self.warmup < 0:
            raise InvalidConfig("count must be positive and warmup non-negative")
        return self

    @property
    def profile_objs(self):
        return [get_profile(p) for p in self.profiles] if self.profiles else list(PROFILES.values())

    @property
    def interface_objs(self) -> list[Interface]:
        return [Interface.parse(i) for i in self.interfaces] if self.interfaces else list(Interface)

    def digest(self) -> str:
        """Hash of everything that shapes the report, including input file contents."""
        data = asdict(self)
        data.pop("out")
        data["inputs"] = {p: _file_digest(p) for p in (*self.t_update_from, self.scenario) if p}
        blob = json.dumps(data, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _file_digest(path: str) -> str:
    try:
        return hashlib.sha256(Path(path).read_bytes()).hexdigest()
    except OSError:
        return "missing"


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="plcbench", description="PLC interface efficiency, timing and offloading benchmark")
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--config", help="JSON file with default values for any option (env: PLCBENCH_CONFIG)")
    p.add_argument("--profile", "--device", dest="profiles", action="append", metavar="NAME",
                   help="s7-314 or s7-1512; repeatable or comma separated (default: all)")
    p.add_argument("--interface", "--interfaces", dest="interfaces", action="append", metavar="NAME",
                   help="ouc-udp, ouc-tcp, s7, opcua-write, opcua-read, uadp (default: all)")
    p.add_argument("--n", dest="n_values", action="append", metavar="N",
                   help="values per message; repeatable or comma separated (default: 1,10,100)")
    p.add_argument("--out", help="output directory (default: stdout)")
    p.add_argument("--format", choices=FORMATS)
    p.add_argument("--t-update-from", dest="t_update_from", action="append", metavar="STATS_JSON",
                   help="measured update-time stats replacing the profile constant of their cell")
    p.add_argument("--scenario", help="offloading scenario JSON for breakeven mode")
    p.add_argument("--endpoint", help="HOST:PORT of a real device (measure mode) instead of the emulator")
    p.add_argument("--count", type=int, help="samples per measurement after warmup")
    p.add_argument("--warmup", type=int, help="samples discarded at the start of a measurement")
    p.add_argument("--seed", type=int)
    p.add_argument("--duration", type=float, help="emulate mode: seconds to run (default: until interrupted)")
    p.add_argument("--emulator-config", help="emulate mode: emulator JSON config")
    for name in ("s7", "opcua", "ouc-tcp"):
        p.add_argument(f"--port-{name}", type=int, metavar="PORT", help=f"emulate mode: {name} listening port")
    p.add_argument("--peer", help="emulate mode: HOST:PORT receiving pushed OUC-UDP, OPC UA Write and UADP traffic")
    p.add_argument("-v", "--verbose", action="store_true")
    p.add_argument("--version", action="version", version=f"plcbench {__version__}")
    return p


def resolve_config(args: argparse.Namespace, environ=os.environ) -> BenchConfig:
    defaults: dict = {}
    path = args.config or environ.get("PLCBENCH_CONFIG")
    if path:
        try:
            defaults = json.loads(Path(path).read_text())
        except (OSError, ValueError) as exc:
            raise InvalidConfig(f"cannot read config {path}: {exc}") from exc
        if not isinstance(defaults, dict):
            raise InvalidConfig(f"config {path} must hold a JSON object")

    def pick(key: str, default=None):
        value = getattr(args, key, None)
        return value if value not in (None, []) else defaults.get(key, default)

    def as_list(key: str) -> list[str]:
        value = pick(key)
        return _split(value if isinstance(value, list) else [value] if value is not None else [])

    mode = pick("mode")
    if mode is None:
        raise InvalidConfig("--mode is required")
    try:
        n_values = tuple(int(n) for n in as_list("n_values")) or BUCKETS
    except ValueError as exc:
        raise InvalidConfig(f"bad --n: {exc}") from exc
    ports = {k: v for k in ("s7", "opcua", "ouc_tcp")
             if (v := pick(f"port_{k}", defaults.get("ports", {}).get(k))) is not None}
    try:
        cfg = BenchConfig(
            mode=mode,
            profiles=tuple(get_profile(p).model.value for p in as_list("profiles")),
            interfaces=tuple(Interface.parse(i).value for i in as_list("interfaces")),
            n_values=n_values,
            out=pick("out"),
            format=pick("format", "csv"),
            t_update_from=tuple(as_list("t_update_from")),
            scenario=pick("scenario"),
            endpoint=pick("endpoint"),
            count=None if pick("count") is None else int(pick("count")),
            warmup=int(pick("warmup", 50)),
            seed=int(pick("seed", 0)),
            duration=pick("duration"),
            emulator_config=pick("emulator_config"),
            ports=ports,
            peer=pick("peer"),
        )
    except (TypeError, ValueError) as exc:
        raise InvalidConfig(str(exc)) from exc
    return cfg.validate()


# -- output ----------------------------------------------------------------------------


def render(columns: Sequence[str], records: list[dict], fmt: str, header: str, title: str) -> str:
    if fmt == "json":
        return json.dumps({"header": header, "table": title, "rows": records}, indent=2, sort_keys=True) + "\n"
    if fmt == "md":
        return f"<!-- {header} -->\n\n## {title}\n\n" + frame_model.records_to_markdown(columns, records)
    return f"# {header}\n" + frame_model.records_to_csv(columns, records)


def emit(cfg: BenchConfig, outputs: list[tuple[str, str]]) -> None:
    """Write ``(stem, text)`` pairs to the output directory or stdout."""
    if cfg.out is None:
        sys.stdout.write("\n".join(text for _, text in outputs))
        return
    out = Path(cfg.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        for stem, text in outputs:
            (out / f"{stem}.{cfg.format}").write_text(text)
    except OSError as exc:
        raise InvalidConfig(f"cannot write to {out}: {exc}") from exc


def report_header(cfg: BenchConfig) -> str:
    return f"plcbench {__version__} mode={cfg.mode} config={cfg.digest()}"


def _load_stats(paths: Sequence[str]) -> dict[tuple[Interface, Device, int], float]:
    overrides = {}
    for path in paths:
        try:
            data = json.loads(Path(path).read_text())
            key = (Interface.parse(data["interface"]), Device.parse(data["device"]), int(data["n"]))
            overrides[key] = float(data["min"])
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise InvalidConfig(f"cannot use stats file {path}: {exc}") from exc
    return overrides


# -- modes -----------------------------------------------------------------------------


def cmd_tables(cfg: BenchConfig) -> list[tuple[str, str]]:
    header = report_header(cfg)
    interfaces = cfg.interface_objs
    names = [name for name, layout in frame_model.LAYOUTS.items() if layout.interface in interfaces]
    sizes = frame_model.size_rows_records(frame_model.build_table2(cfg.n_values, names))
    table1 = frame_model.build_table1(cfg.profile_objs, interfaces, cfg.n_values)
    overrides = _load_stats(cfg.t_update_from)
    table1.rows = [replace(r, update_time_ms=overrides.get((r.interface, r.device, r.n), r.update_time_ms))
                   for r in table1.rows]
    return [
        ("table2_message_sizes", render(frame_model.SIZE_COLUMNS, sizes, cfg.format, header, "Message sizes")),
        ("table1_interfaces", render(table1.COLUMNS, table1.records(), cfg.format, header,
                                     "Efficiency and update time")),
    ]


BREAKEVEN_SCENARIO_COLUMNS = ("scenario", "t_update_ms", "requests", "t_network_us", "t_overhead_us", "n_br")


def cmd_breakeven(cfg: BenchConfig) -> list[tuple[str, str]]:
    header = report_header(cfg)
    overrides = _load_stats(cfg.t_update_from)
    if cfg.scenario:
        scenario = offload.load_scenario(cfg.scenario)
        if len(cfg.t_update_from) == 1:
            scenario = offload.with_t_update(scenario, offload.t_update_from_stats(cfg.t_update_from[0]))
        try:
            label = str(offload.break_even(scenario))
        except PlcBenchError as exc:
            label = f"none ({exc})"
        record = {"scenario": Path(cfg.scenario).stem, "t_update_ms": f"{scenario.t_update_us / 1000:g}",
                  "requests": scenario.requests, "t_network_us": f"{float(scenario.network.t_network_us):g}",
                  "t_overhead_us": f"{float(scenario.overhead.t_overhead_us):g}", "n_br": label}
        return [("breakeven_scenario", render(BREAKEVEN_SCENARIO_COLUMNS, [record], cfg.format, header,
                                              "Break-even point"))]
    table = offload.build_breakeven_table(cfg.profile_objs, cfg.interface_objs, cfg.n_values,
                                          t_update_overrides=overrides)
    return [("breakeven", render(table.COLUMNS, table.records(), cfg.format, header, "Break-even points"))]


def cmd_measure(cfg: BenchConfig) -> list[tuple[str, str]]:
    from .harness import measure_loopback, run_measurement, summarize, write_run
    from .net import parse_hostport

    header = report_header(cfg)
    records = []
    count = cfg.count or 300
    out = Path(cfg.out) if cfg.out else None
    for profile in cfg.profile_objs:
        for iface in cfg.interface_objs:
            if iface not in profile.supports:
                if cfg.interfaces:
                    raise UnsupportedInterface(f"{iface.value} is not available on {profile.model.value}")
                continue
            for n in cfg.n_values:
                if cfg.endpoint:
                    run = run_measurement(iface, parse_hostport(cfg.endpoint), n, count, warmup=cfg.warmup,
                                          device=profile.model.value)
                else:
                    run = measure_loopback(profile, iface, n, count, warmup=cfg.warmup, seed=cfg.seed)
                stats = summarize(run)
                if out is not None:
                    write_run(run, out / "runs")
                records.append({"interface": iface.value, "device": profile.model.short, "n": n,
                                "configured_ms": f"{profile.update_time(iface, n):.2f}",
                                "min_ms": f"{stats.min:.4f}", "mean_ms": f"{stats.mean:.4f}",
                                "p50_ms": f"{stats.p50:.4f}", "p99_ms": f"{stats.p99:.4f}",
                                "samples": stats.sample_count, "timestamps": run.timestamp_source})
                log.info("%s %s n=%d min %.4f ms", iface.value, profile.model.value, n, stats.min)
    columns = ("interface", "device", "n", "configured_ms", "min_ms", "mean_ms", "p50_ms", "p99_ms", "samples",
               "timestamps")
    return [("measurements", render(columns, records, cfg.format, header, "Measured update times"))]


def _emulator_config(cfg: BenchConfig):
    from .codecs.uadp import UADP_PORT
    from .emulator import (EmulatorConfig, Endpoints, OpcUaWriteEndpoint, OucTcpEndpoint, OucUdpEndpoint,
                           PubSubConfig, PubSubEndpoint)
    from .net import parse_hostport

    if cfg.emulator_config:
        try:
            return EmulatorConfig.from_dict(json.loads(Path(cfg.emulator_config).read_text()))
        except (OSError, ValueError) as exc:
            raise InvalidConfig(f"cannot read emulator config: {exc}") from exc
    if len(cfg.profile_objs) != 1 or not cfg.profiles:
        raise InvalidConfig("emulate mode needs exactly one --profile")
    profile = cfg.profile_objs[0]
    if len(cfg.n_values) != 1 and any(i in (Interface.OUC_UDP, Interface.OUC_TCP, Interface.OPCUA_WRITE,
                                            Interface.UADP) for i in cfg.interface_objs):
        raise InvalidConfig("push interfaces need a single --n")
    n = cfg.n_values[0]
    peer = parse_hostport(cfg.peer, UADP_PORT) if cfg.peer else None
    kw: dict = {}
    wanted = cfg.interface_objs if cfg.interfaces else sorted(profile.supports, key=list(Interface).index)
    for iface in wanted:
        profile.require(iface)
        if iface is Interface.S7:
            kw["s7_port"] = cfg.ports.get("s7", 102)
        elif iface is Interface.OPCUA_READ:
            kw["opcua_port"] = cfg.ports.get("opcua", 4840)
        elif iface is Interface.OUC_TCP:
            peer_host = peer[0] if peer else "127.0.0.1"
            kw["ouc_tcp"] = OucTcpEndpoint(cfg.ports.get("ouc_tcp", 2000), peer_host, n)
        elif peer is None:
            if cfg.interfaces:
                raise InvalidConfig(f"{iface.value} pushes data and needs --peer")
        elif iface is Interface.OUC_UDP:
            kw["ouc_udp"] = OucUdpEndpoint(peer, n)
        elif iface is Interface.OPCUA_WRITE:
            kw["opcua_write"] = OpcUaWriteEndpoint(peer, n)
        else:
            kw["pubsub"] = PubSubEndpoint(PubSubConfig.single(n, profile.update_time(Interface.UADP, n)), peer)
    return EmulatorConfig(profile, Endpoints(**kw), seed=cfg.seed)


def cmd_emulate(cfg: BenchConfig) -> list[tuple[str, str]]:
    from .emulator import DataBlockStore, serve

    ecfg = _emulator_config(cfg)
    emulator = serve(ecfg.profile, DataBlockStore(ecfg.data_blocks), ecfg.endpoints, jitter=ecfg.jitter,
                     seed=ecfg.seed)
    done = threading.Event()
    previous = signal.signal(signal.SIGTERM, lambda *_: done.set())
    print(json.dumps({"profile": ecfg.profile.model.value, "ports": emulator.ports}), flush=True)
    try:
        done.wait(cfg.duration)
    except KeyboardInterrupt:
        pass
    finally:
        signal.signal(signal.SIGTERM, previous)
        emulator.stop()
    return []


def cmd_selftest(cfg: BenchConfig) -> list[tuple[str, str]]:
    from .selftest import run_selftest

    report = run_selftest(cfg.count or 1000, cfg.seed)
    for failure in report.roundtrip_failures + report.size_failures:
        log.error("%s", failure)
    text = render(("check", "count", "failures"), report.records(), cfg.format, report_header(cfg), "Codec self-test")
    if not report.ok:
        sys.stdout.write(text)
        raise RuntimeError("codec self-test failed")
    return [("selftest", text)]


COMMANDS = {"tables": cmd_tables, "breakeven": cmd_breakeven, "measure": cmd_measure, "emulate": cmd_emulate,
            "roundtrip-selftest": cmd_selftest}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except ConfigError as exc:
        print(f"plcbench: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        emit(cfg, COMMANDS[cfg.mode](cfg))
    except (InvalidConfig, UnsupportedInterface) as exc:
        print(f"plcbench: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (PlcBenchError, OSError, RuntimeError) as exc:
        print(f"plcbench: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
