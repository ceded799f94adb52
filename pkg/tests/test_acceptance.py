"""Acceptance criteria, one PASS/FAIL line each.

Run under pytest (lines appear in the -v output) or directly with
``python tests/test_acceptance.py``.
"""
from __future__ import annotations

import math
import time

import numpy as np
import pytest

from plcbench import frame_model as fm
from plcbench import offload as om
from plcbench.emulator import (DataBlockStore, DataSetWriterConfig, Endpoints, OpcUaWriteEndpoint, PubSubConfig,
                               WriterGroupConfig, configure_pubsub, handle_s7_read, serve)
from plcbench.codecs import s7
from plcbench.errors import TooManyFields, TooManyWriters, UnsupportedInterface
from plcbench.harness import measure_loopback, summarize
from plcbench.profiles import BUCKETS, PROFILES, S7_314, S7_1512, Device, Interface
from plcbench.selftest import run_selftest

I = Interface

MESSAGE_SIZES = {
    "UDP_Data": (72, 94, 454),
    "TCP_Data": (144, 178, 538),
    "Job": (169, 169, 169),
    "Ack_Data": (167, 203, 563),
    "WriteRequest": (234, 396, 2154),
    "WriteResponse": (202, 238, 598),
    "ReadRequest": (270, 756, 5778),
    "ReadResponse": (212, 338, 1598),
    "DataSetMessage": (73, 118, 568),
}

EFFICIENCY = {
    I.OUC_UDP: ("5.6", "42.6", "88.1"),
    I.OUC_TCP: ("2.8", "22.5", "74.4"),
    I.S7: ("1.2", "10.8", "54.6"),
    I.OPCUA_WRITE: ("0.9", "6.3", "14.5"),
    I.OPCUA_READ: ("0.8", "3.7", "5.4"),
    I.UADP: ("5.5", "33.9", "70.4"),
}
S7_314_HALVED = "27.3"

BREAK_EVEN = {
    (I.OUC_UDP, Device.S7_314): (54, 54, 54),
    (I.OUC_UDP, Device.S7_1512): (102, 102, 102),
    (I.OUC_TCP, Device.S7_314): (55, 56, 55),
    (I.OUC_TCP, Device.S7_1512): (106, 106, 108),
    (I.S7, Device.S7_314): (104, 104, 207),
    (I.S7, Device.S7_1512): (39, 39, 41),
    (I.OPCUA_WRITE, Device.S7_1512): (190, 205, 457),
    (I.OPCUA_READ, Device.S7_1512): (253, 835, 6753),
    (I.UADP, Device.S7_1512): (31, 37, 66),
}


def report(number: int, ok: bool, detail: str, capsys=None) -> None:
    line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
    if capsys is None:
        print(line)
    else:
        with capsys.disabled():
            print("\n" + line)


# -- checks ------------------------------------------------------------------------------


def check_message_sizes() -> tuple[bool, str]:
    wrong = [(name, n, fm.message_size(name, n), want)
             for name, sizes in MESSAGE_SIZES.items() for n, want in zip(BUCKETS, sizes)
             if fm.message_size(name, n) != want]
    total = sum(len(v) for v in MESSAGE_SIZES.values())
    distinct = total - 2        # Job is one value printed for all three columns
    return not wrong, f"{total - len(wrong)}/{total} cells ({distinct} distinct sizes) bit-exact; mismatches {wrong}"


def check_efficiency() -> tuple[bool, str]:
    wrong = []
    for iface, cells in EFFICIENCY.items():
        for n, want in zip(BUCKETS, cells):
            got = str(fm.table_percent(fm.protocol_efficiency(iface, n, S7_1512)))
            if got != want:
                wrong.append((iface.value, n, got, want))
    halved = str(fm.table_percent(fm.protocol_efficiency(I.S7, 100, S7_314)))
    if halved != S7_314_HALVED:
        wrong.append(("s7 314", 100, halved, S7_314_HALVED))
    rows = fm.build_table1(list(PROFILES.values())).rows
    flagged = [(r.interface, r.device.short, r.n) for r in rows if r.estimated]
    flag_ok = flagged == [(I.UADP, "1512", 100)]
    cells = sum(len(v) for v in EFFICIENCY.values()) + 1
    ok = not wrong and flag_ok
    return ok, f"{cells - len(wrong)}/{cells} cells at one decimal; UADP n=100 estimated={flag_ok}; mismatches {wrong}"


def check_break_even() -> tuple[bool, str]:
    table = om.build_breakeven_table()
    wrong = []
    for (iface, device), printed in BREAK_EVEN.items():
        for n, want in zip(BUCKETS, printed):
            got = table.cell(iface, device, n).n_br
            if got != want:
                wrong.append((iface.value, device.short, n, got, want))
    flag_ok = table.cell(I.UADP, Device.S7_1512, 100).estimated
    cells = sum(len(v) for v in BREAK_EVEN.values())
    ok = not wrong and flag_ok
    return ok, (f"{cells - len(wrong)}/{cells} cells exact; UADP n=100 estimated={flag_ok}; "
                f"mismatches (computed, printed) {wrong}")


def check_leibniz() -> tuple[bool, str]:
    rows_ok = []
    for digits, (_, printed) in enumerate(om.PI_TABLE, start=1):
        row = om.digits_required(digits, brute_force=False)
        rows_ok.append(om.pi_prefix(row.approximation, sum(c.isdigit() for c in printed)) == printed)
    sums = om.leibniz_partial_sums(10**6)
    ns = np.unique(np.concatenate(([0], np.logspace(0, 6, 400).astype(int))))
    errors = np.abs(sums[ns] - math.pi)
    bound_ok = bool(np.all(errors <= 4 / (2 * ns + 3)))
    spot = all(sums[n] == om.leibniz_pi(n) for n in ns[::40])
    ok = all(rows_ok) and bound_ok and spot
    return ok, (f"table rows {sum(rows_ok)}/6 reproduced; "
                f"bound |S(n) - pi| <= 4/(2n+3) over {ns.size} log-spaced n: {bound_ok}")


def check_codecs() -> tuple[bool, str]:
    report_ = run_selftest(1000, seed=0)
    return report_.ok, (f"{sum(report_.roundtrips.values())} round-trips over {len(report_.roundtrips)} codecs, "
                        f"{report_.size_checks} size checks; failures {len(report_.roundtrip_failures)} / {len(report_.size_failures)}")


def loopback_plan(t_ms: float) -> tuple[int, int]:
    """(samples, warmup) per cell, keeping the full matrix within a few minutes."""
    if t_ms <= 5:
        return 300, 50
    if t_ms <= 20:
        return 150, 50
    return 100, 5


def check_loopback() -> tuple[bool, str]:
    outside, worst, cells = [], 0.0, 0
    for profile in PROFILES.values():
        for iface in sorted(profile.supports, key=list(I).index):
            for n in BUCKETS:
                if profile.is_estimated(iface, n):
                    continue
                t_ms = profile.update_time(iface, n)
                count, warmup = loopback_plan(t_ms)
                stats = summarize(measure_loopback(profile, iface, n, count, warmup=warmup, seed=n))
                cells += 1
                ratio = stats.min / t_ms
                worst = max(worst, ratio)
                if not 1.0 <= ratio <= 1.05:
                    outside.append((iface.value, profile.model.short, n, round(stats.min, 4), t_ms))
    return not outside, (f"{cells - len(outside)}/{cells} cells with min in [T, 1.05 T]; "
                         f"worst min/T {worst:.4f}; outside {outside}")


def check_limits() -> tuple[bool, str]:
    failures = []
    if fm.requests_per_exchange(I.S7, 100, S7_314) != [50, 50]:
        failures.append(("split", 100))
    for n in range(1, 101):
        split = fm.requests_per_exchange(I.S7, n, S7_314)
        # 240-byte PDU less 12 header, 2 parameter and 4 item-header bytes holds 55 values
        parts = math.ceil(n / 55)
        expected = [n // parts + (i < n % parts) for i in range(parts)]
        if split != expected:
            failures.append(("split", n, split))
        job = s7.S7Message(s7.S7Kind.JOB, 1, items=(s7.ReadItem(s7.AREA_DB, 1, 0, 4 * n),))
        acks = handle_s7_read(job, S7_314, DataBlockStore())
        if any(len(s7.encode(a)) - s7.TPKT_HEADER - s7.COTP_DT_HEADER > S7_314.pdu_limit for a in acks):
            failures.append(("pdu", n))
        one_writer = PubSubConfig((WriterGroupConfig(1, 2.30, (DataSetWriterConfig(1, n),)),))
        try:
            configure_pubsub(one_writer, S7_1512)
            accepted = True
        except TooManyFields:
            accepted = False
        if accepted != (n <= 10):
            failures.append(("fields", n))
        writers = tuple(DataSetWriterConfig(i, 1) for i in range(n))
        try:
            configure_pubsub(PubSubConfig((WriterGroupConfig(1, 2.30, writers),)), S7_1512)
            accepted = True
        except TooManyWriters:
            accepted = False
        if accepted != (n <= 2):
            failures.append(("writers", n))
        for endpoints in (Endpoints(opcua_port=0), Endpoints(opcua_write=OpcUaWriteEndpoint(("127.0.0.1", 9), n))):
            try:
                serve(S7_314, endpoints=endpoints).stop()
                failures.append(("opcua on 314", n))
            except UnsupportedInterface:
                pass
    return not failures, f"S7 split, PDU, fields<=10, writers<=2, 314 OPC UA refusal over n=1..100; failures {failures}"


CHECKS = {
    1: ("message sizes", check_message_sizes),
    2: ("protocol efficiency", check_efficiency),
    3: ("break-even points", check_break_even),
    4: ("Leibniz digits and error bound", check_leibniz),
    5: ("codec round-trip and sizes", check_codecs),
    6: ("loopback timing closure", check_loopback),
    7: ("limit conformance", check_limits),
}

BUDGET_S = {1: 1, 2: 1, 3: 1, 4: 10, 5: 30, 6: 300, 7: 30}


@pytest.mark.parametrize("number", sorted(CHECKS), ids=[f"criterion_{k}_{v[0].replace(' ', '_')}"
                                                          for k, v in sorted(CHECKS.items())])
def test_criterion(number, capsys):
    started = time.perf_counter()
    ok, detail = CHECKS[number][1]()
    elapsed = time.perf_counter() - started
    within = elapsed < BUDGET_S[number]
    report(number, ok and within, f"{CHECKS[number][0]}: {detail} ({elapsed:.2f} s, budget {BUDGET_S[number]} s)",
           capsys)
    assert ok, detail
    assert within, f"took {elapsed:.2f} s"


if __name__ == "__main__":
    for number, (name, check) in sorted(CHECKS.items()):
        started = time.perf_counter()
        ok, detail = check()
        report(number, ok, f"{name}: {detail} ({time.perf_counter() - started:.2f} s)")
