"""Benchmark toolkit for PLC data-access interfaces: frame-level efficiency,
a software PLC, an edge measurement harness and an offloading model."""

__version__ = "0.1.0"
