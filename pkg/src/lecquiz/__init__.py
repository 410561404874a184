"""Lecture-to-quiz pipeline with deterministic quality control.

A pluggable draft generator produces one multiple-choice question per call;
hard QC checks reject and retry, warning checks accept and log, and the
accepted items are exported as static JSONL/CSV banks with run manifests.
"""
__version__ = "0.1.0"
