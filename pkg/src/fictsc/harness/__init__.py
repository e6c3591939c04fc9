"""Experiment harness: training loop, metrics, statistics, synthetic shift benchmark and CLI."""
