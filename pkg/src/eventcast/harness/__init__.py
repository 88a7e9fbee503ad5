"""Experiment harness: adversary generators, scenario runners, rate
diagnostics, and the command-line interface."""
