"""Worlds, target agents, scenario configs and the experiment harness."""
