"""Scenario runner: YAML scenarios in, CSV/JSON artifacts and exit codes out."""
