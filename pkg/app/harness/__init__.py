"""Scenario runner, session logs, reports and the reflector scan."""
