"""Firmware-side sweep scheduling and the timestamp wire protocol."""
