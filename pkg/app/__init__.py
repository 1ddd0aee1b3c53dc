"""Application module initialization."""
