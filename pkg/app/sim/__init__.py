"""Forward simulation: phantoms, acoustics and the receive chain."""
