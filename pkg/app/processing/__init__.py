"""Volume estimation from captured echo timestamps."""
