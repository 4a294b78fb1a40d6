"""Action-aware sub-task navigation on synthetic 2D scenes."""
