"""Region-growing curriculum for goal-conditioned policies under sparse rewards."""
