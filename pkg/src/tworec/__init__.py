"""Two-sided recommendation integrators with congestion-adjusted evaluation."""
