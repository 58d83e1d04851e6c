"""Arrival-time laboratory for the mean-convex level set flow."""
