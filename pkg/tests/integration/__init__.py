"""Integration tests for diffbev end-to-end runs."""
