"""Tests for diffbev."""
