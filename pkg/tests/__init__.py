"""Test suite for lane-change-impact."""
