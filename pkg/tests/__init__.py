"""Tests for the LPS forward solver."""
