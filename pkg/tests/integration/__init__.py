"""End-to-end acceptance tests for the LPS forward solver."""
