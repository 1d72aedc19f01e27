"""Tests for followup-kg."""
