"""Tests for CosmicDRAM."""
