"""Integration tests for PDF Generator."""
