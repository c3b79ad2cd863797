"""Test suite for PDF Generator."""
