"""Test package for pytest test discovery and fixtures."""
