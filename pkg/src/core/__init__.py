"""Geometry and trajectory helpers shared by every module."""
