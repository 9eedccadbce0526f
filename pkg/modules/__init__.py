"""Simulation modules for cooperative target localization over limited backhaul."""
