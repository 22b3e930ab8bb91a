"""Axially symmetric volume-preserving mean curvature flow."""
