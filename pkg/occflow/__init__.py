"""
occflow/__init__.py
Occupancy and backward-flow prediction on a numpy autograd core.
"""
