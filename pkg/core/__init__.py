"""
Core Package
Tensor engine, network modules and the depth inference service
"""
