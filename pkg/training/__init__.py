"""
Training Package
Loss, metrics, optimizer, training/evaluation loops and the evaluation studies
"""
