"""Synthesis of randomized memoryless policies for probabilistic hyperproperties on MDPs."""
__version__ = "0.1.0"
