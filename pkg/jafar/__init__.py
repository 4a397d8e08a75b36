"""JAFAR Multiview - Bayesian multiview factor regression with adaptive CUSP priors"""

__version__ = "0.3.0"
__author__ = "JAFAR Multiview Contributors"
