"""
Decoherent Histories Simulation Toolkit
Class operators, decoherence functionals, open-system dynamics and
timeless probabilities at desk scale.
"""
__version__ = "0.1.0"
