"""fedsim: deterministic federated learning simulation with model poisoning attacks and defenses"""

__version__ = "1.0.0"
