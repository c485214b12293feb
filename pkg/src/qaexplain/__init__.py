"""Quality-attribute-based contrastive explanations for multi-objective MDP planning."""

__version__ = "0.1.0"
