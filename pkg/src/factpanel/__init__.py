"""Panel-of-LLMs news factuality annotation pipeline.

Annotates news articles with a panel of chat-completion endpoints,
aggregates the panel's labels by majority vote, routes contested
articles to a human review workflow, evaluates annotations with LLM
judges, and renders reference-based metric and agreement-rate reports.
"""

__version__ = "0.1.0"

from .corpus import Article, GoldLabel, Label, Taxonomy

__all__ = ["Article", "GoldLabel", "Label", "Taxonomy", "__version__"]
