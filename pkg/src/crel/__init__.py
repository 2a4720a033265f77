"""Conversational entity linking toolkit.

Links named entities, concepts, and personal entity mentions ("my cars")
in multi-turn dialogues to a small local knowledge base, and ships an
agreement-gated annotation service for building gold data.
"""

__version__ = "0.1.0"
