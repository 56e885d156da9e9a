"""Unsupervised reply-structure recovery for flat chat threads.

Pipeline: JSONL chat logs -> canonical threads -> context-window post
embeddings -> self-exciting (Hawkes) temporal segmentation -> similarity
graph pruning -> reply forest with one root per conversation.
"""

__version__ = "0.1.0"
