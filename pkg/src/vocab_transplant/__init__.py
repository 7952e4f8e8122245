"""Adaptation d'un vocabulaire sous-mot et de sa matrice d'embeddings à un domaine cible."""

__version__ = "0.1.0"
