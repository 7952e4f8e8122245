"""Noyau SGD skipgram / échantillonnage négatif compilé avec numba."""

import math

import numpy as np
from numba import njit


@njit(cache=False, nogil=True)
def _sigmoid(x):
    if x >= 0.0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


@njit(cache=False, nogil=True)
def sgns_train_pairs(word_rows, ngram_rows, out_rows, centers, contexts, negatives, sub_ptr, sub_ids, lr):
    """
    Un pas de SGD par paire (centre, contexte). L'entrée d'un mot est la moyenne
    de sa ligne de mot et de ses lignes n-grammes ; chaque ligne d'entrée reçoit
    le gradient exact de cette moyenne. Les négatifs égaux au contexte sont ignorés.
    """
    dim = word_rows.shape[1]
    h = np.empty(dim)
    grad = np.empty(dim)
    n_neg = negatives.shape[1]
    for p in range(centers.shape[0]):
        c = centers[p]
        start = sub_ptr[c]
        stop = sub_ptr[c + 1]
        n_in = 1.0 + (stop - start)
        for d in range(dim):
            acc = word_rows[c, d]
            for k in range(start, stop):
                acc += ngram_rows[sub_ids[k], d]
            h[d] = acc / n_in
            grad[d] = 0.0

        for j in range(n_neg + 1):
            if j == 0:
                t = contexts[p]
                label = 1.0
            else:
                t = negatives[p, j - 1]
                if t == contexts[p]:
                    continue
                label = 0.0
            f = 0.0
            for d in range(dim):
                f += h[d] * out_rows[t, d]
            g = (label - _sigmoid(f)) * lr
            for d in range(dim):
                grad[d] += g * out_rows[t, d]
                out_rows[t, d] += g * h[d]

        for d in range(dim):
            grad[d] /= n_in
            word_rows[c, d] += grad[d]
        for k in range(start, stop):
            b = sub_ids[k]
            for d in range(dim):
                ngram_rows[b, d] += grad[d]
