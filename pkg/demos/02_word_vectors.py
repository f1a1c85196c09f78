#!/usr/bin/env python3
"""Word-vector tables: file loading, fallbacks, phrase composition.

Writes a miniature vector file, loads it back, and shows how multi-word
phrases compose by summation and what happens out of vocabulary.
"""

import tempfile
from pathlib import Path

import numpy as np

from nbtrack.wordvec import (
    load_vectors, random_table, tokenize, xavier_bound,
)

tmp = Path(tempfile.mkdtemp())
vec_file = tmp / "vectors.txt"
vec_file.write_text(
    "price 1.0 0.0 0.0\n"
    "range 0.0 1.0 0.0\n"
    "cheap 0.0 0.0 1.0\n")

table = load_vectors(vec_file)
print(f"loaded {len(table)} vectors of dimension {table.dim}")
print("lookup('price')      ->", table.lookup("price"))
print("lookup('Cheap!')     ->", table.lookup("Cheap!"), "(case/punct folded)")
print("lookup('unknown')    ->", table.lookup("unknown"), "(zero fallback)")
print("oov count so far:    ", table.oov_count)

# multi-word names compose additively, so order does not matter
phrase = table.embed_phrase(["price", "range"])
print("embed_phrase(price range) ->", phrase)
assert np.array_equal(phrase, table.embed_phrase(["range", "price"]))

# the shared tokenizer feeding every lookup
print("tokenize('I want CHEAP food!') ->", tokenize("I want CHEAP food!"))

# deterministic random table for controlled comparisons
rand = random_table(["alpha", "beta"], dim=300, seed=7)
bound = xavier_bound(300)
vec = rand.lookup("alpha")
print(f"random table: |entries| <= {bound:.4f} "
      f"(observed max {np.abs(vec).max():.4f})")
assert np.array_equal(vec, random_table(["alpha"], 300, seed=7).lookup("alpha"))
print("same (token, seed) always gives the same vector")
