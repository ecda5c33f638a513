#!/usr/bin/env python3
"""Toy external model for the subprocess evaluator.

Reads one JSON array (the input z) per line and answers with one JSON
array holding the model's outputs.
"""
import json
import sys

weights = [float(w) for w in sys.argv[1:]]
for line in sys.stdin:
    z = json.loads(line)
    value = sum(w * x for w, x in zip(weights, z))
    print(json.dumps([value]), flush=True)
