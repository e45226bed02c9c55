"""Seedable Gaussian draw streams with independent per-trial substreams.

Built on numpy's counter-based Philox generator so that substream k of a
given seed is reachable without generating substreams 0..k-1 first.  The
normal transform is numpy's ziggurat; the method name is exposed so result
files can record it (outputs are reproducible only per (seed, method)).
"""

from __future__ import annotations

import numpy as np

# Recorded in every result header; bump if the draw pipeline changes.
GAUSSIAN_METHOD = "philox4x64-ziggurat"

_SQRT_HALF = np.sqrt(0.5)


class GaussianStream:
    """One deterministic stream of standard Gaussians.

    Identified by (seed, stream_id).  The same pair always reproduces the
    identical draw sequence bit for bit; distinct stream_ids give
    statistically independent sequences (distinct Philox keys).
    """

    def __init__(self, seed: int, stream_id: int = 0):
        if not (0 <= int(seed) < 2**64):
            raise ValueError("seed must fit in 64 bits")
        if not (0 <= int(stream_id) < 2**64):
            raise ValueError("stream_id must fit in 64 bits")
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        self.counter = 0
        self._gen = np.random.Generator(
            np.random.Philox(key=np.array([self.seed, self.stream_id], dtype=np.uint64))
        )

    def __repr__(self):
        return (f"GaussianStream(seed={self.seed}, stream_id={self.stream_id}, "
                f"counter={self.counter})")

    def substream(self, stream_id: int) -> "GaussianStream":
        """Fresh stream with the same seed and a new stream_id (trial index)."""
        return GaussianStream(self.seed, stream_id)

    def draw_real(self, n: int | None = None):
        """Standard normal draw(s), mean 0 variance 1."""
        if n is None:
            self.counter += 1
            return float(self._gen.standard_normal())
        self.counter += int(n)
        return self._gen.standard_normal(int(n))

    def draw_complex(self, n: int | None = None):
        """Standard complex Gaussian draw(s): Re, Im independent N(0, 1/2), E|z|^2 = 1."""
        if n is None:
            self.counter += 2
            x = self._gen.standard_normal(2)
            return complex(x[0] * _SQRT_HALF, x[1] * _SQRT_HALF)
        self.counter += 2 * int(n)
        x = self._gen.standard_normal((int(n), 2))
        return (x[:, 0] + 1j * x[:, 1]) * _SQRT_HALF

    def uniform(self, n: int | None = None):
        """Uniform(0,1) draws; used by inverse-CDF samplers."""
        if n is None:
            self.counter += 1
            return float(self._gen.random())
        self.counter += int(n)
        return self._gen.random(int(n))

    def integers(self, low: int, high: int, n: int | None = None):
        if n is None:
            self.counter += 1
            return int(self._gen.integers(low, high))
        self.counter += int(n)
        return self._gen.integers(low, high, size=int(n))


def draw_real_gaussian(stream: GaussianStream) -> float:
    return stream.draw_real()


def draw_complex_gaussian(stream: GaussianStream) -> complex:
    return stream.draw_complex()
