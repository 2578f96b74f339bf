"""Delimited sample files for maps: input point, output point, Jacobian
determinant per line, floats at 17 significant digits (bit round-trip)."""

from __future__ import annotations

import numpy as np

from . import numkit as nk

__all__ = ["write_map_samples", "read_map_samples", "MapSamples"]

_HEADER_PREFIX = "#sympext-map v1 dim="


class MapSamples:
    """In-memory form of a sample file."""

    def __init__(self, dim: int, points_in, points_out, dets):
        self.dim = dim
        self.points_in = np.asarray(points_in, dtype=float)
        self.points_out = np.asarray(points_out, dtype=float)
        self.dets = np.asarray(dets, dtype=float)

    def __len__(self):
        return len(self.dets)


def write_map_samples(path, samples: MapSamples) -> None:
    dim = samples.dim
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(f"{_HEADER_PREFIX}{dim}\n")
        for pin, pout, det in zip(samples.points_in, samples.points_out,
                                  samples.dets):
            fields = [f"{v:.17g}" for v in (*pin, *pout, det)]
            fh.write(" ".join(fields) + "\n")


def read_map_samples(path) -> MapSamples:
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().strip()
        if not header.startswith(_HEADER_PREFIX):
            raise nk.ValidationError(
                f"not a sympext map file (header {header!r})")
        try:
            dim = int(header[len(_HEADER_PREFIX):])
        except ValueError:
            raise nk.ValidationError(f"bad dimension in header {header!r}") from None
        pin, pout, dets = [], [], []
        for lineno, line in enumerate(fh, start=2):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 2 * dim + 1:
                raise nk.ValidationError(
                    f"line {lineno}: expected {2 * dim + 1} fields, got {len(parts)}")
            vals = [float(p) for p in parts]
            pin.append(vals[:dim])
            pout.append(vals[dim:2 * dim])
            dets.append(vals[2 * dim])
    return MapSamples(dim, pin, pout, dets)
