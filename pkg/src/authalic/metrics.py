"""Area-distortion and validity metrics of disk maps.

The raw per-face ratio is image area over source area.  For reporting, the
ratios are divided by total-image over total-source area, so the
area-weighted mean of normalized ratios is exactly 1 and an exact
area-preserving map has every normalized ratio equal to 1.  Standard
deviations are unweighted over faces and reported for both raw and
normalized ratios.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .energy import normalized_authalic_energy, signed_image_areas

HISTOGRAM_RANGE = (0.0, 2.0)


def area_ratio(mesh, dmap, face):
    """Raw area ratio of one face: unsigned image area over source area."""
    coords = dmap.coords()
    p = coords[mesh.faces[face]]
    img = 0.5 * abs((p[1, 0] - p[0, 0]) * (p[2, 1] - p[0, 1])
                    - (p[1, 1] - p[0, 1]) * (p[2, 0] - p[0, 0]))
    return img / mesh.face_areas[face]


def folding_count(mesh, dmap):
    """Number of image faces whose orientation is reversed."""
    coords = dmap.coords() if hasattr(dmap, "coords") else np.asarray(dmap)
    return int((signed_image_areas(mesh, coords) < 0).sum())


@dataclass
class DistortionReport:
    area_ratios: np.ndarray          # raw per-face ratios
    normalized_ratios: np.ndarray    # raw ratios / (total image / total source)
    mean_ratio: float                # area-weighted mean of normalized ratios
    sd_ratio: float                  # unweighted SD of normalized ratios
    sd_ratio_raw: float              # unweighted SD of raw ratios
    authalic_energy: float
    folding_count: int
    histogram: np.ndarray            # counts of normalized ratios per bin
    bin_edges: np.ndarray

    def summary(self):
        return {
            "faces": int(len(self.area_ratios)),
            "mean_ratio": self.mean_ratio,
            "sd_ratio": self.sd_ratio,
            "sd_ratio_raw": self.sd_ratio_raw,
            "authalic_energy": self.authalic_energy,
            "folding_count": self.folding_count,
        }

    def to_json(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.summary(), fh, indent=2)
            fh.write("\n")

    def ratios_to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["face", "area_ratio", "normalized_ratio"])
            for i, (raw, norm) in enumerate(zip(self.area_ratios, self.normalized_ratios)):
                writer.writerow([i, repr(float(raw)), repr(float(norm))])

    def histogram_to_gnuplot(self, path):
        """bin-center / count pairs, one per line, gnuplot `plot "f" with boxes`."""
        centers = 0.5 * (self.bin_edges[:-1] + self.bin_edges[1:])
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("# normalized_area_ratio count\n")
            for c, cnt in zip(centers, self.histogram):
                fh.write(f"{c:.6f} {int(cnt)}\n")


def report(mesh, dmap, bins=100):
    """Full distortion report of a disk map."""
    if bins < 1:
        raise ValueError("bins must be >= 1")
    coords = dmap.coords()
    img = np.abs(signed_image_areas(mesh, coords))
    raw = img / mesh.face_areas
    scale = img.sum() / mesh.total_area
    normalized = raw / scale
    weighted_mean = float((normalized * mesh.face_areas).sum() / mesh.total_area)
    hist, edges = np.histogram(normalized, bins=bins, range=HISTOGRAM_RANGE)
    return DistortionReport(
        area_ratios=raw,
        normalized_ratios=normalized,
        mean_ratio=weighted_mean,
        sd_ratio=float(normalized.std()),
        sd_ratio_raw=float(raw.std()),
        authalic_energy=normalized_authalic_energy(mesh, dmap),
        folding_count=folding_count(mesh, dmap),
        histogram=hist,
        bin_edges=edges,
    )
