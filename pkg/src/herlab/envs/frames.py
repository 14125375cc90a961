"""Debug frame dump as binary PPM images."""

from __future__ import annotations

import os

import numpy as np

BACKGROUND = (255, 255, 255)


class FrameWriter:
    def __init__(self, directory: str, width: int = 500, height: int = 500):
        self.directory = directory
        self.width = width
        self.height = height
        self.index = 0
        os.makedirs(directory, exist_ok=True)
        ys, xs = np.mgrid[0:height, 0:width]
        # pixel centers in screen units, y up
        self._x = (xs + 0.5) / width
        self._y = 1.0 - (ys + 0.5) / height

    def blank(self) -> np.ndarray:
        img = np.empty((self.height, self.width, 3), dtype=np.uint8)
        img[:] = BACKGROUND
        return img

    def disk(self, img, center, radius, color) -> None:
        mask = (self._x - center[0]) ** 2 + (self._y - center[1]) ** 2 <= radius**2
        img[mask] = color

    def box(self, img, x_lo, x_hi, y_lo, y_hi, color) -> None:
        mask = (self._x >= x_lo) & (self._x <= x_hi) & (self._y >= y_lo) & (self._y <= y_hi)
        img[mask] = color

    def segment(self, img, a, b, width, color) -> None:
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        d = b - a
        n2 = float(d @ d) or 1e-12
        t = np.clip(((self._x - a[0]) * d[0] + (self._y - a[1]) * d[1]) / n2, 0.0, 1.0)
        px = a[0] + t * d[0] - self._x
        py = a[1] + t * d[1] - self._y
        img[px * px + py * py <= (width / 2) ** 2] = color

    def write(self, img) -> str:
        path = os.path.join(self.directory, f"frame_{self.index:06d}.ppm")
        with open(path, "wb") as f:
            f.write(f"P6\n{self.width} {self.height}\n255\n".encode("ascii"))
            f.write(np.ascontiguousarray(img).tobytes())
        self.index += 1
        return path


def read_ppm(path: str) -> np.ndarray:
    with open(path, "rb") as f:
        data = f.read()
    parts = data.split(maxsplit=4)
    if parts[0] != b"P6":
        raise ValueError("not a binary PPM")
    w, h = int(parts[1]), int(parts[2])
    return np.frombuffer(parts[4], dtype=np.uint8).reshape(h, w, 3)
