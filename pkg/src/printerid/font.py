"""Embedded 7x5 monospace bitmap font.

Hand-drawn atlas used by the page renderer and the letter-template
classifier. Every glyph is a single 8-connected component so that
connected-component extraction sees one component per printed letter;
that is why 'i' and 'j' carry attached serifs instead of floating dots.

Uppercase input folds to lowercase. Rendering is nearest-neighbor
upscaling, which preserves 8-connectivity for any glyph height >= 8.
"""

from __future__ import annotations

import numpy as np

from .errors import PageSpecError

FONT_ROWS = 7
FONT_COLS = 5

# fmt: off
_ATLAS = {
    "a": (".....",
          ".....",
          ".###.",
          "....#",
          ".####",
          "#...#",
          ".####"),
    "b": ("#....",
          "#....",
          "####.",
          "#...#",
          "#...#",
          "#...#",
          "####."),
    "c": (".....",
          ".....",
          ".####",
          "#....",
          "#....",
          "#....",
          ".####"),
    "d": ("....#",
          "....#",
          ".####",
          "#...#",
          "#...#",
          "#...#",
          ".####"),
    "e": (".....",
          ".....",
          ".###.",
          "#...#",
          "#####",
          "#....",
          ".####"),
    "f": ("..##.",
          ".#...",
          "####.",
          ".#...",
          ".#...",
          ".#...",
          ".#..."),
    "g": (".....",
          ".####",
          "#...#",
          "#...#",
          ".####",
          "....#",
          ".###."),
    "h": ("#....",
          "#....",
          "####.",
          "#...#",
          "#...#",
          "#...#",
          "#...#"),
    "i": (".##..",
          "..#..",
          "..#..",
          "..#..",
          "..#..",
          "..#..",
          ".###."),
    "j": ("...#.",
          "...#.",
          "...#.",
          "...#.",
          "...#.",
          "#..#.",
          ".##.."),
    "k": ("#....",
          "#....",
          "#..#.",
          "#.#..",
          "##...",
          "#.#..",
          "#..#."),
    "l": (".#...",
          ".#...",
          ".#...",
          ".#...",
          ".#...",
          ".#...",
          "..##."),
    "m": (".....",
          ".....",
          "##.#.",
          "#.#.#",
          "#.#.#",
          "#...#",
          "#...#"),
    "n": (".....",
          ".....",
          "####.",
          "#...#",
          "#...#",
          "#...#",
          "#...#"),
    "o": (".....",
          ".....",
          ".###.",
          "#...#",
          "#...#",
          "#...#",
          ".###."),
    "p": (".....",
          "####.",
          "#...#",
          "#...#",
          "####.",
          "#....",
          "#...."),
    "q": (".....",
          ".####",
          "#...#",
          "#...#",
          ".####",
          "....#",
          "....#"),
    "r": (".....",
          ".....",
          "#.##.",
          "##..#",
          "#....",
          "#....",
          "#...."),
    "s": (".....",
          ".....",
          ".####",
          "#....",
          ".###.",
          "....#",
          "####."),
    "t": (".#...",
          "####.",
          ".#...",
          ".#...",
          ".#...",
          ".#...",
          "..##."),
    "u": (".....",
          ".....",
          "#...#",
          "#...#",
          "#...#",
          "#...#",
          ".####"),
    "v": (".....",
          ".....",
          "#...#",
          "#...#",
          ".#.#.",
          ".#.#.",
          "..#.."),
    "w": (".....",
          ".....",
          "#...#",
          "#...#",
          "#.#.#",
          "#.#.#",
          ".#.#."),
    "x": (".....",
          ".....",
          "#...#",
          ".#.#.",
          "..#..",
          ".#.#.",
          "#...#"),
    "y": (".....",
          "#...#",
          "#...#",
          ".#.#.",
          "..#..",
          ".#...",
          "#...."),
    "z": (".....",
          ".....",
          "#####",
          "...#.",
          "..#..",
          ".#...",
          "#####"),
    "0": (".###.",
          "#...#",
          "#..##",
          "#.#.#",
          "##..#",
          "#...#",
          ".###."),
    "1": ("..#..",
          ".##..",
          "..#..",
          "..#..",
          "..#..",
          "..#..",
          ".###."),
    "2": (".###.",
          "#...#",
          "....#",
          "...#.",
          "..#..",
          ".#...",
          "#####"),
    "3": (".###.",
          "#...#",
          "....#",
          "..##.",
          "....#",
          "#...#",
          ".###."),
    "4": ("...#.",
          "..##.",
          ".#.#.",
          "#..#.",
          "#####",
          "...#.",
          "...#."),
    "5": ("#####",
          "#....",
          "####.",
          "....#",
          "....#",
          "#...#",
          ".###."),
    "6": (".###.",
          "#....",
          "#....",
          "####.",
          "#...#",
          "#...#",
          ".###."),
    "7": ("#####",
          "....#",
          "...#.",
          "..#..",
          "..#..",
          "..#..",
          "..#.."),
    "8": (".###.",
          "#...#",
          "#...#",
          ".###.",
          "#...#",
          "#...#",
          ".###."),
    "9": (".###.",
          "#...#",
          "#...#",
          ".####",
          "....#",
          "....#",
          ".###."),
    ".": (".....",
          ".....",
          ".....",
          ".....",
          ".....",
          ".##..",
          ".##.."),
    ",": (".....",
          ".....",
          ".....",
          ".....",
          "..#..",
          "..#..",
          ".#..."),
}
# fmt: on

LETTERS = tuple(sorted(_ATLAS))


def _parse(rows: tuple[str, ...]) -> np.ndarray:
    if len(rows) != FONT_ROWS or any(len(r) != FONT_COLS for r in rows):
        raise ValueError("malformed glyph bitmap")
    return np.array([[ch == "#" for ch in row] for row in rows], dtype=bool)


_BITMAPS = {ch: _parse(rows) for ch, rows in _ATLAS.items()}


def has_glyph(ch: str) -> bool:
    return ch.lower() in _BITMAPS


def glyph_bitmap(ch: str) -> np.ndarray:
    """Boolean 7x5 ink mask for a character (case-folded)."""
    key = ch.lower()
    if key not in _BITMAPS:
        raise PageSpecError(f"no glyph for character {ch!r}")
    return _BITMAPS[key]


def glyph_width_for(height: int) -> int:
    """Rendered glyph width that keeps the 5:7 atlas aspect."""
    return max(1, int(round(height * FONT_COLS / FONT_ROWS)))


def render_glyph(ch: str, height: int) -> np.ndarray:
    """Nearest-neighbor upscale of a glyph to the given pixel height.

    Returns a boolean ink mask of shape (height, glyph_width_for(height)).
    """
    if height < 8:
        raise PageSpecError(f"glyph height {height} too small to render (minimum 8)")
    bitmap = glyph_bitmap(ch)
    width = glyph_width_for(height)
    rows = (np.arange(height) * FONT_ROWS) // height
    cols = (np.arange(width) * FONT_COLS) // width
    return bitmap[np.ix_(rows, cols)]
