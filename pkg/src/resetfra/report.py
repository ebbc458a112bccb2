"""CSV tables and self-contained SVG 1.1 plots."""

from __future__ import annotations

import csv
import math
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

__all__ = ['write_csv', 'read_csv', 'format_number', 'svg_lines', 'svg_bode',
           'svg_time', 'write_text']

_PALETTE = ('#1f77b4', '#d62728', '#2ca02c', '#9467bd', '#ff7f0e',
            '#8c564b', '#17becf', '#7f7f7f')


def format_number(x) -> str:
    """17 significant digits so the text round-trips to the same double."""
    if isinstance(x, (bool, np.bool_)):
        return 'true' if x else 'false'
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), '.17g')
    return str(x)


def write_csv(path, header: list[str], rows, comments: list[str] = ()) -> None:
    """Write ``rows`` under ``header``; ``comments`` become leading ``#`` lines."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open('w', newline='') as fh:
        for line in comments:
            fh.write(f'# {line}\n')
        writer = csv.writer(fh, lineterminator='\n')
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_number(v) for v in row])


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    """Inverse of :func:`write_csv`; comment lines are skipped."""
    with Path(path).open(newline='') as fh:
        lines = [ln for ln in fh if not ln.startswith('#')]
    rows = list(csv.reader(lines))
    return rows[0], rows[1:]


def write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _nice_ticks(lo: float, hi: float, count: int = 5) -> list[float]:
    if not (math.isfinite(lo) and math.isfinite(hi)) or hi <= lo:
        return [lo]
    raw = (hi - lo) / count
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=raw)
    start = math.ceil(lo / step) * step
    return [start + i * step for i in range(int((hi - start) / step) + 1)]


class _Panel:
    """One set of axes inside the SVG canvas."""

    def __init__(self, x0, y0, w, h, xlim, ylim, logx):
        self.x0, self.y0, self.w, self.h = x0, y0, w, h
        self.logx = logx
        fx = np.log10 if logx else (lambda v: v)
        self.fx = fx
        self.xl = (fx(xlim[0]), fx(xlim[1]))
        pad = 0.05 * (ylim[1] - ylim[0] or 1.0)
        self.yl = (ylim[0] - pad, ylim[1] + pad)

    def px(self, x):
        x = self.fx(np.asarray(x, dtype=float))
        return self.x0 + (x - self.xl[0]) / (self.xl[1] - self.xl[0] or 1.0) * self.w

    def py(self, y):
        y = np.asarray(y, dtype=float)
        return self.y0 + self.h - (y - self.yl[0]) / (self.yl[1] - self.yl[0]) * self.h

    def frame(self, xlabel, ylabel) -> list[str]:
        out = [f'<rect x="{self.x0}" y="{self.y0}" width="{self.w}" height="{self.h}" '
               'fill="none" stroke="#000" stroke-width="1"/>']
        if self.logx:
            xticks = [10.0 ** k for k in range(math.ceil(self.xl[0]), math.floor(self.xl[1]) + 1)]
        else:
            xticks = _nice_ticks(*self.xl)
        for xt in xticks:
            x = float(self.px(xt))
            out.append(f'<line x1="{x:.2f}" y1="{self.y0}" x2="{x:.2f}" y2="{self.y0 + self.h}" '
                       'stroke="#ddd" stroke-width="0.5"/>')
            out.append(f'<text x="{x:.2f}" y="{self.y0 + self.h + 14}" font-size="10" '
                       f'text-anchor="middle">{xt:g}</text>')
        for yt in _nice_ticks(*self.yl):
            y = float(self.py(yt))
            out.append(f'<line x1="{self.x0}" y1="{y:.2f}" x2="{self.x0 + self.w}" y2="{y:.2f}" '
                       'stroke="#ddd" stroke-width="0.5"/>')
            out.append(f'<text x="{self.x0 - 4}" y="{y + 3:.2f}" font-size="10" '
                       f'text-anchor="end">{yt:g}</text>')
        out.append(f'<text x="{self.x0 + self.w / 2}" y="{self.y0 + self.h + 30}" font-size="11" '
                   f'text-anchor="middle">{escape(xlabel)}</text>')
        out.append(f'<text x="{self.x0 - 44}" y="{self.y0 + self.h / 2}" font-size="11" '
                   f'text-anchor="middle" transform="rotate(-90 {self.x0 - 44} '
                   f'{self.y0 + self.h / 2})">{escape(ylabel)}</text>')
        return out

    def polyline(self, x, y, color, dash=False) -> str:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        ok = np.isfinite(x) & np.isfinite(y)
        if self.logx:
            ok &= x > 0
        pts = ' '.join(f'{a:.2f},{b:.2f}' for a, b in zip(self.px(x[ok]), self.py(y[ok])))
        style = ' stroke-dasharray="4,3"' if dash else ''
        return (f'<polyline points="{pts}" fill="none" stroke="{color}" '
                f'stroke-width="1.2"{style}/>')


def _limits(series, key, log=False):
    vals = np.concatenate([np.asarray(s[key], dtype=float) for s in series]) if series else np.zeros(1)
    vals = vals[np.isfinite(vals)]
    if log:
        vals = vals[vals > 0]
    if vals.size == 0:
        return (1.0, 10.0) if log else (0.0, 1.0)
    lo, hi = float(vals.min()), float(vals.max())
    if hi > lo:
        return lo, hi
    return (lo / 2, hi * 2) if log else (lo - 1.0, hi + 1.0)


def _document(width, height, title, body, legend) -> str:
    head = (f'<?xml version="1.0" encoding="UTF-8"?>\n'
            f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
            f'width="{width}" height="{height}" viewBox="0 0 {width} {height}">\n'
            f'<rect width="{width}" height="{height}" fill="#fff"/>\n'
            f'<text x="{width / 2}" y="18" font-size="13" text-anchor="middle">{escape(title)}</text>\n')
    leg = []
    for i, (label, color) in enumerate(legend):
        y = 34 + 14 * i
        leg.append(f'<line x1="{width - 150}" y1="{y}" x2="{width - 130}" y2="{y}" '
                   f'stroke="{color}" stroke-width="2"/>')
        leg.append(f'<text x="{width - 125}" y="{y + 4}" font-size="10">{escape(label)}</text>')
    return head + '\n'.join(body + leg) + '\n</svg>\n'


def svg_lines(series: list[dict], *, title='', xlabel='', ylabel='', logx=False,
              markers=None, width=760, height=380) -> str:
    """Single-panel line plot.

    Each series is a dict with ``x``, ``y``, ``label`` and optional ``dash``.
    ``markers`` is an optional list of x positions drawn as short ticks at
    the bottom of the panel (used for reset instants).
    """
    panel = _Panel(70, 30, width - 240, height - 80,
                   _limits(series, 'x', logx), _limits(series, 'y'), logx)
    body = panel.frame(xlabel, ylabel)
    legend = []
    for i, s in enumerate(series):
        color = _PALETTE[i % len(_PALETTE)]
        body.append(panel.polyline(s['x'], s['y'], color, s.get('dash', False)))
        legend.append((s.get('label', f'series {i}'), color))
    if markers is not None and len(markers):
        yb = panel.y0 + panel.h
        for xm in np.asarray(markers, dtype=float):
            x = float(panel.px(xm))
            body.append(f'<line x1="{x:.2f}" y1="{yb - 8}" x2="{x:.2f}" y2="{yb}" '
                        'stroke="#000" stroke-width="0.8"/>')
        legend.append(('reset instants', '#000'))
    return _document(width, height, title, body, legend)


def svg_bode(series: list[dict], *, title='', width=760, height=560) -> str:
    """Two-panel Bode plot: dB magnitude over unwrapped phase in degrees.

    Each series needs ``freq_hz``, ``mag_db``, ``phase_deg`` and ``label``.
    """
    mag = [{'x': s['freq_hz'], 'y': s['mag_db']} for s in series]
    ph = [{'x': s['freq_hz'], 'y': s['phase_deg']} for s in series]
    ph_h = (height - 110) // 2
    top = _Panel(70, 30, width - 240, ph_h, _limits(mag, 'x', True), _limits(mag, 'y'), True)
    bot = _Panel(70, 30 + ph_h + 40, width - 240, ph_h, _limits(ph, 'x', True), _limits(ph, 'y'), True)
    body = top.frame('', 'magnitude [dB]') + bot.frame('frequency [Hz]', 'phase [deg]')
    legend = []
    for i, s in enumerate(series):
        color = _PALETTE[i % len(_PALETTE)]
        body.append(top.polyline(s['freq_hz'], s['mag_db'], color))
        body.append(bot.polyline(s['freq_hz'], s['phase_deg'], color))
        legend.append((s.get('label', f'series {i}'), color))
    return _document(width, height, title, body, legend)


def svg_time(t, signals: dict, reset_instants=None, *, title='') -> str:
    """Time-domain overlay of named signals with reset markers."""
    series = [{'x': t, 'y': y, 'label': name} for name, y in signals.items()]
    return svg_lines(series, title=title, xlabel='time [s]', ylabel='signal',
                     markers=reset_instants)
