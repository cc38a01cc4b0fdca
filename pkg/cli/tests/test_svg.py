import re

import numpy as np
from django.test import SimpleTestCase

from cli.svg import MARGIN_TOP, Frame, render_svg_line
from estimation.exceptions import InputError
from simlab.density import kde


def value_at_pixel(frame, pixel):
    """Data y-value drawn at vertical pixel ``pixel``."""
    return frame.y_max - (pixel - MARGIN_TOP) / frame.plot_height * (frame.y_max - frame.y_min)


class RenderSvgLineTest(SimpleTestCase):
    def test_single_series_single_polyline(self):
        svg = render_svg_line({'am': ([0.0, 1.0], [0.2, 0.4])}, x_label='rho', y_label='error')
        self.assertEqual(svg.count('<polyline'), 1)
        self.assertTrue(svg.startswith('<svg xmlns="http://www.w3.org/2000/svg"'))
        self.assertIn('>am</text>', svg)

    def test_deterministic_text(self):
        series = {'a': ([0, 0.3, 0.6], [1.0, 0.8, 0.9]), 'b': ([0, 0.3, 0.6], [0.5, 0.4, 0.45])}
        self.assertEqual(render_svg_line(series), render_svg_line(series))
        self.assertEqual(render_svg_line(series).count('<polyline'), 2)

    def test_labels_are_escaped(self):
        svg = render_svg_line({'a<b': ([0, 1], [0, 1])}, title='x & y')
        self.assertIn('a&lt;b', svg)
        self.assertIn('x &amp; y', svg)

    def test_invalid_series(self):
        with self.assertRaises(InputError):
            render_svg_line({})
        with self.assertRaises(InputError):
            render_svg_line({'a': ([0, 1, 2], [0, 1])})
        with self.assertRaises(InputError):
            render_svg_line({'a': ([0, 1], [0, np.nan])})

    def test_density_peak_parses_back(self):
        est = kde(np.random.default_rng(3).normal(0.2, 0.05, 400))
        series = {'bam': (est.grid, est.density)}
        svg = render_svg_line(series)
        points = re.search(r'<polyline[^>]* points="([^"]+)"', svg).group(1)
        pixels = [float(pair.split(',')[1]) for pair in points.split()]
        frame = Frame.fit(series)
        peak = value_at_pixel(frame, min(pixels))
        resolution = (frame.y_max - frame.y_min) / frame.plot_height * 0.01
        self.assertAlmostEqual(peak, est.density.max(), delta=resolution)
