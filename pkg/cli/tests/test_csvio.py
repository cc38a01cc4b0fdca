import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from cli.csvio import format_value, load_csv, write_csv
from estimation.data import MultiIndexData
from estimation.exceptions import InputError, ParseError
from estimation.losses import get_loss

FIXTURES = Path(__file__).resolve().parent.parent / 'fixtures'


class CsvTestCase(SimpleTestCase):
    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.tmp = Path(self._tmp.name)

    def tearDown(self):
        self._tmp.cleanup()

    def write(self, name, text):
        path = self.tmp / name
        path.write_text(text, encoding='utf-8')
        return path


class LoadCsvTest(CsvTestCase):
    def test_bundled_logit_fixture(self):
        data = load_csv(FIXTURES / 'logit_small.csv', get_loss('logit'))
        self.assertEqual((data.n, data.p), (4, 2))
        np.testing.assert_array_equal(data.Y, [1, 0, 1, 0])
        np.testing.assert_array_equal(data.X[1], [-0.75, 0.3])

    def test_panel_fixture(self):
        data = load_csv(FIXTURES / 'panel_small.csv', get_loss('panel_logit'))
        self.assertEqual(data.Y.shape, (5, 2))
        self.assertEqual(data.p, 3)

    def test_missing_value_reports_its_line(self):
        path = self.write('na.csv', 'y,x1,x2\n1,0.5,1\n0,NA,2\n1,0.1,3\n')
        with self.assertRaises(ParseError) as ctx:
            load_csv(path)
        self.assertEqual(ctx.exception.line, 3)
        self.assertIn('line 3', str(ctx.exception))

    def test_malformed_rows(self):
        cases = {
            'ragged.csv': ('y,x1,x2\n1,0.5,1\n0,2\n', 3),
            'inf.csv': ('y,x1,x2\n1,0.5,1\n0,inf,2\n', 3),
            'header.csv': ('y,x1,w\n1,0.5,1\n', 1),
            'no_y.csv': ('x1,x2\n1,0.5\n', 1),
            'empty.csv': ('', 1),
        }
        for name, (text, line) in cases.items():
            with self.assertRaises(ParseError, msg=name) as ctx:
                load_csv(self.write(name, text))
            self.assertEqual(ctx.exception.line, line, name)

        bad_bytes = self.tmp / 'bytes.csv'
        bad_bytes.write_bytes(b'y,x1,x2\n1,0.5,1\n0,\xff0.1,2\n1,0.2,3\n')
        with self.assertRaises(ParseError) as ctx:
            load_csv(bad_bytes)
        self.assertEqual(ctx.exception.line, 3)
        self.assertIn('0xff', str(ctx.exception))

    def test_outcome_outside_the_loss_support(self):
        path = self.write('bad_y.csv', 'y,x1,x2\n2,0.5,1\n0,0.1,2\n1,0.1,3\n')
        with self.assertRaises(InputError) as ctx:
            load_csv(path, get_loss('logit'))
        self.assertIn('logit', str(ctx.exception))
        # without a loss the file is only checked for shape
        self.assertEqual(load_csv(path).n, 3)

    def test_missing_file(self):
        with self.assertRaises(InputError):
            load_csv(self.tmp / 'nope.csv')

    def test_multi_index_files(self):
        mnl = self.write('mnl.csv', 'y,z1,z2\n0,1,2\n2,0.5,1\n1,-1,0.25\n')
        data = load_csv(mnl, get_loss('mnl', {'J': 2}))
        self.assertIsInstance(data, MultiIndexData)
        self.assertEqual((data.L1, data.L2, data.p1, data.p2), (2, 0, 2, 0))

        header = 'y,z1,v1_1,v1_2,v2_1,v2_2,v3_1,v3_2\n'
        rows = '0,1,1,2,3,4,5,6\n1,2,0,1,0,1,0,1\n2,0.5,1,1,2,2,3,3\n'
        mixed = load_csv(self.write('mixed.csv', header + rows), get_loss('mixed_logit', {'J': 2}))
        self.assertEqual((mixed.L1, mixed.L2, mixed.p1, mixed.p2), (2, 3, 1, 2))
        np.testing.assert_array_equal(mixed.V[0], [[1, 2], [3, 4], [5, 6]])

        with self.assertRaises(InputError):
            load_csv(mnl)
        with self.assertRaises(ParseError):
            load_csv(self.write('grid.csv', 'y,v1_1,v2_2\n0,1,2\n1,1,1\n0,2,2\n'), get_loss('clogit', {'J': 2}))


class WriteCsvTest(CsvTestCase):
    def test_round_trip_is_byte_identical(self):
        for name, loss in (('logit_small.csv', 'logit'), ('panel_small.csv', 'panel_logit')):
            source = FIXTURES / name
            out = write_csv(load_csv(source, get_loss(loss)), self.tmp / name)
            self.assertEqual(out.read_bytes(), source.read_bytes(), name)

    def test_multi_index_round_trip(self):
        text = 'y,z1,v1_1,v1_2,v2_1,v2_2,v3_1,v3_2\n0,1,1,2,3,4,5,6\n1,2,0,1,0,1,0,1\n2,0.5,1,1,2,2,3,3\n'
        source = self.write('mixed.csv', text)
        out = write_csv(load_csv(source, get_loss('mixed_logit', {'J': 2})), self.tmp / 'again.csv')
        self.assertEqual(out.read_text(encoding='utf-8'), text)

    def test_value_formatting(self):
        self.assertEqual(format_value(1.0), '1')
        self.assertEqual(format_value(0.1), '0.1')
        self.assertEqual(format_value(1e-20), '1e-20')
        self.assertEqual(format_value(None), '')
        self.assertEqual(format_value(True), 'true')
        self.assertEqual(format_value(np.int64(7)), '7')
