import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from locavg.design import (
    CsvSchema, Dataset, add_intercept, check_target, group_design, ingest_csv, read_csv, sort_and_group,
)
from locavg.errors import (
    ConfigError, EmptyData, GroupTooSmall, InputError, MissingColumn, NonNumericCell, TooFewRows,
)


class TestIngest:
    def test_simple_file(self):
        text = "u,x1,y\n" + "\n".join(f"{i / 5},{i},{2 * i}" for i in range(5))
        d = ingest_csv(text)
        assert (d.n, d.p, d.z) == (5, 1, None)
        np.testing.assert_allclose(d.y, 2 * np.arange(5))

    def test_blank_cell_reports_row_and_column(self):
        text = "u,x1,y\n0.1,1,1\n0.2,2,2\n0.3,3,\n0.4,4,4\n"
        with pytest.raises(NonNumericCell) as exc:
            ingest_csv(text)
        assert (exc.value.row, exc.value.column) == (3, "y")
        assert exc.value.exit_code == 2

    def test_non_numeric(self):
        with pytest.raises(NonNumericCell):
            ingest_csv("u,x1,y\n0.1,abc,1\n0.2,1,1\n")

    def test_missing_column(self):
        with pytest.raises(MissingColumn):
            ingest_csv("u,x1,y\n1,2,3\n", CsvSchema(x=("x2",)))

    def test_empty(self):
        with pytest.raises(EmptyData):
            ingest_csv("")
        with pytest.raises(EmptyData):
            ingest_csv("u,x1,y\n")

    def test_four_covariates_with_intercept(self):
        rows = "\n".join(f"{i},{i % 3},{i % 5},{i % 7},{i % 2},{i}" for i in range(12))
        d = ingest_csv("u,x1,x2,x3,x4,y\n" + rows)
        assert d.p == 4
        d1 = add_intercept(d)
        assert d1.p == 5 and d1.x_names[0] == "intercept"
        np.testing.assert_array_equal(d1.x[:, 0], 1.0)

    def test_z_columns(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("u,x1,z1,y\n0.1,1,5,2\n0.2,2,6,3\n")
        d = read_csv(path, CsvSchema(z=("z1",)))
        assert d.p == 1 and d.q == 1
        np.testing.assert_allclose(d.z[:, 0], [5, 6])

    def test_stream(self):
        d = ingest_csv(io.StringIO("u,a,y\n1,2,3\n2,3,4\n"))
        assert d.x_names == ("a",)


class TestDataset:
    def test_validation(self):
        with pytest.raises(EmptyData):
            Dataset(u=[1.0], x=[1.0], y=[1.0])
        with pytest.raises(InputError):
            Dataset(u=[1.0, 2.0], x=[1.0, 2.0, 3.0], y=[1.0, 2.0])
        with pytest.raises(InputError):
            Dataset(u=[1.0, np.nan], x=[1.0, 2.0], y=[1.0, 2.0])


class TestSortAndGroup:
    def test_remainder(self, rng):
        d = Dataset(u=rng.uniform(size=10), x=np.ones(10), y=rng.standard_normal(10))
        g = sort_and_group(d, 3)
        assert (g.k, g.dropped_count) == (3, 1)
        assert g.k * g.group_size + g.dropped_count == d.n
        # the dropped row has the largest u
        assert d.u.max() not in g.u

    def test_exact_grouping(self, rng):
        d = Dataset(u=rng.uniform(size=500), x=rng.standard_normal((500, 2)), y=rng.standard_normal(500))
        g = sort_and_group(d, 10)
        assert (g.k, g.dropped_count) == (50, 0)
        assert g.x.shape == (50, 10, 2)

    def test_sorted_and_means_inside(self, rng):
        d = Dataset(u=rng.uniform(size=97), x=rng.standard_normal((97, 1)), y=rng.standard_normal(97))
        g = sort_and_group(d, 7)
        assert np.all(g.u[:-1].max(axis=1) <= g.u[1:].min(axis=1))
        assert np.all((g.u_bar >= g.u.min(axis=1)) & (g.u_bar <= g.u.max(axis=1)))
        np.testing.assert_array_equal(d.u[g.order], g.u)

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), n=st.integers(4, 60), size=st.integers(1, 4))
    def test_permutation_invariance(self, seed, n, size):
        r = np.random.default_rng(seed)
        u = r.permutation(n) / n  # distinct
        d = Dataset(u=u, x=r.standard_normal((n, 1)), y=r.standard_normal(n))
        perm = r.permutation(n)
        a, b = sort_and_group(d, size), sort_and_group(d.take(perm), size)
        for name in ("u", "x", "y"):
            np.testing.assert_array_equal(getattr(a, name), getattr(b, name))
        assert a.dropped_count == b.dropped_count == n % size

    def test_ties_keep_input_order(self):
        u = np.array([0.5, 0.1, 0.5, 0.1])
        d = Dataset(u=u, x=np.ones(4), y=np.arange(4.0))
        g = sort_and_group(d, 2)
        np.testing.assert_array_equal(g.y.ravel(), [1, 3, 0, 2])

    def test_group_too_small(self, rng):
        d = Dataset(u=rng.uniform(size=10), x=rng.standard_normal((10, 3)), y=np.zeros(10))
        with pytest.raises(GroupTooSmall) as exc:
            sort_and_group(d, 2)
        assert exc.value.exit_code == 4

    def test_too_few_rows(self):
        d = Dataset(u=[0.1, 0.2, 0.3], x=np.ones(3), y=np.zeros(3))
        with pytest.raises(TooFewRows):
            sort_and_group(d, 4)

    def test_move_to_constant(self, rng):
        g = group_design(rng.uniform(size=20), rng.standard_normal((20, 3)), rng.standard_normal(20), 5)
        m = g.move_to_constant(1)
        assert (m.p, m.q) == (2, 1)
        np.testing.assert_array_equal(m.z[:, :, 0], g.x[:, :, 1])
        np.testing.assert_array_equal(m.x, g.x[:, :, [0, 2]])

    def test_check_target(self):
        assert check_target(-1, 3) == 2
        with pytest.raises(ConfigError):
            check_target(3, 3)
