import numpy as np
from scipy import stats

from iterpdd.rng import fill_normals, stream_key


def test_stream_keys_distinct_and_stable():
    keys = {int(stream_key(0, 2, 0, n)) for n in range(1000)}
    assert len(keys) == 1000
    assert stream_key(7, 1, 2) == stream_key(7, 1, 2)
    assert stream_key(7, 1, 2) != stream_key(8, 1, 2)
    assert stream_key(7, 1, 2) != stream_key(7, 2, 1)


def test_normals_are_standard():
    out = np.empty((200_000, 2))
    fill_normals(stream_key(3, 9), 0, out)
    z = out.ravel()
    assert abs(z.mean()) < 3 * 1 / np.sqrt(z.size) * 1.5
    assert abs(z.var() - 1) < 0.01
    assert stats.kstest(z, "norm").pvalue > 1e-3
    assert abs(np.corrcoef(out[:, 0], out[:, 1])[0, 1]) < 0.01


def test_counter_addressing():
    a = np.empty((100, 2))
    b = np.empty((40, 2))
    fill_normals(stream_key(1), 0, a)
    fill_normals(stream_key(1), 60, b)
    np.testing.assert_array_equal(a[60:], b)
