import numpy as np
import pytest

from metapop import matrixgame as mg

import oracles


@pytest.mark.parametrize("n_b", [1, 2, 5])
def test_matches_loop_oracle_exactly(n_b):
    m = mg.generate_shifted_block_matrix(n_b, 10, 0.1)
    assert m.entries.shape == (10 * n_b, 10 * n_b)
    np.testing.assert_array_equal(m.entries, np.array(oracles.shifted_matrix_loops(n_b)))


@pytest.mark.parametrize("n_b", [1, 2, 5])
def test_block0_hand_traced_spots(n_b):
    m = mg.generate_shifted_block_matrix(n_b)
    for (r, c), v in oracles.BASE_SPOTS.items():
        assert m.entries[r, c] == v, (r, c)


def test_second_block_is_first_flattened_shifted_by_one():
    m = mg.generate_shifted_block_matrix(2).entries
    first = m[:10, :10].reshape(-1)
    second = m[10:, 10:].reshape(-1)
    np.testing.assert_array_equal(second, np.roll(first, -1))
    # hand trace: block 1 position 0 holds base flat index 1 = B[0][1] = 0,
    # position 9 holds B[1][0] = 1, position 10 holds B[1][1] = 0
    assert second[0] == 0.0 and second[9] == 1.0 and second[10] == 0.0


@pytest.mark.parametrize("k", range(5))
def test_block_k_shift_relation(k):
    m = mg.generate_shifted_block_matrix(5).entries
    base = m[:10, :10].reshape(-1)
    blk = m[10 * k:10 * (k + 1), 10 * k:10 * (k + 1)].reshape(-1)
    np.testing.assert_array_equal(blk, base[(np.arange(100) + k) % 100])
    # a permutation keeps the multiset of entries
    np.testing.assert_array_equal(np.sort(blk), np.sort(base))


def test_fifty_by_fifty_has_five_blocks_and_zeros_elsewhere():
    m = mg.generate_shifted_block_matrix(5).entries
    mask = np.zeros_like(m, dtype=bool)
    for k in range(5):
        mask[10 * k:10 * (k + 1), 10 * k:10 * (k + 1)] = True
        assert m[mask & (m != 0)].size > 0
    assert not m[~mask].any()


@pytest.mark.parametrize("n_b,d,eps", [(1, 3, 0.0), (2, 4, 0.5), (3, 10, 0.1), (2, 7, 0.9)])
def test_values_and_max_payoff(n_b, d, eps):
    m = mg.generate_shifted_block_matrix(n_b, d, eps)
    assert set(np.unique(m.entries)) <= {0.0, 1.0, eps}
    assert m.max_payoff == 1.0


def test_deterministic_and_read_only():
    a, b = mg.generate_shifted_block_matrix(3), mg.generate_shifted_block_matrix(3)
    assert a == b and hash(a) == hash(b)
    with pytest.raises(ValueError):
        a.entries[0, 0] = 5.0


@pytest.mark.parametrize("args", [(0, 10, 0.1), (1, 2, 0.1), (1, 10, 1.0), (1, 10, -0.1)])
def test_bad_parameters_rejected(args):
    with pytest.raises(ValueError):
        mg.generate_shifted_block_matrix(*args)


def test_play():
    m = mg.generate_shifted_block_matrix(1)
    assert mg.play(m, 0, 0).reward == 1.0
    assert mg.play(m, 0, 5).reward == 0.0
    assert mg.play(m, 1, 1).reward == 0.0
    out = mg.play(m, 2, 3)
    assert out.reward == 0.1 and out.done and (out.row_action, out.col_action) == (2, 3)
    with pytest.raises(ValueError):
        mg.play(m, 10, 0)
    with pytest.raises(ValueError):
        mg.play(m, 0, -1)


def test_observations():
    np.testing.assert_array_equal(mg.observation(None, mg.ROW), [1, 0, 1])
    np.testing.assert_array_equal(mg.observation(None, mg.COL), [0, 1, 1])
    np.testing.assert_array_equal(mg.observation(None, "row"), mg.observation(None, "row"))
    np.testing.assert_array_equal(mg.role_observations(), [[1, 0, 1], [0, 1, 1]])
    with pytest.raises(ValueError):
        mg.observation(None, "diagonal")


def test_csv_round_trip(tmp_path):
    m = mg.generate_shifted_block_matrix(5, 10, 0.1)
    p = mg.save_csv(m, tmp_path / "m.csv")
    assert (tmp_path / "m.csv.meta").read_text().strip() == "n_b=5,d=10,eps=0.1"
    back = mg.load_csv(p)
    assert back == m


def test_csv_needs_metadata(tmp_path):
    m = mg.generate_shifted_block_matrix(1)
    p = mg.save_csv(m, tmp_path / "m.csv")
    (tmp_path / "m.csv.meta").unlink()
    with pytest.raises(FileNotFoundError):
        mg.load_csv(p)
