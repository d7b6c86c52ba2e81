import numpy as np
import pytest

from recap.data import (
    CaptureHistory,
    DataError,
    Region,
    ScrData,
    builtin_hare,
    builtin_salamander,
    builtin_sim_demo,
    load_capture_csv,
    load_scr_csv,
    simulate_m0,
    simulate_scr,
    write_capture_csv,
    write_scr_csv,
)

# Golden copy of the published hare trap listing (trap id, x, y, 13 counts),
# kept verbatim and parsed independently of the package loader.
HARE_GOLDEN = """
1 0 0 0 0 0 0 0 0 0 0 0 0 0 0 0
2 50 0 0 0 0 0 0 0 0 0 0 0 0 0 0
3 100 0 1 0 0 0 0 0 0 0 0 0 0 0 0
4 150 0 0 0 0 0 0 0 0 0 0 0 0 0 0
5 200 0 0 0 0 0 0 0 0 0 0 0 0 0 0
6 250 0 0 1 0 0 0 0 0 0 0 0 0 0 0
7 300 0 0 0 0 0 0 0 0 0 0 0 0 0 0
8 350 0 0 0 1 0 0 0 0 0 0 0 0 0 0
9 400 0 0 0 0 0 0 0 0 0 0 0 0 0 0
10 450 0 0 0 0 1 0 0 0 0 0 0 0 0 0
11 500 0 0 0 0 1 2 0 0 0 0 0 0 0 0
12 550 0 0 0 0 0 0 0 0 0 0 0 0 0 0
13 0 -50 0 0 0 0 0 0 0 0 0 0 0 0 0
14 50 -50 1 0 0 0 0 0 0 0 0 0 0 0 0
15 100 -50 0 0 0 0 0 0 0 0 0 0 0 0 0
16 150 -50 0 0 0 0 0 0 0 0 0 0 0 0 0
17 200 -50 0 0 0 0 0 0 0 0 0 0 0 0 0
18 250 -50 0 0 0 0 0 0 0 0 0 0 0 0 0
19 300 -50 0 0 0 0 0 0 0 0 0 0 0 0 0
20 350 -50 0 0 0 0 0 1 0 0 0 0 0 0 0
21 400 -50 0 0 0 0 0 0 0 0 0 0 0 0 0
22 450 -50 0 0 0 0 0 0 0 0 0 0 0 0 0
23 500 -50 0 0 0 0 0 0 0 0 0 0 0 0 0
24 550 -50 0 0 0 1 0 0 0 0 0 0 0 0 0
25 0 -100 0 0 0 0 0 0 0 0 0 0 0 0 0
26 50 -100 0 0 0 0 0 0 0 0 0 0 0 0 0
27 100 -100 1 0 0 0 0 0 0 0 0 0 0 0 0
28 150 -100 0 0 0 0 0 0 0 0 0 0 0 0 0
29 200 -100 0 0 0 0 0 0 0 0 0 0 0 0 0
30 250 -100 0 0 0 0 0 0 0 0 0 0 0 0 0
31 300 -100 0 0 2 0 0 0 1 0 0 0 0 0 0
32 350 -100 0 0 0 0 0 0 0 0 0 0 0 0 0
33 400 -100 0 0 0 0 0 0 0 0 0 0 0 0 0
34 450 -100 0 0 0 0 0 0 0 0 0 0 0 0 0
35 500 -100 0 0 0 0 0 0 0 0 0 0 0 0 0
36 550 -100 0 0 0 0 0 0 0 0 0 0 0 0 0
37 0 -150 0 0 0 0 0 0 0 0 0 0 0 0 0
38 50 -150 0 0 0 0 0 0 0 0 0 0 0 0 0
39 100 -150 0 0 0 0 0 0 0 1 0 0 0 0 0
40 150 -150 0 0 0 0 0 0 0 0 0 0 0 0 0
41 200 -150 0 0 0 0 0 0 0 0 0 0 0 0 0
42 250 -150 0 0 0 0 0 0 0 0 0 0 0 0 0
43 300 -150 0 0 0 0 0 0 0 0 0 0 0 0 0
44 350 -150 0 0 0 0 0 0 0 0 0 0 0 0 0
45 400 -150 0 0 2 0 0 0 0 0 0 0 0 0 0
46 450 -150 0 0 0 0 0 0 0 0 0 0 0 0 0
47 500 -150 0 0 0 0 0 0 0 0 0 0 0 0 0
48 550 -150 0 0 0 0 0 0 0 0 0 0 0 0 0
49 0 -200 0 0 0 0 0 0 0 0 0 0 0 0 0
50 50 -200 0 0 0 0 0 0 0 0 0 0 0 0 0
51 100 -200 0 0 0 0 0 0 0 1 0 0 0 0 0
52 150 -200 0 0 0 0 0 0 0 0 0 0 0 0 0
53 200 -200 0 0 0 0 0 0 0 0 0 0 0 0 0
54 250 -200 0 0 0 0 0 0 0 0 0 0 0 0 0
55 300 -200 0 0 0 0 0 0 0 0 0 0 0 0 0
56 350 -200 0 0 0 0 0 0 0 0 0 0 0 0 0
57 400 -200 0 0 0 0 0 0 0 0 1 0 0 0 0
58 450 -200 0 0 0 0 0 0 0 0 0 0 0 0 0
59 500 -200 0 0 0 0 2 0 0 0 0 0 0 0 0
60 550 -200 0 0 0 0 0 0 0 0 0 2 0 0 0
61 0 -250 0 0 0 0 0 0 0 0 0 0 0 0 0
62 50 -250 0 0 0 0 0 0 0 0 0 0 0 0 0
63 100 -250 0 0 0 0 0 0 0 0 0 0 0 0 0
64 150 -250 0 0 0 0 0 0 0 1 0 0 0 0 0
65 200 -250 0 0 0 0 0 0 0 0 0 0 0 0 0
66 250 -250 0 0 0 0 0 0 0 0 0 0 0 0 0
67 300 -250 1 0 0 0 0 0 0 0 0 0 0 0 0
68 350 -250 0 0 0 0 0 0 0 0 2 0 0 0 0
69 400 -250 0 0 0 0 0 0 0 0 0 0 0 0 0
70 450 -250 0 0 0 0 0 0 0 0 0 0 0 0 0
71 500 -250 0 0 0 0 0 0 0 0 0 0 0 0 0
72 550 -250 0 0 0 0 0 0 0 0 0 1 1 0 0
73 0 -300 0 0 0 0 0 0 0 0 0 0 0 1 0
74 50 -300 0 0 0 0 0 0 0 0 0 0 0 0 1
75 100 -300 0 0 0 0 0 0 0 0 0 0 0 0 0
76 150 -300 0 0 0 0 0 0 0 0 0 0 0 0 0
77 200 -300 0 0 0 0 0 0 0 0 0 0 0 0 0
78 250 -300 0 0 0 0 0 0 0 0 0 0 0 0 0
79 300 -300 0 0 0 0 0 0 0 0 0 0 0 0 0
80 350 -300 0 0 0 0 0 0 0 0 0 0 0 0 0
81 400 -300 0 0 0 0 0 0 0 0 1 0 0 0 0
82 450 -300 0 0 0 0 0 0 0 0 1 0 0 0 0
83 500 -300 0 0 0 0 0 0 0 0 0 0 1 0 0
84 550 -300 0 0 0 0 0 0 0 0 0 0 1 0 0
"""


def golden_hare_arrays():
    rows = [[int(v) for v in line.split()] for line in HARE_GOLDEN.strip().splitlines()]
    arr = np.array(rows)
    return arr[:, 1:3].astype(float), arr[:, 3:].T


class TestCaptureHistory:
    def test_validation(self):
        with pytest.raises(DataError):
            CaptureHistory(y=np.array([], dtype=int), J=3)
        with pytest.raises(DataError):
            CaptureHistory(y=np.array([0, 1]), J=3)
        with pytest.raises(DataError):
            CaptureHistory(y=np.array([4]), J=3)

    def test_basic(self):
        ch = CaptureHistory(y=np.array([1, 2]), J=3)
        assert ch.n == 2


class TestCaptureCsv:
    def test_load(self, tmp_path):
        f = tmp_path / "c.csv"
        f.write_text("# J=3\nid,y\n1,1\n2,2\n")
        ch = load_capture_csv(f)
        assert list(ch.y) == [1, 2]
        assert ch.J == 3

    def test_flag_overrides_metadata(self, tmp_path):
        f = tmp_path / "c.csv"
        f.write_text("# J=3\nid,y\n1,1\n")
        assert load_capture_csv(f, J=5).J == 5

    def test_zero_count_names_line(self, tmp_path):
        f = tmp_path / "c.csv"
        f.write_text("# J=3\nid,y\n1,1\n2,0\n")
        with pytest.raises(DataError, match="zero capture history at line 4"):
            load_capture_csv(f)

    def test_count_above_occasions(self, tmp_path):
        f = tmp_path / "c.csv"
        f.write_text("# J=4\nid,y\n1,5\n")
        with pytest.raises(DataError, match="line 3"):
            load_capture_csv(f)

    def test_malformed_row(self, tmp_path):
        f = tmp_path / "c.csv"
        f.write_text("# J=4\nid,y\n1,two\n")
        with pytest.raises(DataError, match="line 3"):
            load_capture_csv(f)

    def test_round_trip_bytes(self, tmp_path):
        src = tmp_path / "a.csv"
        src.write_text("# J=4\nid,y\n1,1\n2,3\n3,2\n")
        out = tmp_path / "b.csv"
        write_capture_csv(out, load_capture_csv(src))
        assert out.read_text().rstrip("\n") == src.read_text().rstrip("\n")


class TestScrCsv:
    def test_round_trip(self, tmp_path):
        data = builtin_hare()
        f = tmp_path / "hare.csv"
        write_scr_csv(f, data)
        again = load_scr_csv(f)
        np.testing.assert_array_equal(again.Y, data.Y)
        np.testing.assert_array_equal(again.traps, data.traps)
        assert again.region == data.region
        assert again.J == data.J
        g = tmp_path / "hare2.csv"
        write_scr_csv(g, again)
        assert f.read_text() == g.read_text()

    def test_region_metadata(self, tmp_path):
        f = tmp_path / "s.csv"
        f.write_text("# J=2\n# region=-5,10,-5,10\ntrap_id,x,y,ind1\n1,0,0,1\n")
        data = load_scr_csv(f)
        assert data.region == Region(-5, 10, -5, 10)

    def test_default_region_is_buffered_bbox(self, tmp_path):
        f = tmp_path / "s.csv"
        f.write_text("# J=2\ntrap_id,x,y,ind1\n1,0,0,1\n2,50,-30,0\n")
        data = load_scr_csv(f)
        assert data.region == Region(-100, 150, -130, 100)


class TestBuiltins:
    def test_salamander_counts(self):
        ch = builtin_salamander()
        assert ch.n == 93
        assert ch.J == 4
        assert int(ch.y.sum()) == 112  # 78*1 + 11*2 + 4*3
        assert int(ch.y.max()) == 3
        vals, counts = np.unique(ch.y, return_counts=True)
        assert dict(zip(vals.tolist(), counts.tolist())) == {1: 78, 2: 11, 3: 4}

    def test_hare_shape_and_region(self):
        data = builtin_hare()
        assert data.L == 84
        assert data.n == 13
        assert data.J == 5
        assert data.region == Region(-100, 650, -400, 100)
        assert data.region.area == pytest.approx(375_000.0)  # 37.5 ha

    def test_hare_spot_values(self):
        data = builtin_hare()
        # trap 3 at (100, 0): individual 1 detected once
        np.testing.assert_array_equal(data.traps[2], [100.0, 0.0])
        assert data.Y[0, 2] == 1
        assert np.all(data.Y.sum(axis=1) >= 1)

    def test_hare_matches_golden_listing(self):
        traps, Y = golden_hare_arrays()
        data = builtin_hare()
        np.testing.assert_array_equal(data.traps, traps)
        np.testing.assert_array_equal(data.Y, Y)

    def test_sim_demo_fixture(self):
        ch, truth = builtin_sim_demo()
        assert ch.n == 19
        assert truth.N == 39
        assert truth.M == 100
        assert int(ch.y.sum()) == 24
        assert ch.J == 3


class TestSimulateM0:
    def test_deterministic(self):
        a, ta = simulate_m0(100, 0.4, 0.25, 3, seed=7)
        b, tb = simulate_m0(100, 0.4, 0.25, 3, seed=7)
        np.testing.assert_array_equal(a.y, b.y)
        assert ta.N == tb.N

    def test_no_members(self):
        data, truth = simulate_m0(50, 0.0, 0.5, 3, seed=1)
        assert data is None
        assert truth.n == 0
        assert truth.N == 0

    def test_expected_sample_size(self):
        # E[n] = M * psi * (1 - (1-p)^J) = 100 * 0.4 * (1 - 0.75^3) = 23.125
        total = 0
        reps = 10_000
        for seed in range(reps):
            _, truth = simulate_m0(100, 0.4, 0.25, 3, seed=seed)
            total += truth.n
        assert total / reps == pytest.approx(23.125, abs=0.5)

    def test_counts_within_truth(self):
        data, truth = simulate_m0(200, 0.5, 0.3, 4, seed=3)
        assert truth.n == data.n
        assert truth.n <= truth.N <= truth.M


class TestSimulateScr:
    def setup_method(self):
        self.traps = np.array([[0.0, 0.0], [50.0, 0.0], [0.0, 50.0], [50.0, 50.0]])
        self.region = Region(-50, 100, -50, 100)

    def test_deterministic(self):
        a, _ = simulate_scr(40, 0.6, -1.0, -1e-4, self.traps, self.region, 4, seed=5)
        b, _ = simulate_scr(40, 0.6, -1.0, -1e-4, self.traps, self.region, 4, seed=5)
        np.testing.assert_array_equal(a.Y, b.Y)

    def test_everyone_detected(self):
        data, truth = simulate_scr(30, 1.0, 8.0, 0.0, self.traps, self.region, 3, seed=2)
        assert truth.n == 30
        assert data.n == 30

    def test_expected_sample_size_matches_monte_carlo(self):
        # Oracle: under one shared membership indicator per individual the
        # detection probability is psi * (1 - prod_l (1-p_l)^J); average it
        # over uniform centers by plain Monte Carlo.
        psi, b0, b1, J, M = 0.5, -1.0, -5e-4, 4, 80
        rng = np.random.default_rng(99)
        pts = self.region.sample(rng, 200_000)
        d2 = ((pts[:, None, :] - self.traps[None, :, :]) ** 2).sum(axis=2)
        p = 1.0 / (1.0 + np.exp(-(b0 + b1 * d2)))
        detect = psi * (1.0 - np.prod((1.0 - p) ** J, axis=1))
        expected = M * detect.mean()

        total = 0
        reps = 3000
        for seed in range(reps):
            _, truth = simulate_scr(M, psi, b0, b1, self.traps, self.region, J, seed=seed)
            total += truth.n
        assert total / reps == pytest.approx(expected, rel=0.02)
