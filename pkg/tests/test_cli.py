import io

import numpy as np
import pytest

from flowreach.automaton import parse_model
from flowreach.cli import (
    InputError,
    RunConfig,
    _containment,
    _polygon_from_halfplanes,
    compare,
    main,
    run,
    segment_polygon,
)
from flowreach.geometry import octagonal_directions
from flowreach.reach import analyze
from oracles import polygon_area

MODEL = """
vars x, c, g, p;
settings { delta 0.01; horizon 0.6; }
location on {
  flow x' = -0.5*x + 2; flow c' = 1; flow g' = 1;
  inv c <= 0.105;
}
location off {
  flow x' = -0.5*x; flow c' = 1; flow g' = 1;
  inv c <= 0.105;
}
jump on -> off { guard c >= 0.105; reset c := 0; }
jump off -> on { guard c >= 0.105; reset c := 0; }
init on { x = 1; c = 0; g = 0; p = 1; }
unsafe * { x >= 10; }
"""


@pytest.fixture
def model_file(tmp_path):
    path = tmp_path / "cycler.model"
    path.write_text(MODEL)
    return path


class TestRunCommand:
    def test_safe_model_exits_zero(self, model_file, tmp_path):
        stats_path = tmp_path / "stats.txt"
        out = io.StringIO()
        code, stats = run(RunConfig(str(model_file), stats_path=str(stats_path)),
                          out=out)
        assert code == 0
        assert stats.verdict == "safe"
        text = stats_path.read_text()
        assert "verdict = safe" in text
        assert "flowpipes =" in text and "segments =" in text
        assert all(" = " in line for line in text.strip().splitlines())

    def test_unknown_verdict_exits_one(self, tmp_path):
        path = tmp_path / "bad.model"
        path.write_text(MODEL.replace("unsafe * { x >= 10; }",
                                      "unsafe * { x >= 1; }"))
        code, stats = run(RunConfig(str(path)), out=io.StringIO())
        assert code == 1 and stats.verdict == "unknown"

    def test_missing_file_exits_two(self):
        assert main(["run", "missing.model"]) == 2

    def test_parse_error_exits_two(self, tmp_path, capsys):
        path = tmp_path / "broken.model"
        path.write_text("vars x y;")
        assert main(["run", str(path)]) == 2
        assert "error:" in capsys.readouterr().err

    def test_unknown_plot_variable_exits_two(self, model_file, tmp_path):
        assert main(["run", str(model_file),
                     "--plot", "x,bogus", str(tmp_path / "o.csv")]) == 2

    def test_overrides_beat_model_settings(self, model_file):
        out = io.StringIO()
        code, stats = run(RunConfig(str(model_file), horizon=0.05,
                                    decompose="all"), out=out)
        assert code == 0
        assert stats.mode == "all"
        assert stats.flowpipes == 1

    def test_stats_subspace_sizes(self, model_file):
        _, stats = run(RunConfig(str(model_file), decompose="all"),
                       out=io.StringIO())
        # x is rest, c and g are clocks, p is discrete.
        assert (stats.disc_size, stats.clock_size, stats.rest_size) == (1, 2, 1)
        assert stats.disc_size + stats.clock_size + stats.rest_size == 4

    def test_main_run_exit_code(self, model_file):
        assert main(["run", str(model_file), "--decompose", "all"]) == 0


class TestPlotOutput:
    def run_plot(self, model_file, tmp_path, fmt, name):
        out_path = tmp_path / name
        code = main(["run", str(model_file), "--horizon", "0.1",
                     "--plot", "g,x", str(out_path), "--plot-format", fmt])
        assert code == 0
        return out_path.read_text()

    def test_csv_header_and_round_trip(self, model_file, tmp_path):
        text = self.run_plot(model_file, tmp_path, "csv", "out.csv")
        lines = text.strip().splitlines()
        assert lines[0] == "flowpipe,segment,location,t1,t2,vx,vy"
        rows = [line.split(",") for line in lines[1:]]
        assert rows
        for row in rows:
            assert len(row) == 7
            float(row[3]), float(row[4]), float(row[5]), float(row[6])

    def test_csv_vertices_ccw(self, model_file, tmp_path):
        text = self.run_plot(model_file, tmp_path, "csv", "out.csv")
        by_segment = {}
        for line in text.strip().splitlines()[1:]:
            parts = line.split(",")
            by_segment.setdefault((parts[0], parts[1]), []).append(
                (float(parts[5]), float(parts[6])))
        for verts in by_segment.values():
            v = np.array(verts)
            if v.shape[0] < 3:
                continue
            x, y = v[:, 0], v[:, 1]
            signed = 0.5 * (np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))
            assert signed > 0

    def test_gnuplot_blocks(self, model_file, tmp_path):
        text = self.run_plot(model_file, tmp_path, "gnuplot", "out.dat")
        assert "# flowpipe 0 segment 0" in text
        assert "\n\n" in text

    def test_svg_polygons(self, model_file, tmp_path):
        text = self.run_plot(model_file, tmp_path, "svg", "out.svg")
        assert text.startswith("<svg")
        assert "<polygon" in text and text.rstrip().endswith("</svg>")

    def test_polygons_cover_projection(self, model_file):
        automaton, settings, unsafe = parse_model(MODEL)
        result = analyze(automaton, settings, unsafe)
        vi, vj = automaton.var_index("g"), automaton.var_index("x")
        rng = np.random.default_rng(3)
        for seg in result.segments[:20]:
            poly = segment_polygon(seg, result.partition, vi, vj)
            assert poly.shape[0] >= 3
            box = seg.sets[0]
            for _ in range(50):
                point = rng.uniform(box.lo, box.hi)
                proj = np.array([point[vi], point[vj]])
                dirs = octagonal_directions(2)
                sups = dirs @ proj
                bounds = np.array([np.max(poly @ d) for d in dirs])
                assert np.all(sups <= bounds + 1e-9)

    def test_determinism_minus_wall_time(self, model_file, tmp_path):
        a = self.run_plot(model_file, tmp_path, "csv", "a.csv")
        b = self.run_plot(model_file, tmp_path, "csv", "b.csv")
        assert a == b
        stats = []
        for name in ("sa.txt", "sb.txt"):
            path = tmp_path / name
            run(RunConfig(str(model_file), horizon=0.1, stats_path=str(path)),
                out=io.StringIO())
            lines = [line for line in path.read_text().splitlines()
                     if not line.startswith("wall_time_seconds")]
            stats.append(lines)
        assert stats[0] == stats[1]


class TestPolygonHelper:
    def test_unit_square(self):
        dirs = np.array([[1.0, 0], [-1.0, 0], [0, 1.0], [0, -1.0]])
        poly = _polygon_from_halfplanes(dirs, np.array([1.0, 0.0, 1.0, 0.0]))
        assert poly.shape == (4, 2)
        assert abs(polygon_area(poly) - 1.0) < 1e-9

    def test_unbounded_rows_dropped(self):
        dirs = np.array([[1.0, 0], [-1.0, 0], [0, 1.0], [0, -1.0]])
        poly = _polygon_from_halfplanes(dirs, np.array([1.0, 0.0, np.inf, 0.0]))
        assert poly.shape[0] < 3


class TestCompareCommand:
    def test_table_and_containment(self, model_file):
        out = io.StringIO()
        code = compare([RunConfig(str(model_file), decompose=mode)
                        for mode in ("none", "all")], out=out)
        text = out.getvalue()
        assert code == 0
        assert "mode" in text and "flowpipes" in text
        assert "containment none in cross(all): ok" in text

    def test_equal_box_counts_reported(self, model_file):
        out = io.StringIO()
        compare([RunConfig(str(model_file), decompose=mode)
                 for mode in ("none", "timed", "discrete", "all")], out=out)
        counts = set()
        for line in out.getvalue().splitlines()[1:5]:
            counts.add(int(line.split()[2]))
        assert len(counts) == 1

    def test_single_config_table(self, model_file):
        out = io.StringIO()
        code = compare([RunConfig(str(model_file))], out=out)
        assert code == 0
        assert len(out.getvalue().strip().splitlines()) == 2

    def test_mixed_models_rejected(self, model_file, tmp_path):
        other = tmp_path / "other.model"
        other.write_text(MODEL)
        with pytest.raises(InputError):
            compare([RunConfig(str(model_file)), RunConfig(str(other))])

    def test_main_compare(self, model_file):
        assert main(["compare", str(model_file), "--modes", "none,all"]) == 0

    def test_main_compare_bad_mode(self, model_file):
        assert main(["compare", str(model_file), "--modes", "sideways"]) == 2


class TestContainmentHelper:
    def test_detects_matching_runs(self, model_file):
        automaton, settings, unsafe = parse_model(MODEL)
        from flowreach.automaton import ReachSettings
        none = analyze(automaton, ReachSettings(delta=0.01, horizon=0.3), unsafe)
        full = analyze(automaton, ReachSettings(delta=0.01, horizon=0.3,
                                                decompose="all"), unsafe)
        ok, worst = _containment(none, full)
        assert ok and worst <= 1e-9
