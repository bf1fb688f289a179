import numpy as np
import pytest

from manifold_mls.cli import main
from manifold_mls.cloud import read_points
from manifold_mls.synthetic import SphereEmbedding, sphere_geodesic_oracle


@pytest.fixture
def sphere_file(tmp_path):
    out = tmp_path / "s.xyz"
    assert main(["sample-sphere", "--d", "2", "--D", "4", "--R", "0.5", "--n", "200", "--seed", "1",
                 "--output", str(out)]) == 0
    return out


def test_sample_sphere_writes_sidecar(sphere_file):
    pts = read_points(sphere_file)
    assert pts.shape == (200, 4)
    assert (sphere_file.parent / "s.xyz.sphere").exists()


def test_project_and_resample(sphere_file, tmp_path):
    q = tmp_path / "q.xyz"
    np.savetxt(q, read_points(sphere_file)[:5] + 0.01)
    out = tmp_path / "p.xyz"
    assert main(["project", "--input", str(sphere_file), "--queries", str(q), "--d", "2", "--h", "0.15",
                 "--output", str(out)]) == 0
    assert read_points(out).shape == (5, 4)
    dense = tmp_path / "d.xyz"
    assert main(["resample", "--input", str(sphere_file), "--d", "2", "--k", "2", "--K", "2", "--h", "0.15",
                 "--skip-failures", "--output", str(dense)]) == 0
    assert dense.read_text().startswith("# resample d=2 k=2 K=2")


def test_geodesic_csv(sphere_file, tmp_path):
    pairs = tmp_path / "pairs.txt"
    pairs.write_text("0 1\n2 3\n")
    out = tmp_path / "g.csv"
    assert main(["geodesic", "--input", str(sphere_file), "--pairs", str(pairs), "--d", "2", "--k", "3",
                 "--h", "0.15", "--K", "3", "--param", "0.15", "--skip-failures",
                 "--sidecar", str(sphere_file) + ".sphere", "--output", str(out)]) == 0
    rows = out.read_text().splitlines()
    assert rows[1] == "pair_id,estimate,oracle,relative_error"
    pts = read_points(sphere_file)
    emb = SphereEmbedding.load(str(sphere_file) + ".sphere")
    for row, (i, j) in zip(rows[2:], [(0, 1), (2, 3)]):
        _, est, oracle, rel = map(float, row.split(","))
        assert oracle == pytest.approx(sphere_geodesic_oracle(emb, pts[i], pts[j]), rel=1e-9)
        assert rel == pytest.approx(abs(est - oracle) / oracle, rel=1e-6)
        assert est >= np.linalg.norm(pts[i] - pts[j]) * (1 - 1e-3)


def test_stats(sphere_file, capsys):
    assert main(["stats", "--input", str(sphere_file), "--sidecar", str(sphere_file) + ".sphere",
                 "--reference-n", "5000"]) == 0
    assert "fill_distance" in capsys.readouterr().out


def test_convergence_subcommand(tmp_path):
    out, sd = tmp_path / "c.csv", tmp_path / "c.dat"
    assert main(["convergence", "--manifold", "plane", "--k", "2", "--n", "30 60 120", "--seed", "0",
                 "--output", str(out), "--slope-data", str(sd), "--no-timings"]) == 0
    assert "exact regime" in out.read_text()
    assert sd.exists()


def test_table1_subcommand(tmp_path):
    out = tmp_path / "t.csv"
    args = ["table1", "--n", "40", "--D", "5", "--pairs", "2", "--realizations", "1", "--seed", "5",
            "--reference-factor", "10", "--no-timings", "--output", str(out)]
    assert main(args) == 0
    first = out.read_text()
    assert main(args) == 0
    assert out.read_text() == first


def test_exit_codes(sphere_file, tmp_path):
    q = tmp_path / "q.xyz"
    np.savetxt(q, [[0.5, 0.5, 0.5, 0.5]])
    assert main(["project", "--input", str(sphere_file), "--queries", str(q), "--d", "9",
                 "--output", str(tmp_path / "o")]) == 2
    assert main(["project", "--input", str(tmp_path / "missing"), "--queries", str(q), "--d", "2",
                 "--output", str(tmp_path / "o")]) == 4
    far = tmp_path / "far.xyz"
    np.savetxt(far, [[40.0, 0.0, 0.0, 0.0]])
    assert main(["project", "--input", str(sphere_file), "--queries", str(far), "--d", "2", "--h", "0.15",
                 "--output", str(tmp_path / "o")]) == 3
    assert main(["convergence", "--manifold", "circle", "--n", "32 64", "--seed", "0"]) == 2
    assert main(["table1"]) == 2   # --seed is required
