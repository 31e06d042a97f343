import json

import numpy as np
import pytest

from treefilter import cli, tree_filter
from treefilter.formats import read_pnm, read_tensor, write_pnm, write_tensor


def step_image(seed=0, size=32, noise=10.0):
    rng = np.random.default_rng(seed)
    img = np.full((size, size), 60.0)
    img[:, size // 2 :] = 190.0
    img += rng.normal(0, noise, img.shape)
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def run(*argv):
    return cli.main([str(a) for a in argv])


def test_constant_image_unchanged(tmp_path):
    src = tmp_path / "c.ppm"
    img = np.zeros((9, 11, 3), dtype=np.uint8)
    img[:] = (17, 130, 244)
    write_pnm(src, img)
    assert run("filter", "--input", src, "--output", tmp_path / "o.ppm", "--groups", 3) == 0
    assert np.array_equal(read_pnm(tmp_path / "o.ppm"), img)


def test_constant_embedding_gives_global_mean(tmp_path):
    rng = np.random.default_rng(1)
    x = rng.standard_normal((2, 6, 7))
    write_tensor(tmp_path / "x.ltf", x)
    write_tensor(tmp_path / "e.ltf", np.ones((1, 6, 7)))
    assert run("filter", "--input", tmp_path / "x.ltf", "--embedding", tmp_path / "e.ltf",
               "--output", tmp_path / "y.ltf") == 0
    y = read_tensor(tmp_path / "y.ltf")
    assert y.shape == x.shape and y.dtype == x.dtype
    np.testing.assert_allclose(y, np.broadcast_to(x.mean(axis=(1, 2), keepdims=True), x.shape), rtol=1e-12)


def test_step_edge_denoising(tmp_path):
    img = step_image()
    write_pnm(tmp_path / "n.pgm", img)
    assert run("filter", "--input", tmp_path / "n.pgm", "--scale", 20, "--output", tmp_path / "d.pgm") == 0
    out = read_pnm(tmp_path / "d.pgm").astype(float)
    src = img.astype(float)
    left, right = np.s_[:, :16], np.s_[:, 16:]
    for region in (left, right):
        assert out[region].var() < src[region].var()
    gap_in = src[right].mean() - src[left].mean()
    gap_out = out[right].mean() - out[left].mean()
    assert abs(gap_out - gap_in) <= 0.05 * gap_in


def test_affinity_command(tmp_path):
    img = step_image(seed=2, noise=3.0)
    write_pnm(tmp_path / "g.pgm", img)
    assert run("affinity", "--input", tmp_path / "g.pgm", "--pos", "5,4", "--scale", 10,
               "--output", tmp_path / "a.pgm") == 0
    aff = read_pnm(tmp_path / "a.pgm")
    assert aff[5, 4] == 255 and aff.max() == 255
    assert aff[:, :16].mean() > aff[:, 16:].mean()


def test_affinity_uniform_image(tmp_path):
    write_pnm(tmp_path / "u.pgm", np.full((6, 6), 99, dtype=np.uint8))
    assert run("affinity", "--input", tmp_path / "u.pgm", "--pos", "0,0", "--output", tmp_path / "a.ltf") == 0
    assert np.all(read_tensor(tmp_path / "a.ltf") == 1.0)


def test_affinity_out_of_bounds(tmp_path):
    write_pnm(tmp_path / "u.pgm", np.zeros((4, 4), dtype=np.uint8))
    assert run("affinity", "--input", tmp_path / "u.pgm", "--pos", "4,0", "--output", tmp_path / "a.pgm") == 2


def test_filter_is_deterministic(tmp_path):
    rng = np.random.default_rng(3)
    write_pnm(tmp_path / "in.ppm", rng.integers(0, 256, (20, 24, 3), dtype=np.uint8))
    outs = []
    for k in range(2):
        out = tmp_path / f"o{k}.ppm"
        assert run("filter", "--input", tmp_path / "in.ppm", "--seed", 7, "--groups", 3,
                   "--scale", 3, "--residual", "--output", out) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]


def test_gradcheck_report(tmp_path):
    args = ["gradcheck", "--instances", 3, "--grid", "8x8"]
    assert run(*args, "--output", tmp_path / "a.json") == 0
    assert run(*args, "--output", tmp_path / "b.json") == 0
    a = (tmp_path / "a.json").read_bytes()
    assert a == (tmp_path / "b.json").read_bytes()
    report = json.loads(a)
    assert report["passed"] and report["schema_version"] == 1
    assert all(v < 1e-6 for v in report["max_deviation"].values())


def test_gradcheck_catches_corrupted_blend(tmp_path, monkeypatch):
    monkeypatch.setattr(tree_filter, "propagation_blend", lambda s: 1.0 - s)
    assert run("gradcheck", "--instances", 2, "--grid", "6x6", "--output", tmp_path / "r.json") == 3
    assert not json.loads((tmp_path / "r.json").read_text())["passed"]


def test_gradcheck_size_limit():
    assert run("gradcheck", "--grid", "65x2") == 1


def test_bench_usage_errors():
    assert run("bench", "--sizes", "") == 1
    assert run("bench", "--sizes", "64,256", "--reps", 1) == 1


def test_bench_report(tmp_path):
    assert run("bench", "--sizes", "64,256", "--reps", 5, "--output", tmp_path / "b.json") == 0
    report = json.loads((tmp_path / "b.json").read_text())
    assert report["schema_version"] == 1
    assert [r["n"] for r in report["records"]] == [64, 256]


@pytest.mark.parametrize(
    "argv,code",
    [
        ([], 1),
        (["filter", "--input", "/nonexistent.pgm", "--output", "x.pgm"], 1),
        (["filter", "--bogus"], 1),
    ],
)
def test_usage_exit_codes(argv, code):
    assert cli.main(argv) == code


def test_parse_and_validation_exit_codes(tmp_path):
    (tmp_path / "bad.pgm").write_bytes(b"P5\n4 4\n255\n\x00")
    assert run("filter", "--input", tmp_path / "bad.pgm", "--output", tmp_path / "o.pgm") == 1
    write_pnm(tmp_path / "rgb.ppm", np.zeros((4, 4, 3), dtype=np.uint8))
    assert run("filter", "--input", tmp_path / "rgb.ppm", "--groups", 2, "--output", tmp_path / "o.ppm") == 2
    write_pnm(tmp_path / "small.pgm", np.zeros((3, 3), dtype=np.uint8))
    assert run("filter", "--input", tmp_path / "rgb.ppm", "--guidance", tmp_path / "small.pgm",
               "--output", tmp_path / "o.ppm") == 2
