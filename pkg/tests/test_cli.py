import re

import pytest

from polyrank.cli import format_dataset, main, parse_dataset, MalformedRow
from polyrank.dnnrank import PairwiseRanker, save_weights, synthetic_dataset
from polyrank.presets import matmul_document

SMALL_CONV = "conv:1,32,32,4,4,3,3,1,1,16"


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def matmul_file(tmp_path):
    p = tmp_path / "matmul.nest"
    p.write_text(matmul_document())
    return str(p)


def test_analyze_matmul_reports_a_reuse(capsys, matmul_file):
    code, out, _ = run(capsys, "analyze", "--nest", matmul_file)
    assert code == 0
    assert re.search(r"RAR A A\[i\]\[k\] -> A\[i\]\[k\] ws_min=11 ws_max=21", out)
    assert "cost " in out


def test_analyze_rows_format(capsys, matmul_file):
    code, out, _ = run(capsys, "analyze", "--nest", matmul_file, "--format", "rows")
    assert code == 0
    rows = [l.split("\t") for l in out.splitlines() if l.startswith("dep\t")]
    assert ["dep", "identity", "d2", "RAR", "A", "A[i][k] -> A[i][k]", "11", "21"] in rows


def test_analyze_conv_preset(capsys):
    code, out, _ = run(capsys, "analyze", "--preset", "conv:2,32,32,4,4,3,3,1,1,16", "--format", "rows")
    assert code == 0
    deps = [l.split("\t") for l in out.splitlines() if l.startswith("dep\t")]
    assert len(deps) >= 3
    arrays = {d[4] for d in deps}
    assert arrays == {"output", "input", "filter"}


def test_missing_machine_file(capsys, tmp_path):
    missing = str(tmp_path / "nope.machine")
    code, _, err = run(capsys, "analyze", "--preset", "matmul", "--machine", missing)
    assert code == 2
    assert missing in err


def test_parse_error_exit_status(capsys, tmp_path):
    bad = tmp_path / "bad.nest"
    bad.write_text("loop i lower 0 upper 4\nfrobnicate\nstatement S\n read A[i]\n")
    code, _, err = run(capsys, "analyze", "--nest", str(bad))
    assert code == 1
    assert "line 2" in err


def test_rank_matmul_emits_one_file(capsys, tmp_path):
    cfg = tmp_path / "v.cfg"
    cfg.write_text("permute i j k\n")
    out_dir = tmp_path / "out"
    code, out, _ = run(capsys, "rank", "--preset", "matmul", "--variants", str(cfg), "--out", str(out_dir))
    assert code == 0
    assert sorted(p.name for p in out_dir.iterdir()) == ["report.txt", "variant_01.c"]
    first = re.search(r"^  1\. (\S+) cost=", out, re.M).group(1)
    assert f"rank 1: {first}" in (out_dir / "variant_01.c").read_text()
    assert len(re.findall(r"^  \d+\. ", out, re.M)) == 6


def test_rank_prefers_variant_that_fits(capsys, tmp_path):
    from polyrank.cli import analyze_variant
    from polyrank.cachefit import default_machine
    from polyrank.presets import parse_preset
    from polyrank.reuse import ws_all
    from polyrank.variants import apply_recipe, parse_recipe

    nest = parse_preset(SMALL_CONV)
    recipes = ["perm=ofm_tile,oj,ifm_tile,kj,ki", "perm=ofm_tile,ifm_tile,ki,kj,oj"]
    totals = {}
    for r in recipes:
        a = analyze_variant(r, apply_recipe(nest, parse_recipe(r)), default_machine())
        totals[r] = sum(ws_all(a.records))
    small, large = sorted(recipes, key=totals.get)
    assert totals[small] < totals[large]
    machine = tmp_path / "tiny.machine"
    machine.write_text(f"level L1 size {totals[small] * 4} latency 4 bandwidth 128\nmem latency 200 bandwidth 16\nelement_bytes 4\n")
    cfg = tmp_path / "v.cfg"
    cfg.write_text("".join(f"perm {r.split('=')[1]}\n" for r in recipes))
    code, out, _ = run(capsys, "rank", "--preset", SMALL_CONV, "--variants", str(cfg), "--machine", str(machine), "--top-k", "2", "--format", "rows")
    assert code == 0
    ranks = [l.split("\t") for l in out.splitlines() if l.startswith("rank\t")]
    assert [r[2] for r in ranks] == [small, large]
    fits = {tuple(l.split("\t")[1:3]): l.split("\t")[3] for l in out.splitlines() if l.startswith("fit\t")}
    assert fits[small, "mem"] == "0" and int(fits[large, "mem"]) > 0


def test_rank_dnn_without_weights(capsys):
    code, _, err = run(capsys, "rank", "--preset", "matmul", "--ranker", "dnn")
    assert code == 2
    assert "MissingWeights" in err


def test_rank_dnn_with_weights(capsys, tmp_path):
    w = tmp_path / "w.txt"
    save_weights(PairwiseRanker.initialize(0), w)
    code, out, _ = run(capsys, "rank", "--preset", "matmul", "--ranker", "dnn", "--weights", str(w))
    assert code == 0
    assert "wins=" in out


def test_rank_rejects_illegal_explicit_recipe(capsys, tmp_path):
    nest = tmp_path / "stencil.nest"
    nest.write_text("loop i lower 1 upper 5\nloop j lower 0 upper 4\nstatement S\n read A[i - 1][j + 1]\n write A[i][j]\n")
    cfg = tmp_path / "v.cfg"
    cfg.write_text("perm j,i\n")
    code, _, err = run(capsys, "rank", "--nest", str(nest), "--variants", str(cfg))
    assert code == 2
    assert "ConfigRejected" in err


def test_train_separable(capsys, tmp_path):
    data = tmp_path / "pairs.txt"
    data.write_text(format_dataset(synthetic_dataset(2000, seed=0)))
    w = tmp_path / "w.txt"
    code, out, _ = run(capsys, "train", "--dataset", str(data), "--out", str(w), "--seed", "0")
    assert code == 0
    acc = float(re.search(r"held-out accuracy: ([0-9.]+)", out).group(1))
    assert acc >= 0.90
    assert "held-out rows: 600" in out
    assert w.read_text().startswith("pairwise-ranker")


def test_train_split_counts(capsys, tmp_path):
    data = tmp_path / "pairs.txt"
    data.write_text(format_dataset(synthetic_dataset(10, seed=0)))
    code, out, _ = run(capsys, "train", "--dataset", str(data), "--epochs", "1")
    assert code == 0
    assert "train rows: 7" in out and "held-out rows: 3" in out


def test_train_malformed_row(capsys, tmp_path):
    lines = format_dataset(synthetic_dataset(6, seed=0)).splitlines()
    lines[4] = "1 2 3 x 5 6 7 8 A"
    data = tmp_path / "pairs.txt"
    data.write_text("\n".join(lines) + "\n")
    code, _, err = run(capsys, "train", "--dataset", str(data))
    assert code == 2
    assert "line 5" in err
    with pytest.raises(MalformedRow) as exc:
        parse_dataset(data.read_text())
    assert exc.value.line == 5


def test_train_empty_dataset(capsys, tmp_path):
    data = tmp_path / "pairs.txt"
    data.write_text("# nothing\n")
    code, _, err = run(capsys, "train", "--dataset", str(data))
    assert code == 2 and "EmptyDataset" in err


def test_emit_conv_identity(capsys):
    code, out, _ = run(capsys, "emit", "--preset", "conv:2,32,32,4,4,3,3,1,1,16")
    assert code == 0
    assert out.count("for (") == 6
    assert out.count("gemm_microkernel(") == 1


def test_emit_matmul_permuted(capsys):
    code, out, _ = run(capsys, "emit", "--preset", "matmul", "--recipe", "perm=k,j,i")
    assert code == 0
    heads = re.findall(r"for \((\w+) =", out)
    assert heads == ["k", "j", "i"]
    assert "C[i][j] += A[i][k] * B[k][j];" in out


def test_emit_unknown_loop(capsys):
    code, _, err = run(capsys, "emit", "--preset", "matmul", "--recipe", "perm=q,i")
    assert code == 2 and "q" in err


def test_emit_is_byte_stable(capsys):
    first = run(capsys, "emit", "--preset", SMALL_CONV, "--recipe", "perm=oj,kj;tile=oj:2")[1]
    second = run(capsys, "emit", "--preset", SMALL_CONV, "--recipe", "perm=oj,kj;tile=oj:2")[1]
    assert first == second


def test_oracle_check_command(capsys):
    code, out, _ = run(capsys, "oracle-check", "--preset", "matmul:4,5,3", "--pairs", "--lru")
    assert code == 0
    assert "0 mismatches" in out
    assert "diagnostic only" in out
