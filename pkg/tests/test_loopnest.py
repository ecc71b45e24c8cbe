import pytest

from polyrank.affine import NonAffineExpression, UnboundParameter
from polyrank.intset import Aff, IntSet
from polyrank.loopnest import (
    LoopTag,
    MissingMicrokernelSpec,
    Mode,
    NotSupported,
    ParseError,
    access_relations,
    emit_source,
    footprint,
    inline_microkernel,
    iteration_space,
    parse_nest,
    restore_microkernel,
)
from polyrank.presets import ConvPreset, conv_nest, matmul_document, matmul_nest


def test_matmul_document_parses():
    n = matmul_nest()
    assert n.loop_vars == ("i", "j", "k")
    assert len(n.stmt.reads) == 3 and len(n.stmt.writes) == 1
    assert iteration_space(n).cardinality() == 64


def test_conv_document_parses_with_band():
    n = conv_nest()
    assert len(n.loops) == 9
    assert [l.var for l in n.band_loops] == ["oi", "ofm", "ifm"]
    assert all(l.tag is LoopTag.MICROKERNEL_BAND for l in n.loops[-3:])
    assert n.microkernel.callee == "gemm_microkernel"
    assert n.annotations == ("#pragma omp parallel for private(ofm_tile, ifm_tile, ij, oj, kj, ki, ii)",)


def test_conv_iteration_space_size():
    assert iteration_space(conv_nest()).cardinality() == 2 * 2 * 2 * 4 * 3 * 3 * 4 * 16 * 16


def test_strided_loop():
    n = parse_nest("loop i lower 0 upper 8 step 2\nstatement S\n read A[i]\n")
    assert [tuple(p) for p in iteration_space(n).points.tolist()] == [(0,), (2,), (4,), (6,)]


def test_triangular_bounds():
    n = parse_nest("loop i lower 0 upper 4\nloop j lower 0 upper i + 1\nstatement S\n read A[i][j]\n")
    assert iteration_space(n).cardinality() == 10


def test_undefined_parameter():
    with pytest.raises(UnboundParameter):
        parse_nest("loop i lower 0 upper Q\nstatement S\n read A[i]\n")


def test_non_affine_subscript():
    with pytest.raises(NonAffineExpression):
        parse_nest("loop i lower 0 upper 4\nloop j lower 0 upper 4\nstatement S\n read A[i * j]\n")


def test_parse_error_reports_line_and_column():
    with pytest.raises(ParseError) as err:
        parse_nest("param N = 4\nloop i lower 0 upper N\n  bogus line\nstatement S\n read A[i]\n")
    assert err.value.line == 3
    assert err.value.column == 3


def test_multi_statement_rejected():
    doc = "loop i lower 0 upper 4\nstatement S\n read A[i]\nstatement T\n read B[i]\n"
    with pytest.raises(NotSupported):
        parse_nest(doc)


def test_comments_and_whitespace():
    doc = "# header\n  param   N = 3   # trailing\nloop i lower 0 upper N\nstatement S\n read A[i]  # note\n"
    assert iteration_space(parse_nest(doc)).cardinality() == 3


def test_access_relations():
    n = matmul_nest()
    acc = access_relations(n)
    a_ref = n.stmt.refs[1]
    assert a_ref.array == "A" and a_ref.mode is Mode.READ
    rel = acc.per_ref[1]
    img = rel.apply(IntSet.from_points(n.space, [(1, 2, 3)]))
    assert [tuple(p) for p in img.points.tolist()] == [(1, 3)]
    assert set(acc.reads) == {"A", "B", "C"} and set(acc.writes) == {"C"}


def test_conv_input_access_folds_let():
    n = conv_nest()
    ref = [r for r in n.stmt.refs if r.array == "input"][0]
    idx = n.ref_index(ref)
    assert idx[2] == Aff({"oj": 1, "kj": 1}, 0)
    assert idx[3] == Aff({"oi": 1, "ki": 1}, 0)


def test_write_only_statement_has_no_reads():
    n = parse_nest("loop i lower 0 upper 4\nstatement S\n write A[i]\n")
    assert access_relations(n).reads == {}


def test_footprint_counts_distinct_elements_per_array():
    n = matmul_nest()
    assert footprint(n, iteration_space(n)) == 16 * 3


def test_restore_and_inline_roundtrip():
    n = conv_nest()
    r = restore_microkernel(n)
    assert len(r.loops) == 6 and r.call is not None
    assert inline_microkernel(r) == n
    with pytest.raises(MissingMicrokernelSpec):
        restore_microkernel(matmul_nest())


def test_emit_restored_conv_has_single_call():
    src = emit_source(restore_microkernel(conv_nest()))
    assert src.count("gemm_microkernel(") == 1
    assert src.count("for (") == 6
    assert "#pragma omp parallel for" in src
    assert "&input[img][ifm_tile][ij + kj][ki][0]" in src


def test_emit_inline_marks_band():
    src = emit_source(conv_nest())
    assert "/* gemm_microkernel operation begins */" in src
    assert "/* gemm_microkernel operation ends */" in src
    assert src.count("for (") == 9


def test_emit_is_stable():
    assert emit_source(matmul_nest()) == emit_source(parse_nest(matmul_document()))


def test_conv_preset_validation():
    with pytest.raises(ValueError):
        ConvPreset.parse("2,30,32,4,4,3,3,1,1,16")
    with pytest.raises(ValueError):
        ConvPreset.parse("2,32,32,4,4,3,3,1,0,16")
    assert ConvPreset.parse("2,32,32,4,4,3,3,1,1,16").as_tuple() == (2, 32, 32, 4, 4, 3, 3, 1, 1, 16)
