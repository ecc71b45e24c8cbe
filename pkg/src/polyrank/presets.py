"""Built-in nests: matrix multiplication and the blocked 2-D convolution."""

from __future__ import annotations

from dataclasses import astuple, dataclass, fields

from .loopnest import LoopNest, parse_nest

__all__ = ["ConvPreset", "MATMUL_TEMPLATE", "matmul_document", "matmul_nest", "conv_document", "conv_nest", "parse_preset"]


MATMUL_TEMPLATE = """\
nest matmul
param M = {M}
param N = {N}
param K = {K}
loop i lower 0 upper M
loop j lower 0 upper N
loop k lower 0 upper K
statement S
  read C[i][j]
  read A[i][k]
  read B[k][j]
  write C[i][j]
  body C[i][j] += A[i][k] * B[k][j];
"""


def matmul_document(M: int = 4, N: int = 4, K: int = 4) -> str:
    return MATMUL_TEMPLATE.format(M=M, N=N, K=K)


def matmul_nest(M: int = 4, N: int = 4, K: int = 4) -> LoopNest:
    return parse_nest(matmul_document(M, N, K))


@dataclass(frozen=True)
class ConvPreset:
    nImg: int = 2
    nOfm: int = 32
    nIfm: int = 32
    ofh: int = 4
    ofw: int = 4
    kh: int = 3
    kw: int = 3
    stride_h: int = 1
    stride_w: int = 1
    gemm_block: int = 16

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) <= 0:
                raise ValueError(f"conv preset field {f.name} must be positive")
        if self.nOfm % self.gemm_block or self.nIfm % self.gemm_block:
            raise ValueError("nOfm and nIfm must be divisible by gemm_block")

    @classmethod
    def parse(cls, text: str) -> "ConvPreset":
        parts = [p for p in text.replace(" ", "").split(",") if p]
        if len(parts) != len(fields(cls)):
            raise ValueError(f"conv preset needs {len(fields(cls))} integers, got {len(parts)}")
        return cls(*(int(p) for p in parts))

    def as_tuple(self) -> tuple[int, ...]:
        return astuple(self)


CONV_TEMPLATE = """\
nest conv2d
param nImg = {p.nImg}
param nOfm = {p.nOfm}
param nIfm = {p.nIfm}
param ofh = {p.ofh}
param ofw = {p.ofw}
param kh = {p.kh}
param kw = {p.kw}
param STRIDE_H = {p.stride_h}
param STRIDE_W = {p.stride_w}
param GEMM_BLOCK = {p.gemm_block}
annotation #pragma omp parallel for private(ofm_tile, ifm_tile, ij, oj, kj, ki, ii)
loop img lower 0 upper nImg
loop ofm_tile lower 0 upper nOfm / GEMM_BLOCK
loop ifm_tile lower 0 upper nIfm / GEMM_BLOCK
loop oj lower 0 upper ofh
let ij = oj * STRIDE_H
loop kj lower 0 upper kh
loop ki lower 0 upper kw
microkernel gemm_microkernel
  arg &filter[ofm_tile][ifm_tile][kj][ki][0][0]
  arg &input[img][ifm_tile][ij + kj][ki][0]
  arg &output[img][ofm_tile][oj][0][0]
  loop oi lower 0 upper ofw
  let ii = oi * STRIDE_W
  loop ofm lower 0 upper GEMM_BLOCK
  loop ifm lower 0 upper GEMM_BLOCK
end
statement S
  read output[img][ofm_tile][oj][oi][ofm]
  read filter[ofm_tile][ifm_tile][kj][ki][ifm][ofm]
  read input[img][ifm_tile][ij + kj][ii + ki][ifm]
  write output[img][ofm_tile][oj][oi][ofm]
  body output[img][ofm_tile][oj][oi][ofm] += filter[ofm_tile][ifm_tile][kj][ki][ifm][ofm] * input[img][ifm_tile][ij + kj][ii + ki][ifm];
"""


def conv_document(preset: ConvPreset | None = None) -> str:
    return CONV_TEMPLATE.format(p=preset or ConvPreset())


def conv_nest(preset: ConvPreset | None = None) -> LoopNest:
    return parse_nest(conv_document(preset))


def parse_preset(text: str) -> LoopNest:
    """``conv:<10 ints>`` or ``matmul:<M,N,K>``."""
    kind, _, args = text.partition(":")
    if kind == "conv":
        return conv_nest(ConvPreset.parse(args) if args else ConvPreset())
    if kind == "matmul":
        vals = [int(x) for x in args.split(",")] if args else [4, 4, 4]
        if len(vals) != 3:
            raise ValueError("matmul preset needs M,N,K")
        return matmul_nest(*vals)
    raise ValueError(f"unknown preset {kind!r}")
