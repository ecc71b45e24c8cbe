/* conv2d variant identity */
/* parameters: nImg = 2, nOfm = 32, nIfm = 32, ofh = 4, ofw = 4, kh = 3, kw = 3, STRIDE_H = 1, STRIDE_W = 1, GEMM_BLOCK = 16 */
#pragma omp parallel for private(ofm_tile, ifm_tile, ij, oj, kj, ki, ii)
for (img = 0; img < nImg; ++img) {
  for (ofm_tile = 0; ofm_tile < nOfm / GEMM_BLOCK; ++ofm_tile) {
    for (ifm_tile = 0; ifm_tile < nIfm / GEMM_BLOCK; ++ifm_tile) {
      for (oj = 0; oj < ofh; ++oj) {
        ij = oj * STRIDE_H;
        for (kj = 0; kj < kh; ++kj) {
          for (ki = 0; ki < kw; ++ki) {
            gemm_microkernel(&filter[ofm_tile][ifm_tile][kj][ki][0][0], &input[img][ifm_tile][ij + kj][ki][0], &output[img][ofm_tile][oj][0][0]);
          }
        }
      }
    }
  }
}
