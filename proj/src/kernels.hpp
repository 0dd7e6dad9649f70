#pragma once

namespace clusdiff {

// Dense double-precision kernels shared by autodiff and eval. All matrices
// are row-major. When acc is true the result is accumulated into C.

/// C[m,n] = A[m,k] * B[k,n]
void mm(const double* A, const double* B, double* C, int m, int k, int n, bool acc = false);
/// C[m,n] = A[m,k] * B[n,k]^T
void mm_abT(const double* A, const double* B, double* C, int m, int k, int n, bool acc = false);
/// C[m,n] = A[k,m]^T * B[k,n]
void mm_aTb(const double* A, const double* B, double* C, int m, int k, int n, bool acc = false);

/// 3x3/pad-1 im2col: x[cin,h,w] -> cols[cin*9, oh*ow] with oh=ceil(h/s).
void im2col3x3(const double* x, int cin, int h, int w, int stride, double* cols);
/// Transpose of im2col: scatter cols back, accumulating into dx[cin,h,w].
void col2im3x3(const double* cols, int cin, int h, int w, int stride, double* dx);

inline int conv_out_extent(int e, int stride) { return (e + stride - 1) / stride; }

}  // namespace clusdiff
