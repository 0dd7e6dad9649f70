#include "kernels.hpp"

#include <cstring>

namespace clusdiff {

void mm(const double* A, const double* B, double* C, int m, int k, int n, bool acc) {
  if (!acc) std::memset(C, 0, sizeof(double) * size_t(m) * size_t(n));
  for (int i = 0; i < m; ++i) {
    const double* a = A + size_t(i) * k;
    double* c = C + size_t(i) * n;
    for (int p = 0; p < k; ++p) {
      double av = a[p];
      if (av == 0.0) continue;
      const double* b = B + size_t(p) * n;
      for (int j = 0; j < n; ++j) c[j] += av * b[j];
    }
  }
}

void mm_abT(const double* A, const double* B, double* C, int m, int k, int n, bool acc) {
  for (int i = 0; i < m; ++i) {
    const double* a = A + size_t(i) * k;
    double* c = C + size_t(i) * n;
    for (int j = 0; j < n; ++j) {
      const double* b = B + size_t(j) * k;
      double s = 0.0;
      for (int p = 0; p < k; ++p) s += a[p] * b[p];
      c[j] = acc ? c[j] + s : s;
    }
  }
}

void mm_aTb(const double* A, const double* B, double* C, int m, int k, int n, bool acc) {
  if (!acc) std::memset(C, 0, sizeof(double) * size_t(m) * size_t(n));
  for (int p = 0; p < k; ++p) {
    const double* a = A + size_t(p) * m;
    const double* b = B + size_t(p) * n;
    for (int i = 0; i < m; ++i) {
      double av = a[i];
      if (av == 0.0) continue;
      double* c = C + size_t(i) * n;
      for (int j = 0; j < n; ++j) c[j] += av * b[j];
    }
  }
}

void im2col3x3(const double* x, int cin, int h, int w, int stride, double* cols) {
  int oh = conv_out_extent(h, stride);
  int ow = conv_out_extent(w, stride);
  int ohw = oh * ow;
  for (int c = 0; c < cin; ++c) {
    const double* xc = x + size_t(c) * h * w;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        double* row = cols + size_t((c * 9 + ky * 3 + kx)) * ohw;
        for (int oy = 0; oy < oh; ++oy) {
          int iy = oy * stride + ky - 1;
          double* out = row + size_t(oy) * ow;
          if (iy < 0 || iy >= h) {
            std::memset(out, 0, sizeof(double) * size_t(ow));
            continue;
          }
          const double* in = xc + size_t(iy) * w;
          for (int ox = 0; ox < ow; ++ox) {
            int ix = ox * stride + kx - 1;
            out[ox] = (ix >= 0 && ix < w) ? in[ix] : 0.0;
          }
        }
      }
    }
  }
}

void col2im3x3(const double* cols, int cin, int h, int w, int stride, double* dx) {
  int oh = conv_out_extent(h, stride);
  int ow = conv_out_extent(w, stride);
  int ohw = oh * ow;
  for (int c = 0; c < cin; ++c) {
    double* xc = dx + size_t(c) * h * w;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const double* row = cols + size_t((c * 9 + ky * 3 + kx)) * ohw;
        for (int oy = 0; oy < oh; ++oy) {
          int iy = oy * stride + ky - 1;
          if (iy < 0 || iy >= h) continue;
          const double* in = row + size_t(oy) * ow;
          double* out = xc + size_t(iy) * w;
          for (int ox = 0; ox < ow; ++ox) {
            int ix = ox * stride + kx - 1;
            if (ix >= 0 && ix < w) out[ix] += in[ox];
          }
        }
      }
    }
  }
}

}  // namespace clusdiff
