#pragma once

#include <cstddef>

// Raw numeric kernels behind the differentiable ops. Production versions are
// OpenMP-parallel over independent output slices; every per-element sum runs
// in a fixed serial order, so results are bitwise identical for any thread
// count. The *_serial variants are naive reference implementations used by
// the tests and the benchmark tool.
namespace gaclab::kernels {

struct Conv2dDims {
  int ic, ih, iw;      // input channels, height, width
  int kc, kh, kw;      // filter count and kernel size
  int stride, pad;
  int oh, ow;          // derived output size

  std::size_t in_size() const { return std::size_t(ic) * ih * iw; }
  std::size_t kernel_size() const { return std::size_t(kc) * ic * kh * kw; }
  std::size_t out_size() const { return std::size_t(kc) * oh * ow; }
};

// Validates the geometry and derives oh/ow. Throws std::invalid_argument.
Conv2dDims conv2d_dims(int ic, int ih, int iw, int kc, int kkc, int kh, int kw, int stride, int pad);

// out[oc,oy,ox] = sum_{c,ky,kx} in[c, oy*s+ky-pad, ox*s+kx-pad] * k[oc,c,ky,kx]
void conv2d_forward(const double* in, const double* kern, double* out, const Conv2dDims& d);
void conv2d_backward_input(const double* gout, const double* kern, double* gin, const Conv2dDims& d);
void conv2d_backward_kernel(const double* gout, const double* in, double* gkern, const Conv2dDims& d);

void conv2d_forward_serial(const double* in, const double* kern, double* out, const Conv2dDims& d);
void conv2d_backward_input_serial(const double* gout, const double* kern, double* gin, const Conv2dDims& d);
void conv2d_backward_kernel_serial(const double* gout, const double* in, double* gkern, const Conv2dDims& d);

// y = W x (+ b); W is m x n row-major.
void affine_forward(const double* x, const double* w, const double* b, double* y, int m, int n);
void affine_backward_input(const double* gy, const double* w, double* gx, int m, int n);
void affine_backward_weight(const double* gy, const double* x, double* gw, int m, int n);

}  // namespace gaclab::kernels
