#include "gaclab/kernels.hpp"

#include <stdexcept>
#include <string>
#include <vector>

namespace gaclab::kernels {

namespace {

// Parallel regions only pay off above this many multiply-adds per call.
constexpr std::size_t kParallelGrain = 1 << 14;

std::vector<double> pad_input(const double* in, const Conv2dDims& d) {
  const int ph = d.ih + 2 * d.pad;
  const int pw = d.iw + 2 * d.pad;
  std::vector<double> padded(std::size_t(d.ic) * ph * pw, 0.0);
  for (int c = 0; c < d.ic; ++c) {
    for (int y = 0; y < d.ih; ++y) {
      const double* src = in + (std::size_t(c) * d.ih + y) * d.iw;
      double* dst = padded.data() + (std::size_t(c) * ph + y + d.pad) * pw + d.pad;
      for (int x = 0; x < d.iw; ++x) dst[x] = src[x];
    }
  }
  return padded;
}

}  // namespace

Conv2dDims conv2d_dims(int ic, int ih, int iw, int kc, int kkc, int kh, int kw, int stride, int pad) {
  if (ic != kkc) {
    throw std::invalid_argument("conv2d: input has " + std::to_string(ic) + " channels but kernel expects " +
                                std::to_string(kkc));
  }
  if (stride < 1) throw std::invalid_argument("conv2d: stride must be >= 1");
  if (pad < 0) throw std::invalid_argument("conv2d: pad must be >= 0");
  if (kh > ih + 2 * pad || kw > iw + 2 * pad) {
    throw std::invalid_argument("conv2d: kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
                                " exceeds padded input " + std::to_string(ih + 2 * pad) + "x" +
                                std::to_string(iw + 2 * pad));
  }
  Conv2dDims d;
  d.ic = ic;
  d.ih = ih;
  d.iw = iw;
  d.kc = kc;
  d.kh = kh;
  d.kw = kw;
  d.stride = stride;
  d.pad = pad;
  d.oh = (ih + 2 * pad - kh) / stride + 1;
  d.ow = (iw + 2 * pad - kw) / stride + 1;
  return d;
}

void conv2d_forward(const double* in, const double* kern, double* out, const Conv2dDims& d) {
  const std::vector<double> padded = pad_input(in, d);
  const int pw = d.iw + 2 * d.pad;
  const int ph = d.ih + 2 * d.pad;
  const double* ip = padded.data();
  const bool par = d.out_size() * std::size_t(d.ic) * d.kh * d.kw > kParallelGrain;

#pragma omp parallel for schedule(static) if (par)
  for (int oc = 0; oc < d.kc; ++oc) {
    const double* kbase = kern + std::size_t(oc) * d.ic * d.kh * d.kw;
    double* obase = out + std::size_t(oc) * d.oh * d.ow;
    for (int oy = 0; oy < d.oh; ++oy) {
      for (int ox = 0; ox < d.ow; ++ox) {
        double acc = 0.0;
        for (int c = 0; c < d.ic; ++c) {
          const double* irow = ip + (std::size_t(c) * ph + oy * d.stride) * pw + ox * d.stride;
          const double* krow = kbase + std::size_t(c) * d.kh * d.kw;
          for (int ky = 0; ky < d.kh; ++ky) {
            const double* ir = irow + std::size_t(ky) * pw;
            const double* kr = krow + std::size_t(ky) * d.kw;
            for (int kx = 0; kx < d.kw; ++kx) acc += ir[kx] * kr[kx];
          }
        }
        obase[std::size_t(oy) * d.ow + ox] = acc;
      }
    }
  }
}

void conv2d_backward_input(const double* gout, const double* kern, double* gin, const Conv2dDims& d) {
  const int ph = d.ih + 2 * d.pad;
  const int pw = d.iw + 2 * d.pad;
  std::vector<double> gpadded(std::size_t(d.ic) * ph * pw, 0.0);
  double* gp = gpadded.data();
  const bool par = d.out_size() * std::size_t(d.ic) * d.kh * d.kw > kParallelGrain;

#pragma omp parallel for schedule(static) if (par)
  for (int c = 0; c < d.ic; ++c) {
    double* gc = gp + std::size_t(c) * ph * pw;
    for (int oc = 0; oc < d.kc; ++oc) {
      const double* gobase = gout + std::size_t(oc) * d.oh * d.ow;
      const double* kbase = kern + (std::size_t(oc) * d.ic + c) * d.kh * d.kw;
      for (int oy = 0; oy < d.oh; ++oy) {
        for (int ox = 0; ox < d.ow; ++ox) {
          const double g = gobase[std::size_t(oy) * d.ow + ox];
          double* grow = gc + (std::size_t(oy) * d.stride) * pw + ox * d.stride;
          for (int ky = 0; ky < d.kh; ++ky) {
            double* gr = grow + std::size_t(ky) * pw;
            const double* kr = kbase + std::size_t(ky) * d.kw;
            for (int kx = 0; kx < d.kw; ++kx) gr[kx] += g * kr[kx];
          }
        }
      }
    }
  }

  for (int c = 0; c < d.ic; ++c) {
    for (int y = 0; y < d.ih; ++y) {
      const double* src = gp + (std::size_t(c) * ph + y + d.pad) * pw + d.pad;
      double* dst = gin + (std::size_t(c) * d.ih + y) * d.iw;
      for (int x = 0; x < d.iw; ++x) dst[x] += src[x];
    }
  }
}

void conv2d_backward_kernel(const double* gout, const double* in, double* gkern, const Conv2dDims& d) {
  const std::vector<double> padded = pad_input(in, d);
  const int ph = d.ih + 2 * d.pad;
  const int pw = d.iw + 2 * d.pad;
  const double* ip = padded.data();
  const bool par = d.out_size() * std::size_t(d.ic) * d.kh * d.kw > kParallelGrain;

#pragma omp parallel for schedule(static) if (par)
  for (int oc = 0; oc < d.kc; ++oc) {
    const double* gobase = gout + std::size_t(oc) * d.oh * d.ow;
    double* gkbase = gkern + std::size_t(oc) * d.ic * d.kh * d.kw;
    for (int c = 0; c < d.ic; ++c) {
      const double* ic_base = ip + std::size_t(c) * ph * pw;
      double* gkc = gkbase + std::size_t(c) * d.kh * d.kw;
      for (int ky = 0; ky < d.kh; ++ky) {
        for (int kx = 0; kx < d.kw; ++kx) {
          double acc = 0.0;
          for (int oy = 0; oy < d.oh; ++oy) {
            const double* ir = ic_base + (std::size_t(oy) * d.stride + ky) * pw + kx;
            const double* gr = gobase + std::size_t(oy) * d.ow;
            for (int ox = 0; ox < d.ow; ++ox) acc += gr[ox] * ir[std::size_t(ox) * d.stride];
          }
          gkc[std::size_t(ky) * d.kw + kx] += acc;
        }
      }
    }
  }
}

void conv2d_forward_serial(const double* in, const double* kern, double* out, const Conv2dDims& d) {
  for (int oc = 0; oc < d.kc; ++oc) {
    for (int oy = 0; oy < d.oh; ++oy) {
      for (int ox = 0; ox < d.ow; ++ox) {
        double acc = 0.0;
        for (int c = 0; c < d.ic; ++c) {
          for (int ky = 0; ky < d.kh; ++ky) {
            for (int kx = 0; kx < d.kw; ++kx) {
              const int iy = oy * d.stride + ky - d.pad;
              const int ix = ox * d.stride + kx - d.pad;
              if (iy < 0 || iy >= d.ih || ix < 0 || ix >= d.iw) continue;
              acc += in[(std::size_t(c) * d.ih + iy) * d.iw + ix] *
                     kern[((std::size_t(oc) * d.ic + c) * d.kh + ky) * d.kw + kx];
            }
          }
        }
        out[(std::size_t(oc) * d.oh + oy) * d.ow + ox] = acc;
      }
    }
  }
}

void conv2d_backward_input_serial(const double* gout, const double* kern, double* gin, const Conv2dDims& d) {
  for (int oc = 0; oc < d.kc; ++oc) {
    for (int oy = 0; oy < d.oh; ++oy) {
      for (int ox = 0; ox < d.ow; ++ox) {
        const double g = gout[(std::size_t(oc) * d.oh + oy) * d.ow + ox];
        for (int c = 0; c < d.ic; ++c) {
          for (int ky = 0; ky < d.kh; ++ky) {
            for (int kx = 0; kx < d.kw; ++kx) {
              const int iy = oy * d.stride + ky - d.pad;
              const int ix = ox * d.stride + kx - d.pad;
              if (iy < 0 || iy >= d.ih || ix < 0 || ix >= d.iw) continue;
              gin[(std::size_t(c) * d.ih + iy) * d.iw + ix] +=
                  g * kern[((std::size_t(oc) * d.ic + c) * d.kh + ky) * d.kw + kx];
            }
          }
        }
      }
    }
  }
}

void conv2d_backward_kernel_serial(const double* gout, const double* in, double* gkern, const Conv2dDims& d) {
  for (int oc = 0; oc < d.kc; ++oc) {
    for (int oy = 0; oy < d.oh; ++oy) {
      for (int ox = 0; ox < d.ow; ++ox) {
        const double g = gout[(std::size_t(oc) * d.oh + oy) * d.ow + ox];
        for (int c = 0; c < d.ic; ++c) {
          for (int ky = 0; ky < d.kh; ++ky) {
            for (int kx = 0; kx < d.kw; ++kx) {
              const int iy = oy * d.stride + ky - d.pad;
              const int ix = ox * d.stride + kx - d.pad;
              if (iy < 0 || iy >= d.ih || ix < 0 || ix >= d.iw) continue;
              gkern[((std::size_t(oc) * d.ic + c) * d.kh + ky) * d.kw + kx] +=
                  g * in[(std::size_t(c) * d.ih + iy) * d.iw + ix];
            }
          }
        }
      }
    }
  }
}

void affine_forward(const double* x, const double* w, const double* b, double* y, int m, int n) {
  const bool par = std::size_t(m) * n > kParallelGrain;
#pragma omp parallel for schedule(static) if (par)
  for (int i = 0; i < m; ++i) {
    const double* wr = w + std::size_t(i) * n;
    double acc = b ? b[i] : 0.0;
    for (int j = 0; j < n; ++j) acc += wr[j] * x[j];
    y[i] = acc;
  }
}

void affine_backward_input(const double* gy, const double* w, double* gx, int m, int n) {
  const bool par = std::size_t(m) * n > kParallelGrain;
#pragma omp parallel for schedule(static) if (par)
  for (int j = 0; j < n; ++j) {
    double acc = 0.0;
    for (int i = 0; i < m; ++i) acc += gy[i] * w[std::size_t(i) * n + j];
    gx[j] += acc;
  }
}

void affine_backward_weight(const double* gy, const double* x, double* gw, int m, int n) {
  const bool par = std::size_t(m) * n > kParallelGrain;
#pragma omp parallel for schedule(static) if (par)
  for (int i = 0; i < m; ++i) {
    double* gr = gw + std::size_t(i) * n;
    const double g = gy[i];
    for (int j = 0; j < n; ++j) gr[j] += g * x[j];
  }
}

}  // namespace gaclab::kernels
