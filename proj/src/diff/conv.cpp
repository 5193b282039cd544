// Convolutions lowered to GEMM through im2col / col2im.

#include <memory>

#include "isap/diff/ops.hpp"
#include "isap/errors.hpp"
#include "isap/kernels.hpp"

namespace isap::diff {

namespace {

struct ConvGeometry {
  std::size_t channels, height, width;  // the "image" side
  std::size_t kernel, stride, pad;
  std::size_t out_h, out_w;             // the "patch grid" side
};

// col[(c*k + ki)*k + kj, oh*out_w + ow] = img[c, oh*s - p + ki, ow*s - p + kj]
void im2col(const double* img, const ConvGeometry& g, double* col) {
  const std::size_t k = g.kernel;
  const std::size_t cols = g.out_h * g.out_w;
  for (std::size_t c = 0; c < g.channels; ++c)
    for (std::size_t ki = 0; ki < k; ++ki)
      for (std::size_t kj = 0; kj < k; ++kj) {
        double* row = col + ((c * k + ki) * k + kj) * cols;
        for (std::size_t oh = 0; oh < g.out_h; ++oh) {
          const long ih = long(oh * g.stride + ki) - long(g.pad);
          for (std::size_t ow = 0; ow < g.out_w; ++ow) {
            const long iw = long(ow * g.stride + kj) - long(g.pad);
            const bool inside = ih >= 0 && iw >= 0 && ih < long(g.height) &&
                                iw < long(g.width);
            row[oh * g.out_w + ow] =
                inside ? img[(c * g.height + std::size_t(ih)) * g.width +
                             std::size_t(iw)]
                       : 0.0;
          }
        }
      }
}

// Adjoint of im2col: scatters-and-adds col entries into img.
void col2im(const double* col, const ConvGeometry& g, double* img) {
  const std::size_t k = g.kernel;
  const std::size_t cols = g.out_h * g.out_w;
  for (std::size_t c = 0; c < g.channels; ++c)
    for (std::size_t ki = 0; ki < k; ++ki)
      for (std::size_t kj = 0; kj < k; ++kj) {
        const double* row = col + ((c * k + ki) * k + kj) * cols;
        for (std::size_t oh = 0; oh < g.out_h; ++oh) {
          const long ih = long(oh * g.stride + ki) - long(g.pad);
          if (ih < 0 || ih >= long(g.height)) continue;
          for (std::size_t ow = 0; ow < g.out_w; ++ow) {
            const long iw = long(ow * g.stride + kj) - long(g.pad);
            if (iw < 0 || iw >= long(g.width)) continue;
            img[(c * g.height + std::size_t(ih)) * g.width + std::size_t(iw)] +=
                row[oh * g.out_w + ow];
          }
        }
      }
}

void check_rank4(const Tensor& t, const char* what) {
  if (t.rank() != 4)
    throw ShapeError(std::string(what) + " must be rank 4, got " +
                     to_string(t.shape()));
}

}  // namespace

Var conv2d(Var x, Var weight, Var bias, std::size_t stride, std::size_t pad) {
  const Tensor& vx = x.value();
  const Tensor& vw = weight.value();
  check_rank4(vx, "conv2d input");
  check_rank4(vw, "conv2d weight");
  const std::size_t n = vx.dim(0), c_in = vx.dim(1), h = vx.dim(2), w = vx.dim(3);
  const std::size_t c_out = vw.dim(0), k = vw.dim(2);
  if (vw.dim(1) != c_in || vw.dim(3) != k || bias.value().size() != c_out)
    throw ShapeError("conv2d: weight/bias shape mismatch");
  if (stride == 0 || h + 2 * pad < k || w + 2 * pad < k)
    throw ShapeError("conv2d: kernel larger than padded input");
  const ConvGeometry geo{c_in, h, w, k, stride, pad,
                         (h + 2 * pad - k) / stride + 1,
                         (w + 2 * pad - k) / stride + 1};
  const std::size_t patch = c_in * k * k;
  const std::size_t cols = geo.out_h * geo.out_w;

  auto col_cache = std::make_shared<std::vector<double>>(n * patch * cols);
  Tensor out(Shape{n, c_out, geo.out_h, geo.out_w});
  const Tensor& vb = bias.value();
  for (std::size_t b = 0; b < n; ++b) {
    double* col = col_cache->data() + b * patch * cols;
    im2col(vx.ptr() + b * c_in * h * w, geo, col);
    double* o = out.ptr() + b * c_out * cols;
    for (std::size_t co = 0; co < c_out; ++co)
      std::fill(o + co * cols, o + (co + 1) * cols, vb[co]);
    kernels::gemm(false, false, c_out, cols, patch, vw.ptr(), patch, col, cols,
                  o, cols, true);
  }
  return x.graph->record(
      "conv2d", std::move(out), {x, weight, bias},
      [geo, n, c_out, patch, cols, col_cache](const BackwardArgs& g) {
        const std::size_t in_size = geo.channels * geo.height * geo.width;
        std::vector<double> dcol(g.in_grads[0] ? patch * cols : 0);
        for (std::size_t b = 0; b < n; ++b) {
          const double* dout = g.out_grad.ptr() + b * c_out * cols;
          const double* col = col_cache->data() + b * patch * cols;
          if (Tensor* gw = g.in_grads[1])
            kernels::gemm(false, true, c_out, patch, cols, dout, cols, col, cols,
                          gw->ptr(), patch, true);
          if (Tensor* gb = g.in_grads[2])
            for (std::size_t co = 0; co < c_out; ++co) {
              double s = 0.0;
              for (std::size_t i = 0; i < cols; ++i) s += dout[co * cols + i];
              (*gb)[co] += s;
            }
          if (Tensor* gx = g.in_grads[0]) {
            kernels::gemm(true, false, patch, cols, c_out, g.in_values[1]->ptr(),
                          patch, dout, cols, dcol.data(), cols, false);
            col2im(dcol.data(), geo, gx->ptr() + b * in_size);
          }
        }
      });
}

Var conv_transpose2d(Var x, Var weight, Var bias, std::size_t stride,
                     std::size_t pad) {
  const Tensor& vx = x.value();
  const Tensor& vw = weight.value();
  check_rank4(vx, "conv_transpose2d input");
  check_rank4(vw, "conv_transpose2d weight");
  const std::size_t n = vx.dim(0), c_in = vx.dim(1), h = vx.dim(2), w = vx.dim(3);
  const std::size_t c_out = vw.dim(1), k = vw.dim(2);
  if (vw.dim(0) != c_in || vw.dim(3) != k || bias.value().size() != c_out)
    throw ShapeError("conv_transpose2d: weight/bias shape mismatch");
  if (stride == 0 || (h - 1) * stride + k <= 2 * pad)
    throw ShapeError("conv_transpose2d: empty output");
  const std::size_t out_h = (h - 1) * stride + k - 2 * pad;
  const std::size_t out_w = (w - 1) * stride + k - 2 * pad;
  // The output plays the role of the image, the input the patch grid.
  const ConvGeometry geo{c_out, out_h, out_w, k, stride, pad, h, w};
  const std::size_t patch = c_out * k * k;
  const std::size_t cols = h * w;
  const std::size_t out_size = c_out * out_h * out_w;

  Tensor out(Shape{n, c_out, out_h, out_w});
  std::vector<double> col(patch * cols);
  const Tensor& vb = bias.value();
  for (std::size_t b = 0; b < n; ++b) {
    kernels::gemm(true, false, patch, cols, c_in, vw.ptr(), patch,
                  vx.ptr() + b * c_in * cols, cols, col.data(), cols, false);
    double* o = out.ptr() + b * out_size;
    for (std::size_t co = 0; co < c_out; ++co)
      std::fill(o + co * out_h * out_w, o + (co + 1) * out_h * out_w, vb[co]);
    col2im(col.data(), geo, o);
  }
  return x.graph->record(
      "conv_transpose2d", std::move(out), {x, weight, bias},
      [geo, n, c_in, c_out, patch, cols, out_size](const BackwardArgs& g) {
        std::vector<double> dcol(patch * cols);
        for (std::size_t b = 0; b < n; ++b) {
          const double* dout = g.out_grad.ptr() + b * out_size;
          im2col(dout, geo, dcol.data());
          if (Tensor* gx = g.in_grads[0])
            kernels::gemm(false, false, c_in, cols, patch, g.in_values[1]->ptr(),
                          patch, dcol.data(), cols, gx->ptr() + b * c_in * cols,
                          cols, true);
          if (Tensor* gw = g.in_grads[1])
            kernels::gemm(false, true, c_in, patch, cols,
                          g.in_values[0]->ptr() + b * c_in * cols, cols,
                          dcol.data(), cols, gw->ptr(), patch, true);
          if (Tensor* gb = g.in_grads[2]) {
            const std::size_t plane = geo.height * geo.width;
            for (std::size_t co = 0; co < c_out; ++co) {
              double s = 0.0;
              for (std::size_t i = 0; i < plane; ++i) s += dout[co * plane + i];
              (*gb)[co] += s;
            }
          }
        }
      });
}

}  // namespace isap::diff
