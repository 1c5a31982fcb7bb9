// Copyright 2026 The divattn Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "divattn/tensor.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include <Eigen/Core>

#include "divattn/errors.hpp"

namespace divattn {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape " + shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
  }
}

void require_rank(const Tensor& a, std::size_t rank, const char* op) {
  if (a.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) +
                         ", got " + shape_to_string(a.shape()));
  }
}

template <typename F>
Tensor map(const Tensor& a, F f) {
  Tensor out(a.shape());
  auto src = a.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = f(src[i]);
  return out;
}

template <typename F>
Tensor zip(const Tensor& a, const Tensor& b, const char* op, F f) {
  require_same_shape(a, b, op);
  Tensor out(a.shape());
  auto x = a.data();
  auto y = b.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < x.size(); ++i) dst[i] = f(x[i], y[i]);
  return out;
}

}  // namespace

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  for (auto d : shape_) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive");
  }
  data_.assign(shape_size(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  for (auto d : shape_) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive");
  }
  if (shape_size(shape_) != data_.size()) {
    throw DimensionError("shape " + shape_to_string(shape_) + " does not hold " +
                         std::to_string(data_.size()) + " values");
  }
}

Tensor Tensor::scalar(double value) { return Tensor({}, std::vector<double>{value}); }

Tensor Tensor::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("ragged matrix literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(data));
}

Tensor Tensor::identity(std::size_t n) {
  Tensor out({n, n});
  for (std::size_t i = 0; i < n; ++i) out.at(i, i) = 1.0;
  return out;
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) throw DimensionError("axis out of range");
  return shape_[axis];
}

Shape2 Tensor::shape2() const {
  require_rank(*this, 2, "shape2");
  return {shape_[0], shape_[1]};
}

Shape3 Tensor::shape3() const {
  require_rank(*this, 3, "shape3");
  return {shape_[0], shape_[1], shape_[2]};
}

double Tensor::item() const {
  if (data_.size() != 1) throw DimensionError("item() on tensor " + shape_to_string(shape_));
  return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const& {
  Tensor copy = *this;
  return std::move(copy).reshaped(std::move(shape));
}

Tensor Tensor::reshaped(Shape shape) && {
  if (shape_size(shape) != data_.size()) {
    throw DimensionError("cannot reshape " + shape_to_string(shape_) + " to " +
                         shape_to_string(shape));
  }
  return Tensor(std::move(shape), std::move(data_));
}

// ---------------------------------------------------------------------------

namespace kernels {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;
using MutMap = Eigen::Map<RowMajor>;

}  // namespace

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c) {
  const auto M = static_cast<Eigen::Index>(m), N = static_cast<Eigen::Index>(n),
             K = static_cast<Eigen::Index>(k);
  MutMap(c, M, N).noalias() += ConstMap(a, M, K) * ConstMap(b, K, N);
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c) {
  const auto M = static_cast<Eigen::Index>(m), N = static_cast<Eigen::Index>(n),
             K = static_cast<Eigen::Index>(k);
  MutMap(c, M, N).noalias() += ConstMap(a, M, K) * ConstMap(b, N, K).transpose();
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c) {
  const auto M = static_cast<Eigen::Index>(m), N = static_cast<Eigen::Index>(n),
             K = static_cast<Eigen::Index>(k);
  MutMap(c, M, N).noalias() += ConstMap(a, K, M).transpose() * ConstMap(b, K, N);
}

namespace {

struct ConvGeometry {
  std::size_t n, c, h, w, m, k, pad, oh, ow;
};

ConvGeometry conv_geometry(const Shape& x, const Shape& wt, std::size_t pad) {
  if (x.size() != 4 || wt.size() != 4) throw DimensionError("conv2d expects rank-4 operands");
  if (x[1] != wt[1]) {
    throw DimensionError("conv2d: input channels " + std::to_string(x[1]) +
                         " vs weight channels " + std::to_string(wt[1]));
  }
  if (wt[2] != wt[3]) throw DimensionError("conv2d: kernel must be square");
  const std::size_t k = wt[2];
  if (x[2] + 2 * pad < k || x[3] + 2 * pad < k) throw DimensionError("conv2d: kernel too large");
  return {x[0], x[1], x[2], x[3], wt[0], k, pad, x[2] + 2 * pad - k + 1, x[3] + 2 * pad - k + 1};
}

// cols: (C*k*k) x (OH*OW) for one image.
void im2col(const ConvGeometry& g, const double* img, double* cols) {
  const std::size_t npix = g.oh * g.ow;
  for (std::size_t ch = 0; ch < g.c; ++ch) {
    for (std::size_t ki = 0; ki < g.k; ++ki) {
      for (std::size_t kj = 0; kj < g.k; ++kj) {
        double* row = cols + ((ch * g.k + ki) * g.k + kj) * npix;
        for (std::size_t y = 0; y < g.oh; ++y) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y + ki) -
                                    static_cast<std::ptrdiff_t>(g.pad);
          for (std::size_t x = 0; x < g.ow; ++x) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x + kj) -
                                      static_cast<std::ptrdiff_t>(g.pad);
            const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<std::ptrdiff_t>(g.h) &&
                                ix < static_cast<std::ptrdiff_t>(g.w);
            row[y * g.ow + x] = inside ? img[(ch * g.h + iy) * g.w + ix] : 0.0;
          }
        }
      }
    }
  }
}

void col2im(const ConvGeometry& g, const double* cols, double* img) {
  const std::size_t npix = g.oh * g.ow;
  for (std::size_t ch = 0; ch < g.c; ++ch) {
    for (std::size_t ki = 0; ki < g.k; ++ki) {
      for (std::size_t kj = 0; kj < g.k; ++kj) {
        const double* row = cols + ((ch * g.k + ki) * g.k + kj) * npix;
        for (std::size_t y = 0; y < g.oh; ++y) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y + ki) -
                                    static_cast<std::ptrdiff_t>(g.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
          for (std::size_t x = 0; x < g.ow; ++x) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x + kj) -
                                      static_cast<std::ptrdiff_t>(g.pad);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) continue;
            img[(ch * g.h + iy) * g.w + ix] += row[y * g.ow + x];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, std::size_t pad) {
  const auto g = conv_geometry(x.shape(), w.shape(), pad);
  Tensor out({g.n, g.m, g.oh, g.ow});
  const std::size_t ck = g.c * g.k * g.k;
  const std::size_t npix = g.oh * g.ow;
  std::vector<double> cols(ck * npix);
  for (std::size_t b = 0; b < g.n; ++b) {
    const double* img = x.data().data() + b * g.c * g.h * g.w;
    const double* src = img;
    if (g.k == 1 && g.pad == 0) {
      // 1x1 convolution reads the image directly as its column matrix.
    } else {
      im2col(g, img, cols.data());
      src = cols.data();
    }
    gemm_nn(g.m, npix, ck, w.data().data(), src, out.data().data() + b * g.m * npix);
  }
  return out;
}

Tensor conv2d_grad_input(const Tensor& grad_out, const Tensor& w, const Shape& x_shape,
                         std::size_t pad) {
  const auto g = conv_geometry(x_shape, w.shape(), pad);
  Tensor grad(x_shape);
  const std::size_t ck = g.c * g.k * g.k;
  const std::size_t npix = g.oh * g.ow;
  std::vector<double> cols(ck * npix);
  for (std::size_t b = 0; b < g.n; ++b) {
    const double* go = grad_out.data().data() + b * g.m * npix;
    double* gi = grad.data().data() + b * g.c * g.h * g.w;
    if (g.k == 1 && g.pad == 0) {
      gemm_tn(ck, npix, g.m, w.data().data(), go, gi);
    } else {
      std::fill(cols.begin(), cols.end(), 0.0);
      gemm_tn(ck, npix, g.m, w.data().data(), go, cols.data());
      col2im(g, cols.data(), gi);
    }
  }
  return grad;
}

Tensor conv2d_grad_weight(const Tensor& grad_out, const Tensor& x, const Shape& w_shape,
                          std::size_t pad) {
  const auto g = conv_geometry(x.shape(), w_shape, pad);
  Tensor grad(w_shape);
  const std::size_t ck = g.c * g.k * g.k;
  const std::size_t npix = g.oh * g.ow;
  std::vector<double> cols(ck * npix);
  for (std::size_t b = 0; b < g.n; ++b) {
    const double* img = x.data().data() + b * g.c * g.h * g.w;
    const double* src = img;
    if (!(g.k == 1 && g.pad == 0)) {
      im2col(g, img, cols.data());
      src = cols.data();
    }
    gemm_nt(g.m, ck, npix, grad_out.data().data() + b * g.m * npix, src, grad.data().data());
  }
  return grad;
}

Tensor max_pool2x2(const Tensor& x, std::vector<std::size_t>* argmax) {
  if (x.rank() != 4) throw DimensionError("max_pool2x2 expects rank-4 input");
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h < 2 || w < 2) throw DimensionError("max_pool2x2: spatial dims must be >= 2");
  const std::size_t oh = h / 2, ow = w / 2;
  Tensor out({n, c, oh, ow});
  if (argmax) argmax->assign(out.size(), 0);
  std::size_t o = 0;
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const std::size_t base = plane * h * w;
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t xx = 0; xx < ow; ++xx, ++o) {
        std::size_t best = base + (2 * y) * w + 2 * xx;
        for (std::size_t dy = 0; dy < 2; ++dy) {
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t idx = base + (2 * y + dy) * w + 2 * xx + dx;
            if (x[idx] > x[best]) best = idx;
          }
        }
        out[o] = x[best];
        if (argmax) (*argmax)[o] = best;
      }
    }
  }
  return out;
}

}  // namespace kernels

// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  if (a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: " + shape_to_string(a.shape()) + " x " +
                         shape_to_string(b.shape()));
  }
  Tensor out({a.dim(0), b.dim(1)});
  kernels::gemm_nn(a.dim(0), b.dim(1), a.dim(1), a.data().data(), b.data().data(),
                   out.data().data());
  return out;
}

Tensor transpose(const Tensor& m) {
  require_rank(m, 2, "transpose");
  const auto [r, c] = m.shape2();
  Tensor out({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out.at(j, i) = m.at(i, j);
  return out;
}

Tensor softmax_rows(const Tensor& m) {
  require_rank(m, 2, "softmax_rows");
  const auto [r, c] = m.shape2();
  Tensor out({r, c});
  for (std::size_t i = 0; i < r; ++i) {
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c; ++j) hi = std::max(hi, m.at(i, j));
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      const double e = std::exp(m.at(i, j) - hi);
      out.at(i, j) = e;
      z += e;
    }
    for (std::size_t j = 0; j < c; ++j) out.at(i, j) /= z;
  }
  return out;
}

Tensor flatten_spatial(const Tensor& a) {
  require_rank(a, 3, "flatten_spatial");
  const auto s = a.shape3();
  return a.reshaped({s.channels, s.pixels()});
}

Tensor unflatten_spatial(const Tensor& f, std::size_t height, std::size_t width) {
  require_rank(f, 2, "unflatten_spatial");
  if (f.dim(1) != height * width) {
    throw DimensionError("unflatten_spatial: " + std::to_string(f.dim(1)) + " columns vs " +
                         std::to_string(height) + "x" + std::to_string(width));
  }
  return f.reshaped({f.dim(0), height, width});
}

Tensor global_avg_pool(const Tensor& a) {
  if (a.rank() == 3) {
    const auto s = a.shape3();
    Tensor out({s.channels});
    const std::size_t n = s.pixels();
    for (std::size_t c = 0; c < s.channels; ++c) {
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) acc += a[c * n + i];
      out[c] = acc / static_cast<double>(n);
    }
    return out;
  }
  if (a.rank() == 4) {
    const std::size_t b = a.dim(0), c = a.dim(1), n = a.dim(2) * a.dim(3);
    Tensor out({b, c});
    for (std::size_t p = 0; p < b * c; ++p) {
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) acc += a[p * n + i];
      out[p] = acc / static_cast<double>(n);
    }
    return out;
  }
  throw DimensionError("global_avg_pool expects rank 3 or 4, got " + shape_to_string(a.shape()));
}

Tensor add(const Tensor& a, const Tensor& b) {
  return zip(a, b, "add", [](double x, double y) { return x + y; });
}
Tensor sub(const Tensor& a, const Tensor& b) {
  return zip(a, b, "sub", [](double x, double y) { return x - y; });
}
Tensor mul(const Tensor& a, const Tensor& b) {
  return zip(a, b, "mul", [](double x, double y) { return x * y; });
}
Tensor scale(const Tensor& a, double s) {
  return map(a, [s](double x) { return x * s; });
}
Tensor relu(const Tensor& a) {
  return map(a, [](double x) { return x > 0.0 ? x : 0.0; });
}

Tensor concat_channels(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_channels: no inputs");
  const std::size_t axis = parts[0].rank() == 4 ? 1 : 0;
  const Shape& ref = parts[0].shape();
  if (ref.empty()) throw DimensionError("concat_channels: scalar input");
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.rank() != ref.size()) throw DimensionError("concat_channels: rank mismatch");
    for (std::size_t d = 0; d < ref.size(); ++d) {
      if (d != axis && p.dim(d) != ref[d]) throw DimensionError("concat_channels: shape mismatch");
    }
    total += p.dim(axis);
  }
  Shape shape = ref;
  shape[axis] = total;
  Tensor out(shape);
  std::size_t outer = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= ref[d];
  std::size_t inner = 1;
  for (std::size_t d = axis + 1; d < ref.size(); ++d) inner *= ref[d];
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t chunk = p.dim(axis) * inner;
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(p.data().begin() + o * chunk, chunk,
                  out.data().begin() + o * total * inner + offset);
    }
    offset += chunk;
  }
  return out;
}

double sum(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  return acc;
}

double frobenius_norm(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.data()) acc += v * v;
  return std::sqrt(acc);
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "max_abs_diff");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

bool all_finite(const Tensor& a) {
  return std::all_of(a.data().begin(), a.data().end(), [](double v) { return std::isfinite(v); });
}

Tensor batch_item(const Tensor& batch, std::size_t index) {
  if (batch.rank() < 1 || index >= batch.dim(0)) throw DimensionError("batch_item out of range");
  Shape shape(batch.shape().begin() + 1, batch.shape().end());
  const std::size_t n = shape_size(shape);
  std::vector<double> data(batch.data().begin() + index * n, batch.data().begin() + (index + 1) * n);
  return Tensor(std::move(shape), std::move(data));
}

Tensor stack(std::span<const Tensor> items) {
  if (items.empty()) throw DimensionError("stack: no inputs");
  Shape shape = items[0].shape();
  std::vector<double> data;
  data.reserve(items.size() * items[0].size());
  for (const auto& t : items) {
    if (t.shape() != shape) throw DimensionError("stack: shape mismatch");
    data.insert(data.end(), t.data().begin(), t.data().end());
  }
  shape.insert(shape.begin(), items.size());
  return Tensor(std::move(shape), std::move(data));
}

// ---------------------------------------------------------------------------

namespace {

template <typename T>
void put_le(std::ostream& out, T value) {
  std::array<char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  out.write(bytes.data(), bytes.size());
}

template <typename T>
T get_le(std::istream& in) {
  std::array<char, sizeof(T)> bytes;
  if (!in.read(bytes.data(), bytes.size())) throw std::runtime_error("truncated tensor stream");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  T value;
  std::memcpy(&value, bytes.data(), sizeof(T));
  return value;
}

}  // namespace

void write_tensor(std::ostream& out, const Tensor& t) {
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) put_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
  for (double v : t.data()) put_le<double>(out, v);
}

Tensor read_tensor(std::istream& in) {
  const auto rank = get_le<std::uint32_t>(in);
  if (rank > 16) throw std::runtime_error("implausible tensor rank " + std::to_string(rank));
  Shape shape(rank);
  for (auto& d : shape) d = get_le<std::uint32_t>(in);
  std::vector<double> data(shape_size(shape));
  for (auto& v : data) v = get_le<double>(in);
  return Tensor(std::move(shape), std::move(data));
}

std::size_t serialized_size(const Tensor& t) {
  return sizeof(std::uint32_t) * (1 + t.rank()) + sizeof(double) * t.size();
}

}  // namespace divattn
