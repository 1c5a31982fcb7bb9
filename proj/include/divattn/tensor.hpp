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

#pragma once

#include <cstddef>
#include <initializer_list>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace divattn {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_to_string(const Shape& shape);

struct Shape2 {
  std::size_t rows;
  std::size_t cols;
};

struct Shape3 {
  std::size_t channels;
  std::size_t height;
  std::size_t width;
  std::size_t pixels() const { return height * width; }
};

/// Dense row-major array of doubles. Every dimension is >= 1 and
/// `shape_size(shape()) == data().size()`; a rank-0 tensor holds one value.
class Tensor {
 public:
  Tensor() : data_(1, 0.0) {}
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double value);
  static Tensor vector(std::vector<double> values);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor identity(std::size_t n);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const { return data_.size(); }

  Shape2 shape2() const;
  Shape3 shape3() const;

  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }
  const std::vector<double>& values() const { return data_; }

  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }

  double at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  double at(std::size_t c, std::size_t h, std::size_t w) const {
    return data_[(c * shape_[1] + h) * shape_[2] + w];
  }
  double& at(std::size_t c, std::size_t h, std::size_t w) {
    return data_[(c * shape_[1] + h) * shape_[2] + w];
  }

  /// Value of a single-element tensor.
  double item() const;

  /// Same data under a new shape with equal element count.
  Tensor reshaped(Shape shape) const&;
  Tensor reshaped(Shape shape) &&;

  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

// Core operations. All are pure; shape mismatches throw DimensionError and
// nothing broadcasts.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& m);
Tensor softmax_rows(const Tensor& m);

Tensor flatten_spatial(const Tensor& a);
Tensor unflatten_spatial(const Tensor& f, std::size_t height, std::size_t width);

/// C x H x W -> length-C vector, or N x C x H x W -> N x C.
Tensor global_avg_pool(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor relu(const Tensor& a);

/// Concatenate along the channel axis: axis 0 for rank-3 maps, axis 1 for
/// rank-4 batches, axis 0 for everything else.
Tensor concat_channels(std::span<const Tensor> parts);

double sum(const Tensor& a);
double frobenius_norm(const Tensor& a);
double max_abs_diff(const Tensor& a, const Tensor& b);
bool all_finite(const Tensor& a);

/// Batch element `index` of an N x ... tensor, with the leading axis dropped.
Tensor batch_item(const Tensor& batch, std::size_t index);
/// Inverse of batch_item over all elements: stack equal-shaped tensors.
Tensor stack(std::span<const Tensor> items);

// Flat binary form: u32 rank, u32 dims, then f64 payload, all little-endian.
void write_tensor(std::ostream& out, const Tensor& t);
Tensor read_tensor(std::istream& in);
std::size_t serialized_size(const Tensor& t);

namespace kernels {

// Row-major GEMM variants accumulating into c (c += op(a) * op(b)).
// nn: a is m x k, b is k x n.  nt: a is m x k, b is n x k.  tn: a is k x m, b is k x n.
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c);
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c);
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c);

/// Stride-1 convolution with square kernel and zero padding.
/// x: N x C x H x W, w: M x C x k x k -> N x M x H' x W'.
Tensor conv2d(const Tensor& x, const Tensor& w, std::size_t pad);
Tensor conv2d_grad_input(const Tensor& grad_out, const Tensor& w, const Shape& x_shape,
                         std::size_t pad);
Tensor conv2d_grad_weight(const Tensor& grad_out, const Tensor& x, const Shape& w_shape,
                          std::size_t pad);

/// 2x2 max pooling with stride 2 on N x C x H x W (H, W even). `argmax`
/// receives the flat input index chosen for each output element.
Tensor max_pool2x2(const Tensor& x, std::vector<std::size_t>* argmax);

}  // namespace kernels

}  // namespace divattn
