#include "nmt/ops.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

#include "nmt/kernels.hpp"

namespace nmt::ops {

namespace {

const kernels::Kernels& K() { return kernels::active(); }

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
  throw std::invalid_argument(std::string(op) + ": incompatible shapes " + a.shape_str() +
                              " and " + b.shape_str());
}

[[noreturn]] void shape_error(const char* op, const Tensor& a) {
  throw std::invalid_argument(std::string(op) + ": invalid shape " + a.shape_str());
}

// rows x cols view of a tensor reduced over its last axis
struct RowView {
  std::size_t rows;
  std::size_t cols;
};

RowView last_axis_view(const Tensor& t, const char* op) {
  if (t.rank() == 0 || t.size() == 0) shape_error(op, t);
  std::size_t cols = t.shape().back();
  return {t.size() / cols, cols};
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) shape_error("matmul", a, b);
  Tensor c({a.dim(0), b.dim(1)});
  K().matmul(a.data(), b.data(), c.data(), a.dim(0), a.dim(1), b.dim(1));
  return c;
}

void matmul_backward(const Tensor& a, const Tensor& b, const Tensor& g,
                     Tensor* grad_a, Tensor* grad_b) {
  if (g.rank() != 2 || g.dim(0) != a.dim(0) || g.dim(1) != b.dim(1)) {
    shape_error("matmul_backward", a, g);
  }
  if (grad_a) {
    // dA = G * B^T
    Tensor bt = transpose(b);
    *grad_a = Tensor({a.dim(0), a.dim(1)});
    K().matmul(g.data(), bt.data(), grad_a->data(), g.dim(0), g.dim(1), bt.dim(1));
  }
  if (grad_b) {
    // dB = A^T * G
    Tensor at = transpose(a);
    *grad_b = Tensor({b.dim(0), b.dim(1)});
    K().matmul(at.data(), g.data(), grad_b->data(), at.dim(0), at.dim(1), g.dim(1));
  }
}

Tensor add(const Tensor& a, const Tensor& b) {
  Tensor out(a.shape());
  if (a.same_shape(b)) {
    K().add(a.data(), b.data(), out.data(), a.size());
    return out;
  }
  if (b.rank() == 1 && a.rank() >= 1 && a.shape().back() == b.dim(0)) {
    const std::size_t cols = b.dim(0);
    const std::size_t rows = a.size() / cols;
    for (std::size_t r = 0; r < rows; ++r) {
      K().add(a.data() + r * cols, b.data(), out.data() + r * cols, cols);
    }
    return out;
  }
  shape_error("add", a, b);
}

void add_backward(const Tensor& a, const Tensor& b, const Tensor& g,
                  Tensor* grad_a, Tensor* grad_b) {
  if (!g.same_shape(a)) shape_error("add_backward", a, g);
  if (grad_a) *grad_a = g;
  if (grad_b) {
    if (a.same_shape(b)) {
      *grad_b = g;
    } else if (b.rank() == 1 && a.shape().back() == b.dim(0)) {
      const std::size_t cols = b.dim(0);
      const std::size_t rows = a.size() / cols;
      *grad_b = Tensor({cols});
      for (std::size_t r = 0; r < rows; ++r) {
        K().axpy(1.0, g.data() + r * cols, grad_b->data(), cols);
      }
    } else {
      shape_error("add_backward", a, b);
    }
  }
}

Tensor scale(const Tensor& a, double s) {
  Tensor out(a.shape());
  K().scale(a.data(), s, out.data(), a.size());
  return out;
}

Tensor relu(const Tensor& a) {
  Tensor out(a.shape());
  K().relu(a.data(), out.data(), a.size());
  return out;
}

Tensor relu_backward(const Tensor& a, const Tensor& g) {
  if (!a.same_shape(g)) shape_error("relu_backward", a, g);
  Tensor out(a.shape());
  K().relu_grad(a.data(), g.data(), out.data(), a.size());
  return out;
}

Tensor softmax(const Tensor& a) {
  auto [rows, cols] = last_axis_view(a, "softmax");
  Tensor out(a.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = a.data() + r * cols;
    double* y = out.data() + r * cols;
    const double m = K().max(x, cols);
    for (std::size_t j = 0; j < cols; ++j) y[j] = std::exp(x[j] - m);
    const double z = K().sum(y, cols);
    K().scale(y, 1.0 / z, y, cols);
  }
  return out;
}

Tensor softmax_backward(const Tensor& y, const Tensor& g) {
  if (!y.same_shape(g)) shape_error("softmax_backward", y, g);
  auto [rows, cols] = last_axis_view(y, "softmax_backward");
  Tensor out(y.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* yr = y.data() + r * cols;
    const double* gr = g.data() + r * cols;
    double* o = out.data() + r * cols;
    const double d = K().dot(gr, yr, cols);
    for (std::size_t j = 0; j < cols; ++j) o[j] = (gr[j] - d) * yr[j];
  }
  return out;
}

Tensor log_softmax(const Tensor& a) {
  auto [rows, cols] = last_axis_view(a, "log_softmax");
  Tensor out(a.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = a.data() + r * cols;
    double* y = out.data() + r * cols;
    const double m = K().max(x, cols);
    double z = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      y[j] = x[j] - m;
      z += std::exp(y[j]);
    }
    const double lz = std::log(z);
    for (std::size_t j = 0; j < cols; ++j) y[j] -= lz;
  }
  return out;
}

Tensor log_softmax_backward(const Tensor& y, const Tensor& g) {
  if (!y.same_shape(g)) shape_error("log_softmax_backward", y, g);
  auto [rows, cols] = last_axis_view(y, "log_softmax_backward");
  Tensor out(y.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* yr = y.data() + r * cols;
    const double* gr = g.data() + r * cols;
    double* o = out.data() + r * cols;
    const double gs = K().sum(gr, cols);
    for (std::size_t j = 0; j < cols; ++j) o[j] = gr[j] - std::exp(yr[j]) * gs;
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  auto [rows, cols] = last_axis_view(x, "layer_norm");
  if (gain.rank() != 1 || gain.dim(0) != cols || !gain.same_shape(bias)) {
    shape_error("layer_norm", x, gain);
  }
  Tensor out(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.data() + r * cols;
    double* o = out.data() + r * cols;
    const double mu = K().sum(xr, cols) / static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      const double c = xr[j] - mu;
      var += c * c;
    }
    var /= static_cast<double>(cols);
    const double inv = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < cols; ++j) {
      o[j] = gain(j) * ((xr[j] - mu) * inv) + bias(j);
    }
  }
  return out;
}

void layer_norm_backward(const Tensor& x, const Tensor& gain, double eps, const Tensor& g,
                         Tensor* grad_x, Tensor* grad_gain, Tensor* grad_bias) {
  if (!x.same_shape(g)) shape_error("layer_norm_backward", x, g);
  auto [rows, cols] = last_axis_view(x, "layer_norm_backward");
  const double n = static_cast<double>(cols);
  if (grad_x) *grad_x = Tensor(x.shape());
  if (grad_gain) *grad_gain = Tensor(gain.shape());
  if (grad_bias) *grad_bias = Tensor(gain.shape());
  std::vector<double> xhat(cols), dxhat(cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.data() + r * cols;
    const double* gr = g.data() + r * cols;
    const double mu = K().sum(xr, cols) / n;
    double var = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      const double c = xr[j] - mu;
      var += c * c;
    }
    var /= n;
    const double inv = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < cols; ++j) {
      xhat[j] = (xr[j] - mu) * inv;
      dxhat[j] = gr[j] * gain(j);
    }
    if (grad_gain) {
      for (std::size_t j = 0; j < cols; ++j) (*grad_gain)(j) += gr[j] * xhat[j];
    }
    if (grad_bias) {
      for (std::size_t j = 0; j < cols; ++j) (*grad_bias)(j) += gr[j];
    }
    if (grad_x) {
      const double sum_dxhat = K().sum(dxhat.data(), cols);
      const double sum_dxhat_xhat = K().dot(dxhat.data(), xhat.data(), cols);
      double* o = grad_x->data() + r * cols;
      for (std::size_t j = 0; j < cols; ++j) {
        o[j] = inv / n * (n * dxhat[j] - sum_dxhat - xhat[j] * sum_dxhat_xhat);
      }
    }
  }
}

Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids) {
  if (table.rank() != 2) shape_error("embedding_lookup", table);
  const std::size_t d = table.dim(1);
  Tensor out({ids.size(), d});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const int id = ids[i];
    if (id < 0 || static_cast<std::size_t>(id) >= table.dim(0)) {
      throw std::invalid_argument("embedding_lookup: id " + std::to_string(id) +
                                  " out of range for table " + table.shape_str());
    }
    std::memcpy(out.data() + i * d, table.data() + static_cast<std::size_t>(id) * d,
                d * sizeof(double));
  }
  return out;
}

void embedding_backward(const Tensor& g, const std::vector<int>& ids, Tensor* grad_table) {
  const std::size_t d = grad_table->dim(1);
  if (g.rank() != 2 || g.dim(0) != ids.size() || g.dim(1) != d) {
    shape_error("embedding_backward", g, *grad_table);
  }
  for (std::size_t i = 0; i < ids.size(); ++i) {
    K().axpy(1.0, g.data() + i * d, grad_table->data() + static_cast<std::size_t>(ids[i]) * d, d);
  }
}

Tensor concat(const std::vector<const Tensor*>& parts, std::size_t axis) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  const Tensor& first = *parts[0];
  if (axis >= first.rank()) shape_error("concat", first);
  std::vector<std::size_t> shape = first.shape();
  std::size_t axis_total = 0;
  for (const Tensor* p : parts) {
    if (p->rank() != first.rank()) shape_error("concat", first, *p);
    for (std::size_t i = 0; i < shape.size(); ++i) {
      if (i != axis && p->dim(i) != shape[i]) shape_error("concat", first, *p);
    }
    axis_total += p->dim(axis);
  }
  shape[axis] = axis_total;
  Tensor out(shape);
  std::size_t outer = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];
  std::size_t inner = 1;
  for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
  const std::size_t out_stride = axis_total * inner;
  std::size_t offset = 0;
  for (const Tensor* p : parts) {
    const std::size_t block = p->dim(axis) * inner;
    for (std::size_t o = 0; o < outer; ++o) {
      std::memcpy(out.data() + o * out_stride + offset, p->data() + o * block,
                  block * sizeof(double));
    }
    offset += block;
  }
  return out;
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t len) {
  if (axis >= a.rank() || start + len > a.dim(axis)) shape_error("slice", a);
  std::vector<std::size_t> shape = a.shape();
  shape[axis] = len;
  Tensor out(shape);
  std::size_t outer = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= a.dim(i);
  std::size_t inner = 1;
  for (std::size_t i = axis + 1; i < a.rank(); ++i) inner *= a.dim(i);
  const std::size_t in_stride = a.dim(axis) * inner;
  const std::size_t block = len * inner;
  for (std::size_t o = 0; o < outer; ++o) {
    std::memcpy(out.data() + o * block, a.data() + o * in_stride + start * inner,
                block * sizeof(double));
  }
  return out;
}

void slice_backward_into(const Tensor& g, std::size_t axis, std::size_t start,
                         Tensor* grad_a) {
  if (axis >= grad_a->rank() || start + g.dim(axis) > grad_a->dim(axis)) {
    shape_error("slice_backward_into", g, *grad_a);
  }
  std::size_t outer = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= grad_a->dim(i);
  std::size_t inner = 1;
  for (std::size_t i = axis + 1; i < grad_a->rank(); ++i) inner *= grad_a->dim(i);
  const std::size_t out_stride = grad_a->dim(axis) * inner;
  const std::size_t block = g.dim(axis) * inner;
  for (std::size_t o = 0; o < outer; ++o) {
    K().add(grad_a->data() + o * out_stride + start * inner, g.data() + o * block,
            grad_a->data() + o * out_stride + start * inner, block);
  }
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) shape_error("transpose", a);
  Tensor out({a.dim(1), a.dim(0)});
  for (std::size_t i = 0; i < a.dim(0); ++i) {
    for (std::size_t j = 0; j < a.dim(1); ++j) {
      out(j, i) = a(i, j);
    }
  }
  return out;
}

}  // namespace nmt::ops
