#include "mld/mlp.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "mld/error.hpp"

namespace mld {

namespace {

using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;
using ConstVecMap = Eigen::Map<const Eigen::RowVectorXd>;

ConstMatMap as_matrix(const Tensor& t, std::size_t rows, std::size_t cols) {
  return ConstMatMap(t.data(), static_cast<Eigen::Index>(rows),
                     static_cast<Eigen::Index>(cols));
}

MatMap as_matrix(Tensor& t, std::size_t rows, std::size_t cols) {
  return MatMap(t.data(), static_cast<Eigen::Index>(rows),
                static_cast<Eigen::Index>(cols));
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double activate(Activation a, double x) {
  switch (a) {
    case Activation::kIdentity:
      return x;
    case Activation::kSilu:
      return x * sigmoid(x);
    case Activation::kTanh:
      return std::tanh(x);
    case Activation::kSquare:
      return x * x;
  }
  return x;
}

double activate_derivative(Activation a, double x) {
  switch (a) {
    case Activation::kIdentity:
      return 1.0;
    case Activation::kSilu: {
      const double s = sigmoid(x);
      return s * (1.0 + x * (1.0 - s));
    }
    case Activation::kTanh: {
      const double t = std::tanh(x);
      return 1.0 - t * t;
    }
    case Activation::kSquare:
      return 2.0 * x;
  }
  return 1.0;
}

Linear make_linear(std::size_t in, std::size_t out, Rng& rng) {
  Linear l{Tensor({out, in}), Tensor({out})};
  const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
  for (auto& w : l.weight.values()) w = rng.uniform(-bound, bound);
  return l;
}

// Promotes a rank-1 sample to a [1, n] batch.
Tensor as_batch(const Tensor& input) {
  if (input.rank() == 1) return input.reshaped({1, input.size()});
  if (input.rank() != 2) {
    throw ShapeError("mlp input must be rank 1 or 2, got " +
                     shape_string(input.shape()));
  }
  return input;
}

Tensor linear_forward(const Linear& layer, const Tensor& x) {
  const std::size_t n = x.rows();
  const std::size_t in = layer.in_dim();
  const std::size_t out = layer.out_dim();
  Tensor y({n, out});
  auto ym = as_matrix(y, n, out);
  ym.noalias() = as_matrix(x, n, in) * as_matrix(layer.weight, out, in).transpose();
  ym.rowwise() += ConstVecMap(layer.bias.data(), static_cast<Eigen::Index>(out));
  return y;
}

template <typename Fn>
void for_each_layer(const MlpParams& p, Fn&& fn) {
  std::size_t k = 0;
  for (const auto& block : p.blocks) {
    for (std::size_t i = 0; i < block.layers.size(); ++i, ++k) {
      fn(k, block, i);
    }
  }
}

}  // namespace

std::string activation_name(Activation a) {
  switch (a) {
    case Activation::kIdentity:
      return "identity";
    case Activation::kSilu:
      return "silu";
    case Activation::kTanh:
      return "tanh";
    case Activation::kSquare:
      return "square";
  }
  return "unknown";
}

Activation activation_from_name(const std::string& name) {
  if (name == "identity") return Activation::kIdentity;
  if (name == "silu") return Activation::kSilu;
  if (name == "tanh") return Activation::kTanh;
  if (name == "square") return Activation::kSquare;
  throw ConfigError("unknown activation '" + name + "'");
}

std::size_t MlpParams::in_dim() const {
  if (blocks.empty() || blocks.front().layers.empty()) return 0;
  return blocks.front().layers.front().in_dim();
}

std::size_t MlpParams::out_dim() const {
  if (blocks.empty() || blocks.back().layers.empty()) return 0;
  return blocks.back().layers.back().out_dim();
}

std::size_t MlpParams::layer_count() const {
  std::size_t n = 0;
  for (const auto& b : blocks) n += b.layers.size();
  return n;
}

std::size_t MlpParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto* t : tensors()) n += t->size();
  return n;
}

std::vector<Tensor*> MlpParams::tensors() {
  std::vector<Tensor*> out;
  for (auto& b : blocks) {
    for (auto& l : b.layers) {
      out.push_back(&l.weight);
      out.push_back(&l.bias);
    }
  }
  return out;
}

std::vector<const Tensor*> MlpParams::tensors() const {
  std::vector<const Tensor*> out;
  for (const auto& b : blocks) {
    for (const auto& l : b.layers) {
      out.push_back(&l.weight);
      out.push_back(&l.bias);
    }
  }
  return out;
}

std::vector<std::string> MlpParams::tensor_names(
    const std::string& prefix) const {
  std::vector<std::string> names;
  for (std::size_t k = 0; k < layer_count(); ++k) {
    names.push_back(prefix + ".layer" + std::to_string(k) + ".w");
    names.push_back(prefix + ".layer" + std::to_string(k) + ".b");
  }
  return names;
}

MlpParams MlpParams::zeros_like() const {
  MlpParams z = *this;
  for (auto* t : z.tensors()) t->fill(0.0);
  return z;
}

void MlpParams::validate() const {
  if (blocks.empty()) throw ShapeError("mlp has no blocks");
  std::size_t prev = 0;
  bool first = true;
  for (std::size_t bi = 0; bi < blocks.size(); ++bi) {
    const auto& b = blocks[bi];
    if (b.layers.empty()) {
      throw ShapeError("mlp block " + std::to_string(bi) + " is empty");
    }
    const std::size_t block_in = b.layers.front().in_dim();
    for (const auto& l : b.layers) {
      if (l.weight.rank() != 2 || l.bias.rank() != 1 ||
          l.bias.size() != l.out_dim()) {
        throw ShapeError("malformed linear layer in block " +
                         std::to_string(bi));
      }
      if (!first && l.in_dim() != prev) {
        throw ShapeError("layer dims do not chain in block " +
                         std::to_string(bi) + ": expected in_dim " +
                         std::to_string(prev) + ", got " +
                         std::to_string(l.in_dim()));
      }
      prev = l.out_dim();
      first = false;
    }
    if (b.residual && prev != block_in) {
      throw ShapeError("residual block " + std::to_string(bi) +
                       " maps " + std::to_string(block_in) + " -> " +
                       std::to_string(prev));
    }
  }
}

MlpParams make_mlp(const std::vector<std::size_t>& dims, Activation act,
                   Rng& rng) {
  if (dims.size() < 2) throw ConfigError("make_mlp needs at least two dims");
  for (auto d : dims) {
    if (d == 0) throw ConfigError("make_mlp: zero-width layer");
  }
  MlpParams p;
  p.activation = act;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    MlpBlock b;
    b.layers.push_back(make_linear(dims[i], dims[i + 1], rng));
    b.activate_output = i + 2 < dims.size();
    p.blocks.push_back(std::move(b));
  }
  return p;
}

MlpParams make_residual_mlp(std::size_t in_dim, std::size_t width,
                            std::size_t blocks, std::size_t out_dim,
                            Activation act, Rng& rng) {
  if (in_dim == 0 || width == 0 || out_dim == 0) {
    throw ConfigError("make_residual_mlp: dims must be positive");
  }
  MlpParams p;
  p.activation = act;
  MlpBlock input;
  input.layers.push_back(make_linear(in_dim, width, rng));
  p.blocks.push_back(std::move(input));
  for (std::size_t i = 0; i < blocks; ++i) {
    MlpBlock b;
    b.residual = true;
    b.activate_output = false;
    b.layers.push_back(make_linear(width, width, rng));
    b.layers.push_back(make_linear(width, width, rng));
    p.blocks.push_back(std::move(b));
  }
  MlpBlock head;
  head.activate_output = false;
  head.layers.push_back(make_linear(width, out_dim, rng));
  p.blocks.push_back(std::move(head));
  return p;
}

MlpTape mlp_forward_tape(const MlpParams& params, const Tensor& input) {
  MlpTape tape;
  tape.input = as_batch(input);
  if (tape.input.cols() != params.in_dim()) {
    throw ShapeError("mlp input dim " + std::to_string(tape.input.cols()) +
                     " != network in_dim " + std::to_string(params.in_dim()));
  }
  tape.layer_inputs.reserve(params.layer_count());
  tape.pre_activations.reserve(params.layer_count());
  Tensor h = tape.input;
  for (const auto& block : params.blocks) {
    const Tensor block_input = block.residual ? h : Tensor();
    for (std::size_t i = 0; i < block.layers.size(); ++i) {
      Tensor a = linear_forward(block.layers[i], h);
      tape.layer_inputs.push_back(std::move(h));
      const bool act = i + 1 < block.layers.size() || block.activate_output;
      h = a;
      if (act && params.activation != Activation::kIdentity) {
        for (auto& v : h.values()) v = activate(params.activation, v);
      }
      tape.pre_activations.push_back(std::move(a));
    }
    if (block.residual) h += block_input;
  }
  tape.output = std::move(h);
  return tape;
}

Tensor mlp_forward(const MlpParams& params, const Tensor& input) {
  return mlp_forward_blocks(params, input, params.blocks.size());
}

Tensor mlp_forward_blocks(const MlpParams& params, const Tensor& input,
                          std::size_t block_count) {
  Tensor h = as_batch(input);
  if (h.cols() != params.in_dim()) {
    throw ShapeError("mlp input dim " + std::to_string(h.cols()) +
                     " != network in_dim " + std::to_string(params.in_dim()));
  }
  if (block_count > params.blocks.size()) {
    throw ShapeError("mlp_forward_blocks: block_count out of range");
  }
  for (std::size_t bi = 0; bi < block_count; ++bi) {
    const auto& block = params.blocks[bi];
    Tensor block_input;
    if (block.residual) block_input = h;
    for (std::size_t i = 0; i < block.layers.size(); ++i) {
      h = linear_forward(block.layers[i], h);
      const bool act = i + 1 < block.layers.size() || block.activate_output;
      if (act && params.activation != Activation::kIdentity) {
        for (auto& v : h.values()) v = activate(params.activation, v);
      }
    }
    if (block.residual) h += block_input;
  }
  if (input.rank() == 1) return h.reshaped({h.cols()});
  return h;
}

MlpGradients mlp_backward(const MlpParams& params, const MlpTape& tape,
                          const Tensor& upstream) {
  const Tensor g_in = as_batch(upstream);
  if (g_in.shape() != tape.output.shape()) {
    throw ShapeError("upstream grad shape " + shape_string(upstream.shape()) +
                     " != output shape " + shape_string(tape.output.shape()));
  }
  MlpGradients grads{params.zeros_like(), Tensor()};
  auto grad_tensors = grads.params.tensors();
  const std::size_t n = g_in.rows();

  Tensor g = g_in;
  std::size_t k = params.layer_count();
  for (std::size_t bi = params.blocks.size(); bi-- > 0;) {
    const auto& block = params.blocks[bi];
    // A residual block passes the output gradient straight to its input.
    Tensor skip_grad;
    if (block.residual) skip_grad = g;
    for (std::size_t i = block.layers.size(); i-- > 0;) {
      --k;
      const auto& layer = block.layers[i];
      const bool act = i + 1 < block.layers.size() || block.activate_output;
      const Tensor& a = tape.pre_activations[k];
      if (act && params.activation != Activation::kIdentity) {
        for (std::size_t j = 0; j < g.size(); ++j) {
          g[j] *= activate_derivative(params.activation, a[j]);
        }
      }
      const Tensor& x = tape.layer_inputs[k];
      const std::size_t in = layer.in_dim();
      const std::size_t out = layer.out_dim();
      auto gm = as_matrix(g, n, out);
      as_matrix(*grad_tensors[2 * k], out, in).noalias() =
          gm.transpose() * as_matrix(x, n, in);
      // Plain loop: Eigen's vectorized reduction order depends on buffer
      // alignment, which would break bit-reproducibility.
      double* db = grad_tensors[2 * k + 1]->data();
      std::fill(db, db + out, 0.0);
      for (std::size_t r = 0; r < n; ++r) {
        const double* gr = g.data() + r * out;
        for (std::size_t j = 0; j < out; ++j) db[j] += gr[j];
      }
      Tensor gx({n, in});
      as_matrix(gx, n, in).noalias() = gm * as_matrix(layer.weight, out, in);
      g = std::move(gx);
    }
    if (block.residual) g += skip_grad;
  }
  grads.input = upstream.rank() == 1 ? g.reshaped({g.cols()}) : std::move(g);
  return grads;
}

MlpGradients mlp_backward(const MlpParams& params, const Tensor& input,
                          const Tensor& upstream) {
  return mlp_backward(params, mlp_forward_tape(params, input), upstream);
}

double gradient_norm(const MlpParams& grads) {
  double s = 0.0;
  for (const auto* t : grads.tensors()) s += squared_norm(*t);
  return std::sqrt(s);
}

}  // namespace mld
