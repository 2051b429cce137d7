#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "mld/rng.hpp"
#include "mld/tensor.hpp"

namespace mld {

enum class Activation { kIdentity = 0, kSilu = 1, kTanh = 2, kSquare = 3 };

std::string activation_name(Activation a);
Activation activation_from_name(const std::string& name);

struct Linear {
  Tensor weight;  // [out, in]
  Tensor bias;    // [out]

  std::size_t in_dim() const { return weight.shape()[1]; }
  std::size_t out_dim() const { return weight.shape()[0]; }
};

// A chain of linear layers with the activation applied after every layer
// except, when activate_output is false, the last one. A residual block
// adds its input to its output and so must map width -> width.
struct MlpBlock {
  std::vector<Linear> layers;
  bool residual = false;
  bool activate_output = true;
};

struct MlpParams {
  std::vector<MlpBlock> blocks;
  Activation activation = Activation::kSilu;

  std::size_t in_dim() const;
  std::size_t out_dim() const;
  std::size_t layer_count() const;
  std::size_t parameter_count() const;

  // Weight/bias tensors in a fixed order: layer 0 weight, layer 0 bias,
  // layer 1 weight, ... with layers numbered across blocks.
  std::vector<Tensor*> tensors();
  std::vector<const Tensor*> tensors() const;
  // Names matching tensors(): "<prefix>.layer{k}.w" / "<prefix>.layer{k}.b".
  std::vector<std::string> tensor_names(const std::string& prefix) const;

  // Same structure with every tensor zeroed.
  MlpParams zeros_like() const;

  // Throws ShapeError unless layer dims chain and residual blocks are square.
  void validate() const;
};

// Plain MLP through dims[0] -> dims[1] -> ... -> dims.back(); the last layer
// is linear.
MlpParams make_mlp(const std::vector<std::size_t>& dims, Activation act,
                   Rng& rng);

// Input projection, `blocks` residual blocks of two width x width layers,
// and a linear output head.
MlpParams make_residual_mlp(std::size_t in_dim, std::size_t width,
                            std::size_t blocks, std::size_t out_dim,
                            Activation act, Rng& rng);

// Intermediate values kept by the forward pass for mlp_backward.
struct MlpTape {
  Tensor input;
  // Per layer, in global layer order.
  std::vector<Tensor> layer_inputs;
  std::vector<Tensor> pre_activations;
  Tensor output;
};

struct MlpGradients {
  MlpParams params;  // same structure as the network
  Tensor input;      // d(output . upstream)/d(input)
};

// `input` is [batch, in_dim] or a single rank-1 sample.
Tensor mlp_forward(const MlpParams& params, const Tensor& input);
MlpTape mlp_forward_tape(const MlpParams& params, const Tensor& input);
// Output of the first `block_count` blocks; used for embeddings.
Tensor mlp_forward_blocks(const MlpParams& params, const Tensor& input,
                          std::size_t block_count);

// Gradients of sum(output * upstream) summed over the batch.
MlpGradients mlp_backward(const MlpParams& params, const MlpTape& tape,
                          const Tensor& upstream);
MlpGradients mlp_backward(const MlpParams& params, const Tensor& input,
                          const Tensor& upstream);

double gradient_norm(const MlpParams& grads);

}  // namespace mld
