#ifndef HCMARL_NN_HPP_
#define HCMARL_NN_HPP_

#include <string>
#include <vector>

#include "hcmarl/ops.hpp"
#include "hcmarl/rng.hpp"
#include "hcmarl/tensor.hpp"

namespace hcmarl {

enum class Activation { kTanh, kRelu, kIdentity };

Activation parse_activation(const std::string& name);
std::string to_string(Activation a);

// Fully connected stack. sizes = {in, hidden..., out}; the last layer is
// linear. Parameters live under "<prefix>l<i>.w" [in x out] and
// "<prefix>l<i>.b" [1 x out].
struct MlpSpec {
  std::vector<int> sizes;
  Activation hidden = Activation::kTanh;
  std::string prefix;

  int input_dim() const { return sizes.front(); }
  int output_dim() const { return sizes.back(); }
  int layer_count() const { return static_cast<int>(sizes.size()) - 1; }
  std::string weight_name(int layer) const;
  std::string bias_name(int layer) const;
};

// Glorot-uniform weights, zero biases. The output layer is scaled by
// `output_gain` (small values give a near-uniform initial policy).
void init_mlp(ParameterSet& params, const MlpSpec& spec, Rng& rng,
              double output_gain = 1.0);

// Throws ShapeError naming the layer whose extents do not line up.
Tensor mlp_forward(const ParameterSet& params, const Tensor& input,
                   const MlpSpec& spec);

// Scaled dot-product attention over the rows (tokens) of a [L x d] input,
// split into `heads` heads of width d / heads. Parameters: "<prefix>wq",
// "<prefix>wk", "<prefix>wv" [d x d]. Head outputs are concatenated, so the
// result is [L x d]; there is no separate output projection.
struct AttentionSpec {
  int dim = 16;
  int heads = 4;
  std::string prefix = "attn.";

  // Throws std::invalid_argument when dim is not divisible by heads.
  void validate() const;
  int head_dim() const { return dim / heads; }
};

struct AttentionResult {
  Tensor output;
  // weights[h](q, k): weight of key token k for query token q in head h.
  std::vector<Matrix> weights;
};

void init_attention(ParameterSet& params, const AttentionSpec& spec, Rng& rng);

AttentionResult multi_head_attention(const ParameterSet& params,
                                     const Tensor& tokens,
                                     const AttentionSpec& spec);

}  // namespace hcmarl

#endif  // HCMARL_NN_HPP_
