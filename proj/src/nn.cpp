#include "hcmarl/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace hcmarl {

namespace {

Matrix glorot(int in, int out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  Matrix w(in, out);
  for (Index i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-limit, limit);
  return w;
}

}  // namespace

Activation parse_activation(const std::string& name) {
  if (name == "tanh") return Activation::kTanh;
  if (name == "relu") return Activation::kRelu;
  if (name == "identity" || name == "linear") return Activation::kIdentity;
  throw std::invalid_argument("unknown nonlinearity '" + name + "'");
}

std::string to_string(Activation a) {
  switch (a) {
    case Activation::kTanh: return "tanh";
    case Activation::kRelu: return "relu";
    case Activation::kIdentity: return "identity";
  }
  return "identity";
}

std::string MlpSpec::weight_name(int layer) const {
  return prefix + "l" + std::to_string(layer) + ".w";
}

std::string MlpSpec::bias_name(int layer) const {
  return prefix + "l" + std::to_string(layer) + ".b";
}

void init_mlp(ParameterSet& params, const MlpSpec& spec, Rng& rng,
              double output_gain) {
  if (spec.sizes.size() < 2) {
    throw std::invalid_argument("mlp needs at least input and output sizes");
  }
  for (int s : spec.sizes) {
    if (s <= 0) throw std::invalid_argument("mlp layer sizes must be positive");
  }
  for (int l = 0; l < spec.layer_count(); ++l) {
    Matrix w = glorot(spec.sizes[l], spec.sizes[l + 1], rng);
    if (l + 1 == spec.layer_count()) w *= output_gain;
    params.add(spec.weight_name(l), std::move(w));
    params.add(spec.bias_name(l), Matrix::Zero(1, spec.sizes[l + 1]));
  }
}

Tensor mlp_forward(const ParameterSet& params, const Tensor& input,
                   const MlpSpec& spec) {
  Tensor h = input;
  for (int l = 0; l < spec.layer_count(); ++l) {
    const Tensor& w = params.at(spec.weight_name(l));
    const Tensor& b = params.at(spec.bias_name(l));
    if (h.cols() != w.rows()) {
      throw ShapeError("mlp layer " + std::to_string(l) + " (" +
                       spec.weight_name(l) + "): input width " +
                       std::to_string(h.cols()) + " but weight expects " +
                       std::to_string(w.rows()));
    }
    if (b.cols() != w.cols()) {
      throw ShapeError("mlp layer " + std::to_string(l) + ": bias width " +
                       std::to_string(b.cols()) + " != " +
                       std::to_string(w.cols()));
    }
    h = add_row(matmul(h, w), b);
    if (l + 1 < spec.layer_count()) {
      switch (spec.hidden) {
        case Activation::kTanh: h = tanh(h); break;
        case Activation::kRelu: h = relu(h); break;
        case Activation::kIdentity: break;
      }
    }
  }
  return h;
}

void AttentionSpec::validate() const {
  if (dim <= 0 || heads <= 0) {
    throw std::invalid_argument("attention dim and head count must be positive");
  }
  if (dim % heads != 0) {
    throw std::invalid_argument("attention dim " + std::to_string(dim) +
                                " is not divisible by " +
                                std::to_string(heads) + " heads");
  }
}

void init_attention(ParameterSet& params, const AttentionSpec& spec, Rng& rng) {
  spec.validate();
  params.add(spec.prefix + "wq", glorot(spec.dim, spec.dim, rng));
  params.add(spec.prefix + "wk", glorot(spec.dim, spec.dim, rng));
  params.add(spec.prefix + "wv", glorot(spec.dim, spec.dim, rng));
}

AttentionResult multi_head_attention(const ParameterSet& params,
                                     const Tensor& tokens,
                                     const AttentionSpec& spec) {
  spec.validate();
  if (tokens.cols() != spec.dim) {
    throw ShapeError("attention: token width " + std::to_string(tokens.cols()) +
                     " != " + std::to_string(spec.dim));
  }
  const Tensor q = matmul(tokens, params.at(spec.prefix + "wq"));
  const Tensor k = matmul(tokens, params.at(spec.prefix + "wk"));
  const Tensor v = matmul(tokens, params.at(spec.prefix + "wv"));
  const int dh = spec.head_dim();
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

  AttentionResult result;
  std::vector<Tensor> heads;
  heads.reserve(spec.heads);
  for (int h = 0; h < spec.heads; ++h) {
    Tensor qh = slice_cols(q, h * dh, dh);
    Tensor kh = slice_cols(k, h * dh, dh);
    Tensor vh = slice_cols(v, h * dh, dh);
    Tensor scores = scale(matmul(qh, transpose(kh)), inv_sqrt);
    Tensor weights = softmax(scores);
    result.weights.push_back(weights.value());
    heads.push_back(matmul(weights, vh));
  }
  result.output = concat_cols(heads);
  return result;
}

}  // namespace hcmarl
