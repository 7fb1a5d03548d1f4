#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "a2l/common.hpp"

namespace a2l {

// in -> hidden (tanh) -> out (linear), with a fixed per-feature input
// standardization fitted on the training inputs.
struct FeedForward {
  std::size_t in = 0;
  std::size_t hidden = 0;
  std::size_t out = 0;
  std::vector<double> params;  // [W1 (hidden x in), b1, W2 (out x hidden), b2]
  Vector input_mean;
  Vector input_scale;

  struct Cache {
    Vector input;   // standardized
    Vector hidden;  // tanh activations
  };

  FeedForward() = default;
  FeedForward(std::size_t in, std::size_t hidden, std::size_t out, double output_init_scale, Rng& rng);

  std::size_t param_count() const { return params.size(); }

  /// Sets input_mean / input_scale from sample inputs (scale floor 1e-8).
  void fit_standardization(const std::vector<Vector>& inputs);

  Vector forward(std::span<const double> x, Cache* cache = nullptr) const;

  /// Accumulates d(loss)/d(params) into `grads` given d(loss)/d(output).
  void backward(const Cache& cache, std::span<const double> grad_out, std::vector<double>& grads) const;

  friend bool operator==(const FeedForward&, const FeedForward&) = default;
};

std::string serialize_feedforward(const FeedForward& net);
/// Parses the block written by serialize_feedforward from `in`, advancing it.
FeedForward parse_feedforward(std::string_view& in);

}  // namespace a2l
