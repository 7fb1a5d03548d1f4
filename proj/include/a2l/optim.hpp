#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

namespace a2l {

// Adam over a flat parameter vector.
struct Adam {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  explicit Adam(std::size_t n, double learning_rate) : lr(learning_rate), m_(n, 0.0), v_(n, 0.0) {}

  void step(std::vector<double>& params, const std::vector<double>& grads) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = beta1 * m_[i] + (1.0 - beta1) * grads[i];
      v_[i] = beta2 * v_[i] + (1.0 - beta2) * grads[i] * grads[i];
      params[i] -= lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps);
    }
  }

 private:
  std::vector<double> m_;
  std::vector<double> v_;
  long t_ = 0;
};

}  // namespace a2l
