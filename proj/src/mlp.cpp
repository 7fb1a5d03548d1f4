#include "a2l/mlp.hpp"

#include <cmath>
#include <sstream>

namespace a2l {

FeedForward::FeedForward(std::size_t in_dim, std::size_t hidden_dim, std::size_t out_dim,
                         double output_init_scale, Rng& rng)
    : in(in_dim), hidden(hidden_dim), out(out_dim),
      params(hidden_dim * in_dim + hidden_dim + out_dim * hidden_dim + out_dim, 0.0),
      input_mean(in_dim, 0.0), input_scale(in_dim, 1.0) {
  if (in == 0 || hidden == 0 || out == 0)
    throw Error(ErrorCode::InvalidConfig, "feed-forward layer sizes must be >= 1");
  const double s1 = 1.0 / std::sqrt(static_cast<double>(in));
  const double s2 = output_init_scale / std::sqrt(static_cast<double>(hidden));
  std::size_t p = 0;
  for (std::size_t i = 0; i < hidden * in; ++i) params[p++] = s1 * rng.normal();
  p += hidden;
  for (std::size_t i = 0; i < out * hidden; ++i) params[p++] = s2 * rng.normal();
}

void FeedForward::fit_standardization(const std::vector<Vector>& inputs) {
  input_mean.assign(in, 0.0);
  input_scale.assign(in, 1.0);
  if (inputs.empty()) return;
  const double n = static_cast<double>(inputs.size());
  for (const auto& x : inputs)
    for (std::size_t j = 0; j < in; ++j) input_mean[j] += x[j] / n;
  Vector var(in, 0.0);
  for (const auto& x : inputs)
    for (std::size_t j = 0; j < in; ++j) {
      const double d = x[j] - input_mean[j];
      var[j] += d * d / n;
    }
  for (std::size_t j = 0; j < in; ++j) input_scale[j] = 1.0 / std::max(std::sqrt(var[j]), 1e-8);
}

Vector FeedForward::forward(std::span<const double> x, Cache* cache) const {
  const double* W1 = params.data();
  const double* b1 = W1 + hidden * in;
  const double* W2 = b1 + hidden;
  const double* b2 = W2 + out * hidden;

  Vector xs(in);
  for (std::size_t j = 0; j < in; ++j) xs[j] = (x[j] - input_mean[j]) * input_scale[j];
  Vector h(hidden);
  for (std::size_t i = 0; i < hidden; ++i) {
    double s = b1[i];
    const double* w = W1 + i * in;
    for (std::size_t j = 0; j < in; ++j) s += w[j] * xs[j];
    h[i] = std::tanh(s);
  }
  Vector y(out);
  for (std::size_t k = 0; k < out; ++k) {
    double s = b2[k];
    const double* w = W2 + k * hidden;
    for (std::size_t i = 0; i < hidden; ++i) s += w[i] * h[i];
    y[k] = s;
  }
  if (cache) {
    cache->input = std::move(xs);
    cache->hidden = std::move(h);
  }
  return y;
}

void FeedForward::backward(const Cache& cache, std::span<const double> grad_out,
                           std::vector<double>& grads) const {
  const double* W2 = params.data() + hidden * in + hidden;
  double* gW1 = grads.data();
  double* gb1 = gW1 + hidden * in;
  double* gW2 = gb1 + hidden;
  double* gb2 = gW2 + out * hidden;

  Vector gh(hidden, 0.0);
  for (std::size_t k = 0; k < out; ++k) {
    const double g = grad_out[k];
    if (g == 0.0) continue;
    gb2[k] += g;
    for (std::size_t i = 0; i < hidden; ++i) {
      gW2[k * hidden + i] += g * cache.hidden[i];
      gh[i] += g * W2[k * hidden + i];
    }
  }
  for (std::size_t i = 0; i < hidden; ++i) {
    const double g = gh[i] * (1.0 - cache.hidden[i] * cache.hidden[i]);
    if (g == 0.0) continue;
    gb1[i] += g;
    for (std::size_t j = 0; j < in; ++j) gW1[i * in + j] += g * cache.input[j];
  }
}

namespace {

void put(std::ostringstream& out, const char* name, const std::vector<double>& v) {
  out << name << ' ' << v.size();
  for (double x : v) out << ' ' << format_double(x);
  out << '\n';
}

std::string_view next_token(std::string_view& in) {
  std::size_t i = 0;
  while (i < in.size() && std::isspace(static_cast<unsigned char>(in[i]))) ++i;
  std::size_t j = i;
  while (j < in.size() && !std::isspace(static_cast<unsigned char>(in[j]))) ++j;
  const std::string_view tok = in.substr(i, j - i);
  in.remove_prefix(j);
  if (tok.empty()) throw Error(ErrorCode::ParseError, "unexpected end of checkpoint");
  return tok;
}

std::size_t take_size(std::string_view& in, std::string_view key) {
  if (next_token(in) != key)
    throw Error(ErrorCode::ParseError, "checkpoint: expected " + std::string(key));
  return static_cast<std::size_t>(std::stoull(std::string(next_token(in))));
}

std::vector<double> take_values(std::string_view& in, std::string_view key) {
  const std::size_t n = take_size(in, key);
  std::vector<double> v(n);
  for (auto& x : v) x = parse_double(next_token(in));
  return v;
}

}  // namespace

std::string serialize_feedforward(const FeedForward& net) {
  std::ostringstream out;
  out << "in " << net.in << "\nhidden " << net.hidden << "\nout " << net.out << '\n';
  put(out, "params", net.params);
  put(out, "input_mean", net.input_mean);
  put(out, "input_scale", net.input_scale);
  return out.str();
}

FeedForward parse_feedforward(std::string_view& in) {
  FeedForward net;
  net.in = take_size(in, "in");
  net.hidden = take_size(in, "hidden");
  net.out = take_size(in, "out");
  net.params = take_values(in, "params");
  net.input_mean = take_values(in, "input_mean");
  net.input_scale = take_values(in, "input_scale");
  if (net.params.size() != net.hidden * net.in + net.hidden + net.out * net.hidden + net.out ||
      net.input_mean.size() != net.in || net.input_scale.size() != net.in)
    throw Error(ErrorCode::ParseError, "checkpoint: layer sizes do not match");
  return net;
}

}  // namespace a2l
