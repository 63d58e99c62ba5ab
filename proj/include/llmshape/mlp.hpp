#pragma once

// Small dense tanh networks with hand-written backprop and Adam.
//
// Weights are stored input-major (`weight[i * out + j]`), so a forward pass
// over a sparse input only touches the rows of its non-zero entries. The
// flattened kitchen observation is mostly zeros, which makes this the
// dominant saving in training.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "llmshape/errors.hpp"
#include "llmshape/rng.hpp"

namespace llmshape {

template <typename Scalar>
struct DenseLayer {
  int in = 0;
  int out = 0;
  std::vector<Scalar> weight;  // in * out, input-major
  std::vector<Scalar> bias;    // out

  bool operator==(const DenseLayer&) const = default;
};

/// Orthogonal init scaled by `gain`, as in torch.nn.init.orthogonal_.
template <typename Scalar>
DenseLayer<Scalar> orthogonal_layer(int in, int out, double gain, RandomStream& rng) {
  const int rows = std::max(in, out);
  const int cols = std::min(in, out);
  Eigen::MatrixXd a(rows, cols);
  for (int c = 0; c < cols; ++c)
    for (int r = 0; r < rows; ++r) a(r, c) = rng.normal();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(rows, cols);
  const Eigen::MatrixXd r = qr.matrixQR().topLeftCorner(cols, cols);
  for (int c = 0; c < cols; ++c)
    if (r(c, c) < 0) q.col(c) *= -1.0;

  DenseLayer<Scalar> layer{in, out, std::vector<Scalar>(static_cast<std::size_t>(in * out)),
                           std::vector<Scalar>(static_cast<std::size_t>(out), Scalar(0))};
  // q is rows x cols with orthonormal columns; lay it out as (in x out).
  for (int i = 0; i < in; ++i)
    for (int j = 0; j < out; ++j) {
      const double v = in >= out ? q(i, j) : q(j, i);
      layer.weight[static_cast<std::size_t>(i * out + j)] = static_cast<Scalar>(gain * v);
    }
  return layer;
}

/// Activations of one forward pass, kept for backprop.
template <typename Scalar>
struct MlpTape {
  std::vector<std::vector<Scalar>> acts;  // acts[0] = input, acts[k+1] = output of layer k
};

template <typename Scalar>
struct Mlp {
  std::vector<DenseLayer<Scalar>> layers;  // tanh after every layer but the last

  int input_dim() const { return layers.front().in; }
  int output_dim() const { return layers.back().out; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weight.size() + l.bias.size();
    return n;
  }

  /// Forward pass recording activations into `tape`; returns the output.
  std::span<const Scalar> forward(std::span<const Scalar> x, MlpTape<Scalar>& tape) const {
    tape.acts.resize(layers.size() + 1);
    tape.acts[0].assign(x.begin(), x.end());
    for (std::size_t k = 0; k < layers.size(); ++k) {
      const auto& l = layers[k];
      const auto& in = tape.acts[k];
      auto& out = tape.acts[k + 1];
      out.assign(l.bias.begin(), l.bias.end());
      for (int i = 0; i < l.in; ++i) {
        const Scalar xi = in[static_cast<std::size_t>(i)];
        if (xi == Scalar(0)) continue;
        const Scalar* row = l.weight.data() + static_cast<std::ptrdiff_t>(i) * l.out;
        for (int j = 0; j < l.out; ++j) out[static_cast<std::size_t>(j)] += xi * row[j];
      }
      if (k + 1 < layers.size())
        for (auto& v : out) v = std::tanh(v);
    }
    return tape.acts.back();
  }

  std::vector<Scalar> forward(std::span<const Scalar> x) const {
    MlpTape<Scalar> tape;
    auto out = forward(x, tape);
    return {out.begin(), out.end()};
  }

  /// Accumulates dL/dθ into `grad` (same shape as `*this`) given dL/d(output).
  void backward(const MlpTape<Scalar>& tape, std::span<const Scalar> d_out, Mlp& grad) const {
    std::vector<Scalar> delta(d_out.begin(), d_out.end());
    std::vector<Scalar> d_in;
    for (std::size_t k = layers.size(); k-- > 0;) {
      const auto& l = layers[k];
      auto& g = grad.layers[k];
      const auto& in = tape.acts[k];
      for (int j = 0; j < l.out; ++j) g.bias[static_cast<std::size_t>(j)] += delta[static_cast<std::size_t>(j)];
      const bool need_input_grad = k > 0;
      if (need_input_grad) d_in.assign(static_cast<std::size_t>(l.in), Scalar(0));
      for (int i = 0; i < l.in; ++i) {
        const Scalar xi = in[static_cast<std::size_t>(i)];
        Scalar* grow = g.weight.data() + static_cast<std::ptrdiff_t>(i) * l.out;
        if (xi != Scalar(0))
          for (int j = 0; j < l.out; ++j) grow[j] += xi * delta[static_cast<std::size_t>(j)];
        if (need_input_grad) {
          const Scalar* row = l.weight.data() + static_cast<std::ptrdiff_t>(i) * l.out;
          Scalar acc{};
          for (int j = 0; j < l.out; ++j) acc += row[j] * delta[static_cast<std::size_t>(j)];
          d_in[static_cast<std::size_t>(i)] = acc;
        }
      }
      if (need_input_grad) {
        // d tanh(z) = 1 - tanh(z)^2, and acts[k] already holds tanh(z).
        for (int i = 0; i < l.in; ++i) {
          const Scalar a = in[static_cast<std::size_t>(i)];
          d_in[static_cast<std::size_t>(i)] *= Scalar(1) - a * a;
        }
        delta.swap(d_in);
      }
    }
  }

  /// Same shape, all zeros.
  Mlp zeros_like() const {
    Mlp z = *this;
    for (auto& l : z.layers) {
      std::fill(l.weight.begin(), l.weight.end(), Scalar(0));
      std::fill(l.bias.begin(), l.bias.end(), Scalar(0));
    }
    return z;
  }

  template <typename F>
  void for_each_param(F&& f) {
    for (auto& l : layers) {
      for (auto& w : l.weight) f(w);
      for (auto& b : l.bias) f(b);
    }
  }
  template <typename F>
  void for_each_param(F&& f) const {
    for (const auto& l : layers) {
      for (const auto& w : l.weight) f(w);
      for (const auto& b : l.bias) f(b);
    }
  }

  bool all_finite() const {
    bool ok = true;
    for_each_param([&](Scalar v) { ok = ok && std::isfinite(static_cast<double>(v)); });
    return ok;
  }

  bool operator==(const Mlp&) const = default;
};

/// `sizes` = {input, hidden..., output}; hidden layers use `hidden_gain`.
template <typename Scalar>
Mlp<Scalar> make_mlp(std::span<const int> sizes, double hidden_gain, double output_gain, RandomStream& rng) {
  if (sizes.size() < 2) throw ContractViolation("make_mlp: need at least input and output sizes");
  Mlp<Scalar> net;
  for (std::size_t k = 0; k + 1 < sizes.size(); ++k) {
    const bool last = k + 2 == sizes.size();
    net.layers.push_back(orthogonal_layer<Scalar>(sizes[k], sizes[k + 1], last ? output_gain : hidden_gain, rng));
  }
  return net;
}

/// Adam over a flat parameter walk of one or more networks.
template <typename Scalar>
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-5;
  long long step = 0;
  std::vector<double> m;
  std::vector<double> v;
};

template <typename Scalar>
void adam_step(std::span<Mlp<Scalar>* const> params, std::span<const Mlp<Scalar>* const> grads, double lr,
               AdamState<Scalar>& st) {
  std::size_t total = 0;
  for (auto* p : params) total += p->parameter_count();
  if (st.m.size() != total) {
    st.m.assign(total, 0.0);
    st.v.assign(total, 0.0);
    st.step = 0;
  }
  st.step += 1;
  const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  std::size_t idx = 0;
  for (std::size_t n = 0; n < params.size(); ++n) {
    std::vector<double> g;
    g.reserve(grads[n]->parameter_count());
    grads[n]->for_each_param([&](Scalar x) { g.push_back(static_cast<double>(x)); });
    std::size_t k = 0;
    params[n]->for_each_param([&](Scalar& w) {
      const double gi = g[k++];
      double& m = st.m[idx];
      double& v = st.v[idx];
      ++idx;
      m = st.beta1 * m + (1.0 - st.beta1) * gi;
      v = st.beta2 * v + (1.0 - st.beta2) * gi * gi;
      const double mhat = m / bc1;
      const double vhat = v / bc2;
      w = static_cast<Scalar>(static_cast<double>(w) - lr * mhat / (std::sqrt(vhat) + st.eps));
    });
  }
}

}  // namespace llmshape
