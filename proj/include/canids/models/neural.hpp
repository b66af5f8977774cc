#pragma once

// Dense feed-forward network and single-layer LSTM, both with softmax heads
// trained on mean cross-entropy.

#include <cmath>
#include <span>
#include <vector>

#include "canids/models/common.hpp"
#include "canids/rng.hpp"

namespace canids {

namespace detail {

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

inline void check_divergence(double loss, const char* who, int epoch) {
  if (!std::isfinite(loss) || loss > 1e6) {
    throw TrainingError(std::string(who) + ": training diverged at epoch " + std::to_string(epoch) +
                        " (loss " + std::to_string(loss) + ")");
  }
}

}  // namespace detail

/// Fully connected network. Parameters are stored flat, layer by layer,
/// each layer as W (out x in, row-major) followed by b (out).
struct FeedForwardModel {
  std::vector<std::size_t> sizes;  // input, hidden..., classes
  Activation activation = Activation::Relu;
  std::vector<double> params;

  static FeedForwardModel zeros(std::size_t inputs, const std::vector<std::size_t>& hidden,
                                Activation act = Activation::Relu) {
    FeedForwardModel m;
    m.sizes.push_back(inputs);
    m.sizes.insert(m.sizes.end(), hidden.begin(), hidden.end());
    m.sizes.push_back(kNumClasses);
    m.activation = act;
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < m.sizes.size(); ++l) n += m.sizes[l + 1] * (m.sizes[l] + 1);
    m.params.assign(n, 0.0);
    return m;
  }

  /// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)); biases zero.
  static FeedForwardModel random(std::size_t inputs, const std::vector<std::size_t>& hidden,
                                 Activation act, std::uint64_t seed) {
    auto m = zeros(inputs, hidden, act);
    Rng rng(seed);
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < m.sizes.size(); ++l) {
      const std::size_t in = m.sizes[l], out = m.sizes[l + 1];
      const double r = 1.0 / std::sqrt(static_cast<double>(in));
      for (std::size_t i = 0; i < out * in; ++i) m.params[off + i] = rng.uniform(-r, r);
      off += out * (in + 1);
    }
    return m;
  }

  std::size_t layers() const { return sizes.size() - 1; }

  /// Activations of every layer; the last entry holds the class probabilities.
  void forward(std::span<const double> x, std::vector<std::vector<double>>& acts) const {
    acts.resize(sizes.size());
    acts[0].assign(x.begin(), x.end());
    std::size_t off = 0;
    for (std::size_t l = 0; l < layers(); ++l) {
      const std::size_t in = sizes[l], out = sizes[l + 1];
      const double* W = params.data() + off;
      const double* b = W + out * in;
      auto& a = acts[l + 1];
      a.assign(out, 0.0);
      const auto& prev = acts[l];
      for (std::size_t o = 0; o < out; ++o) {
        double s = b[o];
        const double* w = W + o * in;
        for (std::size_t i = 0; i < in; ++i) s += w[i] * prev[i];
        a[o] = s;
      }
      if (l + 1 == layers()) {
        detail::softmax_inplace(a);
      } else if (activation == Activation::Relu) {
        for (auto& v : a) v = v < 0.0 ? 0.0 : v;  // NaN passes through so divergence is seen
      } else {
        for (auto& v : a) v = std::tanh(v);
      }
      off += out * (in + 1);
    }
  }

  Proba predict_proba(std::span<const double> x) const {
    std::vector<std::vector<double>> acts;
    forward(x, acts);
    Proba p{};
    std::copy(acts.back().begin(), acts.back().end(), p.begin());
    return p;
  }
};

/// Mean cross-entropy over `rows`; accumulates d(loss)/d(params) into `grad` when given.
inline double ffnn_objective(const FeedForwardModel& m, const Matrix& X, std::span<const int> y,
                             std::span<const std::size_t> rows, std::vector<double>* grad = nullptr) {
  std::vector<std::vector<double>> acts;
  std::vector<double> delta, next;
  if (grad) grad->assign(m.params.size(), 0.0);
  const double inv = 1.0 / static_cast<double>(rows.size());
  double loss = 0.0;
  for (auto r : rows) {
    m.forward(X.row(r), acts);
    const auto t = static_cast<std::size_t>(y[r]);
    loss -= std::log(std::max(acts.back()[t], 1e-300));
    if (!grad) continue;
    delta = acts.back();
    delta[t] -= 1.0;
    std::size_t off = m.params.size();
    for (std::size_t l = m.layers(); l-- > 0;) {
      const std::size_t in = m.sizes[l], out = m.sizes[l + 1];
      off -= out * (in + 1);
      const double* W = m.params.data() + off;
      double* gW = grad->data() + off;
      double* gb = gW + out * in;
      const auto& prev = acts[l];
      for (std::size_t o = 0; o < out; ++o) {
        const double d = delta[o] * inv;
        gb[o] += d;
        for (std::size_t i = 0; i < in; ++i) gW[o * in + i] += d * prev[i];
      }
      if (l == 0) break;
      next.assign(in, 0.0);
      for (std::size_t o = 0; o < out; ++o) {
        for (std::size_t i = 0; i < in; ++i) next[i] += W[o * in + i] * delta[o];
      }
      for (std::size_t i = 0; i < in; ++i) {
        const double a = prev[i];
        next[i] *= m.activation == Activation::Relu ? (a > 0.0 ? 1.0 : 0.0) : 1.0 - a * a;
      }
      delta.swap(next);
    }
  }
  return loss * inv;
}

inline FeedForwardModel train_feedforward(const Matrix& X, std::span<const int> y,
                                          std::span<const std::size_t> rows,
                                          const FeedForwardParams& hp, TrainingInfo* info = nullptr) {
  detail::check_rows(X, y, rows);
  auto m = FeedForwardModel::random(X.cols(), hp.hidden, hp.activation, hp.seed);
  detail::StepRule opt(hp.optimizer, m.params.size(), hp.learning_rate);
  Rng rng(hp.seed ^ 0xA5A5A5A5ULL);
  std::vector<std::size_t> order(rows.begin(), rows.end());
  std::vector<double> g;
  TrainingInfo ti{hp.seed, 0, 0.0, {}};
  for (int e = 0; e < hp.epochs; ++e) {
    rng.shuffle(order);
    double sum = 0.0;
    for (std::size_t s = 0; s < order.size(); s += hp.batch) {
      const std::size_t end = std::min(order.size(), s + hp.batch);
      std::span<const std::size_t> batch(order.data() + s, end - s);
      sum += ffnn_objective(m, X, y, batch, &g) * static_cast<double>(batch.size());
      opt.step(m.params, g);
    }
    const double loss = sum / static_cast<double>(order.size());
    detail::check_divergence(loss, "ffnn", e + 1);
    ti.loss_history.push_back(loss);
    ti.epochs_run = e + 1;
    ti.final_loss = loss;
  }
  if (info) *info = ti;
  return m;
}

/// Single-layer LSTM over windows of consecutive rows, softmax head on the last
/// hidden state. Gate blocks in the stacked weights are ordered input, forget,
/// output, candidate. Flat layout: W (4H x D), U (4H x H), b (4H), V (5 x H), c (5).
struct LstmModel {
  std::size_t inputs = 0;
  std::size_t hidden = 0;
  std::size_t sequence_length = 1;
  std::vector<double> params;

  static LstmModel zeros(std::size_t d, std::size_t h, std::size_t seq) {
    LstmModel m;
    m.inputs = d;
    m.hidden = h;
    m.sequence_length = seq;
    m.params.assign(4 * h * d + 4 * h * h + 4 * h + kNumClasses * h + kNumClasses, 0.0);
    return m;
  }

  static LstmModel random(std::size_t d, std::size_t h, std::size_t seq, std::uint64_t seed) {
    auto m = zeros(d, h, seq);
    Rng rng(seed);
    const double rw = 1.0 / std::sqrt(static_cast<double>(d));
    const double ru = 1.0 / std::sqrt(static_cast<double>(h));
    for (std::size_t i = 0; i < 4 * h * d; ++i) m.params[m.off_W() + i] = rng.uniform(-rw, rw);
    for (std::size_t i = 0; i < 4 * h * h; ++i) m.params[m.off_U() + i] = rng.uniform(-ru, ru);
    for (std::size_t i = 0; i < kNumClasses * h; ++i) m.params[m.off_V() + i] = rng.uniform(-ru, ru);
    return m;
  }

  std::size_t off_W() const { return 0; }
  std::size_t off_U() const { return 4 * hidden * inputs; }
  std::size_t off_b() const { return off_U() + 4 * hidden * hidden; }
  std::size_t off_V() const { return off_b() + 4 * hidden; }
  std::size_t off_c() const { return off_V() + kNumClasses * hidden; }

  /// Per-step state kept for backpropagation through time.
  struct Trace {
    std::vector<const double*> x;
    std::vector<double> gates;  // steps x 4H, post-activation
    std::vector<double> c;      // (steps + 1) x H, c[0] = 0
    std::vector<double> h;      // (steps + 1) x H, h[0] = 0
    Proba p{};
  };

  /// Runs the window; a null step pointer is a zero (padding) input.
  void forward(std::span<const double* const> steps, Trace& tr) const {
    const std::size_t H = hidden, D = inputs, T = steps.size();
    tr.x.assign(steps.begin(), steps.end());
    tr.gates.assign(T * 4 * H, 0.0);
    tr.c.assign((T + 1) * H, 0.0);
    tr.h.assign((T + 1) * H, 0.0);
    const double* W = params.data() + off_W();
    const double* U = params.data() + off_U();
    const double* b = params.data() + off_b();
    for (std::size_t t = 0; t < T; ++t) {
      double* z = tr.gates.data() + t * 4 * H;
      const double* hp = tr.h.data() + t * H;
      const double* x = steps[t];
      for (std::size_t r = 0; r < 4 * H; ++r) {
        double s = b[r];
        if (x) {
          const double* w = W + r * D;
          for (std::size_t j = 0; j < D; ++j) s += w[j] * x[j];
        }
        const double* u = U + r * H;
        for (std::size_t j = 0; j < H; ++j) s += u[j] * hp[j];
        z[r] = r < 3 * H ? detail::sigmoid(s) : std::tanh(s);
      }
      const double* cp = tr.c.data() + t * H;
      double* cn = tr.c.data() + (t + 1) * H;
      double* hn = tr.h.data() + (t + 1) * H;
      for (std::size_t k = 0; k < H; ++k) {
        cn[k] = z[H + k] * cp[k] + z[k] * z[3 * H + k];
        hn[k] = z[2 * H + k] * std::tanh(cn[k]);
      }
    }
    const double* V = params.data() + off_V();
    const double* c = params.data() + off_c();
    const double* hl = tr.h.data() + T * H;
    for (std::size_t k = 0; k < kNumClasses; ++k) {
      double s = c[k];
      for (std::size_t j = 0; j < H; ++j) s += V[k * H + j] * hl[j];
      tr.p[k] = s;
    }
    detail::softmax_inplace(tr.p);
  }

  /// Accumulates scale * d(-log p[target])/d(params) into grad.
  void backward(const Trace& tr, int target, double scale, std::vector<double>& grad) const {
    const std::size_t H = hidden, D = inputs, T = tr.x.size();
    const double* U = params.data() + off_U();
    const double* V = params.data() + off_V();
    double* gW = grad.data() + off_W();
    double* gU = grad.data() + off_U();
    double* gb = grad.data() + off_b();
    double* gV = grad.data() + off_V();
    double* gc = grad.data() + off_c();
    std::vector<double> dh(H, 0.0), dc(H, 0.0), dz(4 * H), dh_prev(H);
    const double* hl = tr.h.data() + T * H;
    for (std::size_t k = 0; k < kNumClasses; ++k) {
      const double d = (tr.p[k] - (static_cast<int>(k) == target ? 1.0 : 0.0)) * scale;
      gc[k] += d;
      for (std::size_t j = 0; j < H; ++j) {
        gV[k * H + j] += d * hl[j];
        dh[j] += d * V[k * H + j];
      }
    }
    for (std::size_t t = T; t-- > 0;) {
      const double* z = tr.gates.data() + t * 4 * H;
      const double* cp = tr.c.data() + t * H;
      const double* cn = tr.c.data() + (t + 1) * H;
      const double* hp = tr.h.data() + t * H;
      for (std::size_t k = 0; k < H; ++k) {
        const double i = z[k], f = z[H + k], o = z[2 * H + k], g = z[3 * H + k];
        const double tc = std::tanh(cn[k]);
        dc[k] += dh[k] * o * (1.0 - tc * tc);
        dz[k] = dc[k] * g * i * (1.0 - i);
        dz[H + k] = dc[k] * cp[k] * f * (1.0 - f);
        dz[2 * H + k] = dh[k] * tc * o * (1.0 - o);
        dz[3 * H + k] = dc[k] * i * (1.0 - g * g);
        dc[k] *= f;
      }
      std::fill(dh_prev.begin(), dh_prev.end(), 0.0);
      const double* x = tr.x[t];
      for (std::size_t r = 0; r < 4 * H; ++r) {
        const double d = dz[r];
        if (d == 0.0) continue;
        gb[r] += d;
        if (x) {
          double* w = gW + r * D;
          for (std::size_t j = 0; j < D; ++j) w[j] += d * x[j];
        }
        double* u = gU + r * H;
        const double* ur = U + r * H;
        for (std::size_t j = 0; j < H; ++j) {
          u[j] += d * hp[j];
          dh_prev[j] += ur[j] * d;
        }
      }
      dh.swap(dh_prev);
    }
  }

  /// Window of `sequence_length` rows ending at `end`; rows before 0 are padding.
  void window(const Matrix& X, std::size_t end, std::vector<const double*>& steps) const {
    steps.assign(sequence_length, nullptr);
    for (std::size_t s = 0; s < sequence_length; ++s) {
      const std::size_t back = sequence_length - 1 - s;
      if (end >= back) steps[s] = X.row(end - back).data();
    }
  }

  Proba predict_window(std::span<const double* const> steps) const {
    Trace tr;
    forward(steps, tr);
    return tr.p;
  }

  Proba predict_at(const Matrix& X, std::size_t end) const {
    std::vector<const double*> steps;
    window(X, end, steps);
    return predict_window(steps);
  }
};

/// Mean cross-entropy over the windows ending at `ends`.
inline double lstm_objective(const LstmModel& m, const Matrix& X, std::span<const int> y,
                             std::span<const std::size_t> ends, std::vector<double>* grad = nullptr) {
  if (grad) grad->assign(m.params.size(), 0.0);
  const double inv = 1.0 / static_cast<double>(ends.size());
  double loss = 0.0;
  LstmModel::Trace tr;
  std::vector<const double*> steps;
  for (auto e : ends) {
    m.window(X, e, steps);
    m.forward(steps, tr);
    loss -= std::log(std::max(tr.p[static_cast<std::size_t>(y[e])], 1e-300));
    if (grad) m.backward(tr, y[e], inv, *grad);
  }
  return loss * inv;
}

inline LstmModel train_lstm(const Matrix& X, std::span<const int> y, std::span<const std::size_t> ends,
                            const LstmParams& hp, TrainingInfo* info = nullptr) {
  detail::check_rows(X, y, ends);
  if (hp.sequence_length < 1) throw DataError("lstm: sequence length must be >= 1");
  auto m = LstmModel::random(X.cols(), hp.hidden, hp.sequence_length, hp.seed);
  detail::StepRule opt(hp.optimizer, m.params.size(), hp.learning_rate);
  Rng rng(hp.seed ^ 0x5A5A5A5AULL);
  std::vector<std::size_t> order(ends.begin(), ends.end());
  std::vector<double> g;
  TrainingInfo ti{hp.seed, 0, 0.0, {}};
  for (int e = 0; e < hp.epochs; ++e) {
    rng.shuffle(order);
    double sum = 0.0;
    for (std::size_t s = 0; s < order.size(); s += hp.batch) {
      const std::size_t end = std::min(order.size(), s + hp.batch);
      std::span<const std::size_t> batch(order.data() + s, end - s);
      sum += lstm_objective(m, X, y, batch, &g) * static_cast<double>(batch.size());
      opt.step(m.params, g);
    }
    const double loss = sum / static_cast<double>(order.size());
    detail::check_divergence(loss, "lstm", e + 1);
    ti.loss_history.push_back(loss);
    ti.epochs_run = e + 1;
    ti.final_loss = loss;
  }
  if (info) *info = ti;
  return m;
}

}  // namespace canids
