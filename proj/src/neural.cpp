#include "fedseq/neural.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "dual.hpp"
#include "fedseq/rng.hpp"

namespace fedseq {

void validate(const ModelConfig& cfg) {
  if (cfg.vocab_size < 2) throw std::invalid_argument("model: vocab_size must be >= 2");
  if (cfg.embed_dim < 1) throw std::invalid_argument("model: embed_dim must be >= 1");
  if (cfg.hidden_size < 1) throw std::invalid_argument("model: hidden_size must be >= 1");
  if (cfg.lanes < 1) throw std::invalid_argument("model: lanes must be >= 1");
  if (!(cfg.learning_rate > 0)) throw std::invalid_argument("model: learning_rate must be > 0");
}

ParamLayout ParamLayout::make(const ModelConfig& cfg) {
  ParamLayout l;
  l.V = cfg.vocab_size;
  l.D = cfg.embed_dim;
  l.H = cfg.hidden_size;
  l.N = cfg.lanes;
  l.gate_block = std::size_t(l.H) * l.D + std::size_t(l.H) * l.H + l.H;
  l.lanes_off = std::size_t(l.V) * l.D;
  l.out_gate_off = l.lanes_off + std::size_t(l.N) * 3 * l.gate_block;
  l.proj_w_off = l.out_gate_off + l.gate_block;
  l.proj_b_off = l.proj_w_off + std::size_t(l.V) * l.H;
  l.total = l.proj_b_off + l.V;
  return l;
}

std::size_t param_count(const ModelConfig& cfg) { return ParamLayout::make(cfg).total; }

ParamVector init_params(const ModelConfig& cfg) {
  validate(cfg);
  const ParamLayout l = ParamLayout::make(cfg);
  ParamVector p(l.total, 0.0);
  Rng rng(mix_seed(cfg.seed, 0x1417));
  // Weights uniform(-0.1, 0.1); biases stay zero.
  auto fill = [&](std::size_t off, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) p[off + i] = rng.uniform(-0.1, 0.1);
  };
  fill(0, std::size_t(l.V) * l.D);
  for (std::uint32_t k = 0; k < l.N; ++k) {
    for (int g = 0; g < 3; ++g) {
      fill(l.w(k, g), std::size_t(l.H) * l.D);
      fill(l.u(k, g), std::size_t(l.H) * l.H);
    }
  }
  fill(l.wo(), std::size_t(l.H) * l.D);
  fill(l.uo(), std::size_t(l.H) * l.H);
  fill(l.proj_w_off, std::size_t(l.V) * l.H);
  return p;
}

CellState zero_state(const ModelConfig& cfg) {
  return CellState{std::vector<double>(cfg.hidden_size, 0.0),
                   std::vector<double>(std::size_t(cfg.lanes) * cfg.hidden_size, 0.0)};
}

namespace {

template <class S>
S sig(const S& x) {
  return S(1.0) / (S(1.0) + exp(-x));
}

// y += M x, M row-major (rows x cols)
template <class S>
void matvec_add(const S* M, const S* x, S* y, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    S acc = y[r];
    const S* row = M + r * cols;
    for (std::size_t c = 0; c < cols; ++c) acc += row[c] * x[c];
    y[r] = acc;
  }
}

// dx += M^T dy
template <class S>
void matvec_t_add(const S* M, const S* dy, S* dx, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    const S* row = M + r * cols;
    const S g = dy[r];
    for (std::size_t c = 0; c < cols; ++c) dx[c] += row[c] * g;
  }
}

// dM += dy x^T
template <class S>
void outer_add(S* dM, const S* dy, const S* x, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    S* row = dM + r * cols;
    const S g = dy[r];
    for (std::size_t c = 0; c < cols; ++c) row[c] += g * x[c];
  }
}

template <class S>
struct SeqCache {
  // Per-step activations, lane-major where applicable.
  std::vector<std::vector<S>> f, i, ct, c;  // N*H each step
  std::vector<std::vector<S>> o, tc, h;     // H each step: out gate, tanh(mean c), hidden
  std::vector<S> logits;                    // V

  void resize(std::size_t steps, std::size_t nh, std::size_t h_sz) {
    auto grow = [steps](std::vector<std::vector<S>>& v, std::size_t dim) {
      v.resize(steps);
      for (auto& e : v) e.assign(dim, S(0.0));
    };
    grow(f, nh);
    grow(i, nh);
    grow(ct, nh);
    grow(c, nh);
    grow(o, h_sz);
    grow(tc, h_sz);
    grow(h, h_sz);
  }
};

// Runs the recurrence over the history and fills the cache; logits from the
// final hidden state.
template <class S>
void forward_seq(const ParamLayout& l, const S* p, const EventSequence& seq,
                 SeqCache<S>& cache) {
  const std::size_t T = seq.history_size();
  const std::size_t H = l.H, D = l.D, N = l.N;
  cache.resize(T, N * H, H);

  std::vector<S> pre(H);
  const S inv_n = S(1.0 / double(N));
  for (std::size_t t = 0; t < T; ++t) {
    const EventId id = seq.events[t].id;
    if (id >= l.V) {
      throw std::invalid_argument("event id " + std::to_string(id) + " >= vocab size " +
                                  std::to_string(l.V));
    }
    const S* x = p + std::size_t(id) * D;
    const S* h_prev = t > 0 ? cache.h[t - 1].data() : nullptr;
    const S* c_prev = t > 0 ? cache.c[t - 1].data() : nullptr;

    auto gate_pre = [&](std::size_t w_off, std::size_t u_off, std::size_t b_off) {
      for (std::size_t j = 0; j < H; ++j) pre[j] = p[b_off + j];
      matvec_add(p + w_off, x, pre.data(), H, D);
      if (h_prev) matvec_add(p + u_off, h_prev, pre.data(), H, H);
    };

    std::vector<S>& tc = cache.tc[t];
    for (std::uint32_t k = 0; k < N; ++k) {
      gate_pre(l.w(k, 0), l.u(k, 0), l.b(k, 0));
      for (std::size_t j = 0; j < H; ++j) cache.f[t][k * H + j] = sig(pre[j]);
      gate_pre(l.w(k, 1), l.u(k, 1), l.b(k, 1));
      for (std::size_t j = 0; j < H; ++j) cache.i[t][k * H + j] = sig(pre[j]);
      gate_pre(l.w(k, 2), l.u(k, 2), l.b(k, 2));
      for (std::size_t j = 0; j < H; ++j) cache.ct[t][k * H + j] = tanh(pre[j]);
      for (std::size_t j = 0; j < H; ++j) {
        const S cp = c_prev ? c_prev[k * H + j] : S(0.0);
        cache.c[t][k * H + j] =
            cache.f[t][k * H + j] * cp + cache.i[t][k * H + j] * cache.ct[t][k * H + j];
      }
    }
    gate_pre(l.wo(), l.uo(), l.bo());
    for (std::size_t j = 0; j < H; ++j) cache.o[t][j] = sig(pre[j]);

    for (std::size_t j = 0; j < H; ++j) {
      S mean = S(0.0);
      for (std::uint32_t k = 0; k < N; ++k) mean += cache.c[t][k * H + j];
      tc[j] = tanh(mean * inv_n);
      cache.h[t][j] = cache.o[t][j] * tc[j];
    }
  }

  cache.logits.assign(l.V, S(0.0));
  for (std::size_t j = 0; j < l.V; ++j) cache.logits[j] = p[l.proj_b_off + j];
  matvec_add(p + l.proj_w_off, cache.h[T - 1].data(), cache.logits.data(), l.V, H);
}

template <class S>
S cross_entropy_from_logits(const std::vector<S>& logits, EventId label,
                            std::vector<S>* softmax_out) {
  S mx = logits[0];
  for (const S& z : logits)
    if (z > mx) mx = z;
  S sum = S(0.0);
  std::vector<S> ex(logits.size());
  for (std::size_t j = 0; j < logits.size(); ++j) {
    ex[j] = exp(logits[j] - mx);
    sum += ex[j];
  }
  if (softmax_out) {
    softmax_out->resize(logits.size());
    for (std::size_t j = 0; j < logits.size(); ++j) (*softmax_out)[j] = ex[j] / sum;
  }
  return log(sum) - (logits[label] - mx);
}

// BPTT over one sequence; accumulates scale * d(CE)/d(params) into grad.
template <class S>
S backward_seq(const ParamLayout& l, const S* p, const EventSequence& seq,
               const SeqCache<S>& cache, const S& scale, S* grad) {
  const std::size_t T = seq.history_size();
  const std::size_t H = l.H, D = l.D, N = l.N;
  const EventId label = seq.label();
  if (label >= l.V) {
    throw std::invalid_argument("label " + std::to_string(label) + " >= vocab size");
  }

  std::vector<S> dlogits;
  const S loss = cross_entropy_from_logits(cache.logits, label, &dlogits);
  dlogits[label] -= S(1.0);
  for (S& g : dlogits) g *= scale;

  // Output projection.
  for (std::size_t j = 0; j < l.V; ++j) grad[l.proj_b_off + j] += dlogits[j];
  outer_add(grad + l.proj_w_off, dlogits.data(), cache.h[T - 1].data(), l.V, H);

  std::vector<S> dh(H, S(0.0)), dh_prev(H), dx(D), da(H);
  std::vector<S> dc(N * H, S(0.0)), dc_prev(N * H);
  matvec_t_add(p + l.proj_w_off, dlogits.data(), dh.data(), l.V, H);

  const S inv_n = S(1.0 / double(N));
  for (std::size_t t = T; t-- > 0;) {
    const EventId id = seq.events[t].id;
    const S* x = p + std::size_t(id) * D;
    const S* h_prev = t > 0 ? cache.h[t - 1].data() : nullptr;
    const S* c_prev = t > 0 ? cache.c[t - 1].data() : nullptr;
    std::fill(dh_prev.begin(), dh_prev.end(), S(0.0));
    std::fill(dc_prev.begin(), dc_prev.end(), S(0.0));
    std::fill(dx.begin(), dx.end(), S(0.0));

    auto gate_backprop = [&](std::size_t w_off, std::size_t u_off, std::size_t b_off) {
      for (std::size_t j = 0; j < H; ++j) grad[b_off + j] += da[j];
      outer_add(grad + w_off, da.data(), x, H, D);
      matvec_t_add(p + w_off, da.data(), dx.data(), H, D);
      if (h_prev) {
        outer_add(grad + u_off, da.data(), h_prev, H, H);
        matvec_t_add(p + u_off, da.data(), dh_prev.data(), H, H);
      }
    };

    // h = o . tanh(mean_k c_k)
    for (std::size_t j = 0; j < H; ++j) {
      const S tc = cache.tc[t][j];
      da[j] = dh[j] * tc;  // d pre-activation of o, staged below
      const S dtc = dh[j] * cache.o[t][j] * (S(1.0) - tc * tc) * inv_n;
      for (std::uint32_t k = 0; k < N; ++k) dc[k * H + j] += dtc;
    }
    for (std::size_t j = 0; j < H; ++j) {
      const S o = cache.o[t][j];
      da[j] = da[j] * o * (S(1.0) - o);
    }
    gate_backprop(l.wo(), l.uo(), l.bo());

    for (std::uint32_t k = 0; k < N; ++k) {
      const std::size_t off = k * H;
      // forget gate
      for (std::size_t j = 0; j < H; ++j) {
        const S f = cache.f[t][off + j];
        const S cp = c_prev ? c_prev[off + j] : S(0.0);
        dc_prev[off + j] = dc[off + j] * f;
        da[j] = dc[off + j] * cp * f * (S(1.0) - f);
      }
      gate_backprop(l.w(k, 0), l.u(k, 0), l.b(k, 0));
      // input gate
      for (std::size_t j = 0; j < H; ++j) {
        const S i = cache.i[t][off + j];
        da[j] = dc[off + j] * cache.ct[t][off + j] * i * (S(1.0) - i);
      }
      gate_backprop(l.w(k, 1), l.u(k, 1), l.b(k, 1));
      // candidate
      for (std::size_t j = 0; j < H; ++j) {
        const S ct = cache.ct[t][off + j];
        da[j] = dc[off + j] * cache.i[t][off + j] * (S(1.0) - ct * ct);
      }
      gate_backprop(l.w(k, 2), l.u(k, 2), l.b(k, 2));
    }

    // Embedding row of this step's input.
    S* erow = grad + std::size_t(id) * D;
    for (std::size_t j = 0; j < D; ++j) erow[j] += dx[j];

    std::swap(dh, dh_prev);
    std::swap(dc, dc_prev);
  }
  return loss * scale;
}

template <class S>
std::pair<S, std::vector<S>> batch_loss_and_gradient(
    const ParamLayout& l, const S* p, const std::vector<const EventSequence*>& batch) {
  std::vector<S> grad(l.total, S(0.0));
  SeqCache<S> cache;
  S loss = S(0.0);
  const S scale = S(1.0 / double(batch.size()));
  for (const EventSequence* seq : batch) {
    if (seq->events.size() < 2) {
      throw std::invalid_argument("sequence needs at least one history event and a label");
    }
    forward_seq(l, p, *seq, cache);
    loss += backward_seq(l, p, *seq, cache, scale, grad.data());
  }
  return {loss, std::move(grad)};
}

std::vector<const EventSequence*> as_pointers(const EventCorpus& data) {
  std::vector<const EventSequence*> out;
  out.reserve(data.size());
  for (const auto& s : data.sequences) out.push_back(&s);
  return out;
}

void check_finite(std::span<const double> v, const char* what) {
  for (double x : v) {
    if (!std::isfinite(x)) throw std::invalid_argument(std::string(what) + " has non-finite entries");
  }
}

double global_norm(const ParamVector& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

CellState cell_step(const ModelConfig& cfg, const ParamVector& params,
                    std::span<const double> x, const CellState& state) {
  validate(cfg);
  const ParamLayout l = ParamLayout::make(cfg);
  if (params.size() != l.total) throw std::invalid_argument("cell_step: parameter size mismatch");
  if (x.size() != l.D) throw std::invalid_argument("cell_step: input dimension mismatch");
  if (state.h.size() != l.H || state.c.size() != std::size_t(l.N) * l.H) {
    throw std::invalid_argument("cell_step: state dimension mismatch");
  }
  check_finite(x, "cell_step input");
  check_finite(state.h, "cell_step state");

  // Reuse the sequence path with a one-step pseudo-sequence whose embedding
  // would normally supply x; here we inline the step directly.
  const std::size_t H = l.H, D = l.D, N = l.N;
  const double* p = params.data();
  std::vector<double> pre(H);
  auto gate_pre = [&](std::size_t w_off, std::size_t u_off, std::size_t b_off) {
    for (std::size_t j = 0; j < H; ++j) pre[j] = p[b_off + j];
    matvec_add(p + w_off, x.data(), pre.data(), H, D);
    matvec_add(p + u_off, state.h.data(), pre.data(), H, H);
  };

  CellState next = zero_state(cfg);
  for (std::uint32_t k = 0; k < N; ++k) {
    std::vector<double> f(H), i(H), ct(H);
    gate_pre(l.w(k, 0), l.u(k, 0), l.b(k, 0));
    for (std::size_t j = 0; j < H; ++j) f[j] = sig(pre[j]);
    gate_pre(l.w(k, 1), l.u(k, 1), l.b(k, 1));
    for (std::size_t j = 0; j < H; ++j) i[j] = sig(pre[j]);
    gate_pre(l.w(k, 2), l.u(k, 2), l.b(k, 2));
    for (std::size_t j = 0; j < H; ++j) ct[j] = std::tanh(pre[j]);
    for (std::size_t j = 0; j < H; ++j) {
      next.c[k * H + j] = f[j] * state.c[k * H + j] + i[j] * ct[j];
    }
  }
  gate_pre(l.wo(), l.uo(), l.bo());
  for (std::size_t j = 0; j < H; ++j) {
    double mean = 0.0;
    for (std::uint32_t k = 0; k < N; ++k) mean += next.c[k * H + j];
    next.h[j] = sig(pre[j]) * std::tanh(mean / double(N));
  }
  return next;
}

std::vector<double> forward_logits(const ModelConfig& cfg, const ParamVector& params,
                                   const EventSequence& seq) {
  validate(cfg);
  const ParamLayout l = ParamLayout::make(cfg);
  if (params.size() != l.total) throw std::invalid_argument("forward: parameter size mismatch");
  if (seq.events.size() < 2) {
    throw std::invalid_argument("forward: sequence needs at least one history event");
  }
  if (seq.label() >= l.V) {
    throw std::invalid_argument("label " + std::to_string(seq.label()) + " >= vocab size " +
                                std::to_string(l.V));
  }
  SeqCache<double> cache;
  forward_seq(l, params.data(), seq, cache);
  return cache.logits;
}

double sequence_loss(const ModelConfig& cfg, const ParamVector& params,
                     const EventSequence& seq) {
  const auto logits = forward_logits(cfg, params, seq);
  return value_of(cross_entropy_from_logits<double>(logits, seq.label(), nullptr));
}

double mean_loss(const ModelConfig& cfg, const ParamVector& params,
                 const std::vector<const EventSequence*>& batch) {
  if (batch.empty()) throw std::invalid_argument("mean_loss: empty batch");
  double s = 0.0;
  for (const EventSequence* q : batch) s += sequence_loss(cfg, params, *q);
  return s / double(batch.size());
}

double mean_loss(const ModelConfig& cfg, const ParamVector& params, const EventCorpus& data) {
  return mean_loss(cfg, params, as_pointers(data));
}

std::pair<double, ParamVector> loss_and_gradient(const ModelConfig& cfg,
                                                 const ParamVector& params,
                                                 const std::vector<const EventSequence*>& batch) {
  validate(cfg);
  if (batch.empty()) throw std::invalid_argument("loss_and_gradient: empty batch");
  const ParamLayout l = ParamLayout::make(cfg);
  if (params.size() != l.total) throw std::invalid_argument("loss_and_gradient: size mismatch");
  return batch_loss_and_gradient(l, params.data(), batch);
}

std::pair<double, ParamVector> loss_and_gradient(const ModelConfig& cfg,
                                                 const ParamVector& params,
                                                 const EventCorpus& data) {
  return loss_and_gradient(cfg, params, as_pointers(data));
}

ParamVector hessian_vector_product(const ModelConfig& cfg, const ParamVector& params,
                                   const std::vector<const EventSequence*>& batch,
                                   const ParamVector& v) {
  validate(cfg);
  if (batch.empty()) throw std::invalid_argument("hvp: empty batch");
  const ParamLayout l = ParamLayout::make(cfg);
  if (params.size() != l.total || v.size() != l.total) {
    throw std::invalid_argument("hvp: size mismatch");
  }
  std::vector<Dual> dp(l.total);
  for (std::size_t i = 0; i < l.total; ++i) dp[i] = Dual(params[i], v[i]);
  auto [loss, grad] = batch_loss_and_gradient(l, dp.data(), batch);
  (void)loss;
  ParamVector hv(l.total);
  for (std::size_t i = 0; i < l.total; ++i) hv[i] = grad[i].d;
  return hv;
}

ParamVector hessian_vector_product(const ModelConfig& cfg, const ParamVector& params,
                                   const EventCorpus& data, const ParamVector& v) {
  return hessian_vector_product(cfg, params, as_pointers(data), v);
}

ParamVector local_train(const ModelConfig& cfg, const ParamVector& params,
                        const EventCorpus& data, std::uint32_t epochs, double learning_rate,
                        std::uint32_t batch_size, std::uint64_t seed,
                        const TrainOptions& opts) {
  validate(cfg);
  if (data.empty()) throw std::invalid_argument("local_train: empty dataset");
  if (epochs < 1) throw std::invalid_argument("local_train: epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("local_train: batch_size must be >= 1");

  const ParamLayout l = ParamLayout::make(cfg);
  if (params.size() != l.total) throw std::invalid_argument("local_train: size mismatch");

  ParamVector theta = params;
  const ParamVector& start = params;
  Rng rng(mix_seed(seed, 0x7a15));
  const std::size_t n = data.size();
  std::vector<const EventSequence*> batch;

  for (std::uint32_t e = 0; e < epochs; ++e) {
    const auto perm = rng.permutation(n);
    for (std::size_t begin = 0; begin < n; begin += batch_size) {
      const std::size_t end = std::min(n, begin + batch_size);
      batch.clear();
      for (std::size_t i = begin; i < end; ++i) batch.push_back(&data.sequences[perm[i]]);
      auto [loss, grad] = batch_loss_and_gradient(l, theta.data(), batch);
      (void)loss;

      if (opts.grad_clip > 0) {
        const double norm = global_norm(grad);
        if (norm > opts.grad_clip) {
          const double s = opts.grad_clip / norm;
          for (double& g : grad) g *= s;
        }
      }
      for (std::size_t i = 0; i < l.total; ++i) theta[i] -= learning_rate * grad[i];

      if (opts.delta_clip) {
        double norm2 = 0.0;
        for (std::size_t i = 0; i < l.total; ++i) {
          const double d = theta[i] - start[i];
          norm2 += d * d;
        }
        const double norm = std::sqrt(norm2);
        if (norm > *opts.delta_clip) {
          const double s = *opts.delta_clip / norm;
          for (std::size_t i = 0; i < l.total; ++i) {
            theta[i] = start[i] + (theta[i] - start[i]) * s;
          }
        }
      }
    }
  }
  return theta;
}

EventId predict(const ModelConfig& cfg, const ParamVector& params, const EventSequence& seq) {
  const auto logits = forward_logits(cfg, params, seq);
  std::size_t best = 0;
  for (std::size_t j = 1; j < logits.size(); ++j) {
    if (logits[j] > logits[best]) best = j;
  }
  return static_cast<EventId>(best);
}

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t(b[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t(b[i]) << (8 * i);
  return v;
}

constexpr char kMagic[8] = {'F', 'S', 'E', 'Q', 'P', 'R', 'M', '\0'};
constexpr std::uint32_t kLayoutVersion = 1;

}  // namespace

void save_checkpoint(const ModelConfig& cfg, const ParamVector& params,
                     const std::string& path) {
  const ParamLayout l = ParamLayout::make(cfg);
  if (params.size() != l.total) throw std::invalid_argument("checkpoint: size mismatch");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out.write(kMagic, 8);
  put_u32(out, kLayoutVersion);
  put_u32(out, cfg.vocab_size);
  put_u32(out, cfg.embed_dim);
  put_u32(out, cfg.hidden_size);
  put_u32(out, cfg.lanes);
  put_u64(out, params.size());
  for (double x : params) put_u64(out, std::bit_cast<std::uint64_t>(x));
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::pair<ModelConfig, ParamVector> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0) {
    throw std::runtime_error("not a parameter checkpoint: " + path);
  }
  const std::uint32_t version = get_u32(in);
  if (version != kLayoutVersion) {
    throw std::runtime_error("unsupported checkpoint layout version " + std::to_string(version));
  }
  ModelConfig cfg;
  cfg.vocab_size = get_u32(in);
  cfg.embed_dim = get_u32(in);
  cfg.hidden_size = get_u32(in);
  cfg.lanes = get_u32(in);
  const std::uint64_t n = get_u64(in);
  if (n != param_count(cfg)) throw std::runtime_error("checkpoint size inconsistent with header");
  ParamVector params(n);
  for (auto& x : params) x = std::bit_cast<double>(get_u64(in));
  if (!in) throw std::runtime_error("truncated checkpoint: " + path);
  return {cfg, std::move(params)};
}

}  // namespace fedseq
