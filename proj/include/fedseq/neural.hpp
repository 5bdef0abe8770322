#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fedseq/events.hpp"

namespace fedseq {

// Next-event predictor: a single-layer recurrent cell with N parallel gated
// memory lanes. Each lane has its own forget/input/candidate gates acting on
// its own cell state; one shared output gate reads the lane-averaged state.
// With N=1 this is exactly the classic gated step
//   f = sig(Wf x + Uf h + bf), i = sig(Wi x + Ui h + bi),
//   o = sig(Wo x + Uo h + bo), c~ = tanh(Wc x + Uc h + bc),
//   c' = f.c + i.c~,           h' = o.tanh(c').
struct ModelConfig {
  std::uint32_t vocab_size = 0;   // V
  std::uint32_t embed_dim = 16;   // D
  std::uint32_t hidden_size = 128;  // H
  std::uint32_t lanes = 4;        // N
  double learning_rate = 2.0;     // plain SGD needs a large step at this scale
  std::uint64_t seed = 1;
};

void validate(const ModelConfig& cfg);

// All parameters live in one flat vector with a fixed canonical layout:
//   [embedding V*D]
//   [lane 0: Wf H*D, Uf H*H, bf H, Wi.., Ui.., bi.., Wc.., Uc.., bc..]
//   ... lanes 1..N-1 ...
//   [shared: Wo H*D, Uo H*H, bo H]
//   [output projection: Wy V*H, by V]
using ParamVector = std::vector<double>;

struct ParamLayout {
  std::uint32_t V = 0, D = 0, H = 0, N = 0;
  std::size_t gate_block = 0;  // H*D + H*H + H
  std::size_t lanes_off = 0;
  std::size_t out_gate_off = 0;
  std::size_t proj_w_off = 0;
  std::size_t proj_b_off = 0;
  std::size_t total = 0;

  static ParamLayout make(const ModelConfig& cfg);

  // gate: 0 = forget, 1 = input, 2 = candidate
  std::size_t w(std::uint32_t lane, int gate) const {
    return lanes_off + (std::size_t(lane) * 3 + std::size_t(gate)) * gate_block;
  }
  std::size_t u(std::uint32_t lane, int gate) const {
    return w(lane, gate) + std::size_t(H) * D;
  }
  std::size_t b(std::uint32_t lane, int gate) const {
    return u(lane, gate) + std::size_t(H) * H;
  }
  std::size_t wo() const { return out_gate_off; }
  std::size_t uo() const { return out_gate_off + std::size_t(H) * D; }
  std::size_t bo() const { return uo() + std::size_t(H) * H; }
};

std::size_t param_count(const ModelConfig& cfg);

// Seeded uniform(-0.1, 0.1) weights, zero biases.
ParamVector init_params(const ModelConfig& cfg);

struct CellState {
  std::vector<double> h;  // H
  std::vector<double> c;  // N*H, lane-major
};

CellState zero_state(const ModelConfig& cfg);

// One recurrent step on an already-embedded input.
CellState cell_step(const ModelConfig& cfg, const ParamVector& params,
                    std::span<const double> x, const CellState& state);

// Logits over the V event types after consuming the sequence history.
std::vector<double> forward_logits(const ModelConfig& cfg, const ParamVector& params,
                                   const EventSequence& seq);

double sequence_loss(const ModelConfig& cfg, const ParamVector& params,
                     const EventSequence& seq);
double mean_loss(const ModelConfig& cfg, const ParamVector& params,
                 const std::vector<const EventSequence*>& batch);
double mean_loss(const ModelConfig& cfg, const ParamVector& params, const EventCorpus& data);

// Mean cross-entropy over the batch and its gradient via backpropagation
// through time.
std::pair<double, ParamVector> loss_and_gradient(const ModelConfig& cfg,
                                                 const ParamVector& params,
                                                 const std::vector<const EventSequence*>& batch);
std::pair<double, ParamVector> loss_and_gradient(const ModelConfig& cfg,
                                                 const ParamVector& params,
                                                 const EventCorpus& data);

// Exact H*v for the mean batch loss, by differentiating the gradient in the
// direction v (forward-mode pass threaded through the same BPTT code path).
ParamVector hessian_vector_product(const ModelConfig& cfg, const ParamVector& params,
                                   const std::vector<const EventSequence*>& batch,
                                   const ParamVector& v);
ParamVector hessian_vector_product(const ModelConfig& cfg, const ParamVector& params,
                                   const EventCorpus& data, const ParamVector& v);

struct TrainOptions {
  double grad_clip = 5.0;  // global-norm clip per minibatch step
  // When set, the cumulative parameter delta from the training start is
  // re-projected onto the L2 ball of this radius after every batch step.
  std::optional<double> delta_clip;
};

// Seeded-shuffle minibatch SGD for `epochs` passes; returns the new params.
ParamVector local_train(const ModelConfig& cfg, const ParamVector& params,
                        const EventCorpus& data, std::uint32_t epochs, double learning_rate,
                        std::uint32_t batch_size, std::uint64_t seed,
                        const TrainOptions& opts = {});

// Highest-probability next event; ties go to the lowest event id.
EventId predict(const ModelConfig& cfg, const ParamVector& params, const EventSequence& seq);

// Checkpoint format: magic, layout version, V/D/H/N, then the flat parameter
// vector as little-endian 64-bit floats.
void save_checkpoint(const ModelConfig& cfg, const ParamVector& params,
                     const std::string& path);
std::pair<ModelConfig, ParamVector> load_checkpoint(const std::string& path);

}  // namespace fedseq
