#pragma once

#include <deque>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "hierwalk/rng.hpp"
#include "hierwalk/tape.hpp"
#include "hierwalk/types.hpp"

namespace hierwalk {

/// Named parameter table with stable addresses (tape closures hold pointers
/// into it for the lifetime of a forward/backward pass).
class ParamStore {
 public:
  int add(const std::string& name, int rows, int cols);
  ParamTensor& at(int idx) { return tensors_[idx]; }
  const ParamTensor& at(int idx) const { return tensors_[idx]; }
  ParamTensor& by_name(const std::string& name);
  bool has(const std::string& name) const { return index_.count(name) > 0; }
  int count() const { return static_cast<int>(tensors_.size()); }

  void zero_grad();
  std::vector<Mat> snapshot() const;
  void restore(const std::vector<Mat>& values);

 private:
  std::deque<ParamTensor> tensors_;
  std::map<std::string, int> index_;
};

enum class Activation { ReLU, Tanh };

struct MlpSpec {
  std::vector<int> widths;  // input width first, output width last
  Activation activation = Activation::ReLU;
  bool bias = true;
};

struct MlpParams {
  MlpSpec spec;
  std::vector<int> weights;  // ParamStore indices, one per layer
  std::vector<int> biases;   // empty when spec.bias is false
};

/// Allocates and initializes MLP parameters: weights uniform(-a, a) with
/// a = sqrt(1/fan_in), biases zero.
MlpParams make_mlp(ParamStore& store, const std::string& prefix, MlpSpec spec, Rng& rng);

Var mlp_forward(Tape& t, ParamStore& store, const MlpParams& mlp, Var x);

/// No-tape single-column evaluation (used on sampling hot paths).
Vec mlp_eval(const ParamStore& store, const MlpParams& mlp, const Vec& x);

/// phi_out([x_self || sum_u phi_in(h_u)]); an empty child list contributes a
/// zero aggregate.
Var deepset_pool(Tape& t, ParamStore& store, const MlpParams& phi_in, const MlpParams& phi_out,
                 Var x_self, std::span<const Var> children);

/// Single-layer gated linear recurrence with an output projection:
///   s_t = sigmoid(g(x_t)) (*) s_{t-1} + (1 - sigmoid(g(x_t))) (*) c(x_t)
///   out_t = W_out s_t + b_out
struct SeqEncoderParams {
  int dim = 0;
  int w_gate = -1, b_gate = -1;
  int w_cand = -1, b_cand = -1;
  int w_out = -1, b_out = -1;
};

/// Gate bias starts at +1 so the recurrence begins with long memory.
SeqEncoderParams make_seq_encoder(ParamStore& store, const std::string& prefix, int dim, Rng& rng);

/// Per-step encodings of a causal sequence; inputs must share column counts.
std::vector<Var> seq_encode(Tape& t, ParamStore& store, const SeqEncoderParams& enc,
                            std::span<const Var> inputs);

struct GumbelSample {
  Var var;  // one-hot forward value when hard, soft distribution otherwise
  int chosen = -1;
};

/// Differentiable categorical sample: soft = softmax((logits + g)/tau) with
/// g ~ Gumbel(0,1). With hard=true the forward value is the one-hot argmax
/// while gradients follow the soft relaxation (straight-through).
GumbelSample gumbel_softmax_sample(Tape& t, Var logits, double tau, Rng& rng, bool hard);

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

struct AdamWState {
  AdamWConfig cfg;
  long step = 0;
  std::vector<Mat> m, v;
};

AdamWState make_adamw(const ParamStore& store, AdamWConfig cfg = {});

/// Decoupled-weight-decay update from the gradients currently in the store.
void adamw_step(AdamWState& state, ParamStore& store, double lr);

struct ScheduleSpec {
  double base_lr = 3e-3;
  int warmup_epochs = 5;
  int total_epochs = 200;
};

/// Linear warmup to base_lr, then cosine decay to zero.
double lr_at(const ScheduleSpec& schedule, int epoch);

// Checkpoints: text header, little-endian 64-bit payload per tensor,
// bit-exact across save/load.
struct Checkpoint {
  std::map<std::string, std::string> meta;
  std::vector<std::pair<std::string, Mat>> tensors;
};

void save_checkpoint(const std::string& path, const ParamStore& store,
                     const std::map<std::string, std::string>& meta);
Checkpoint load_checkpoint(const std::string& path);
/// Copies checkpoint tensors into an already-shaped store; name or shape
/// mismatches raise ConfigError.
void load_into_store(const Checkpoint& ckpt, ParamStore& store);

}  // namespace hierwalk
