#include "hierwalk/nn.hpp"
#include <algorithm>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

static_assert(std::endian::native == std::endian::little,
              "checkpoint payload assumes a little-endian host");

namespace hierwalk {

int ParamStore::add(const std::string& name, int rows, int cols) {
  if (index_.count(name)) throw std::invalid_argument("duplicate parameter '" + name + "'");
  if (rows < 1 || cols < 1) throw std::invalid_argument("parameter dims must be positive");
  tensors_.push_back(ParamTensor{name, Mat::Zero(rows, cols), Mat::Zero(rows, cols)});
  index_[name] = static_cast<int>(tensors_.size()) - 1;
  return index_[name];
}

ParamTensor& ParamStore::by_name(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::invalid_argument("unknown parameter '" + name + "'");
  return tensors_[it->second];
}

void ParamStore::zero_grad() {
  for (auto& p : tensors_) p.grad.setZero();
}

std::vector<Mat> ParamStore::snapshot() const {
  std::vector<Mat> out;
  out.reserve(tensors_.size());
  for (const auto& p : tensors_) out.push_back(p.value);
  return out;
}

void ParamStore::restore(const std::vector<Mat>& values) {
  if (values.size() != tensors_.size()) throw std::invalid_argument("snapshot size mismatch");
  for (std::size_t i = 0; i < values.size(); ++i) tensors_[i].value = values[i];
}

MlpParams make_mlp(ParamStore& store, const std::string& prefix, MlpSpec spec, Rng& rng) {
  if (spec.widths.size() < 2) throw std::invalid_argument("mlp needs at least one layer");
  for (int w : spec.widths)
    if (w < 1) throw std::invalid_argument("mlp widths must be positive");
  MlpParams mlp;
  mlp.spec = spec;
  for (std::size_t l = 0; l + 1 < spec.widths.size(); ++l) {
    int fan_in = spec.widths[l];
    int fan_out = spec.widths[l + 1];
    int w = store.add(prefix + ".w" + std::to_string(l), fan_out, fan_in);
    double a = std::sqrt(1.0 / fan_in);
    Mat& wv = store.at(w).value;
    for (Eigen::Index i = 0; i < wv.size(); ++i)
      wv.data()[i] = (2.0 * rng.next_double() - 1.0) * a;
    mlp.weights.push_back(w);
    if (spec.bias) {
      int b = store.add(prefix + ".b" + std::to_string(l), fan_out, 1);
      Mat& bv = store.at(b).value;
      for (Eigen::Index i = 0; i < bv.size(); ++i)
        bv.data()[i] = (2.0 * rng.next_double() - 1.0) * a;
      mlp.biases.push_back(b);
    }
  }
  return mlp;
}

Var mlp_forward(Tape& t, ParamStore& store, const MlpParams& mlp, Var x) {
  if (t.value(x).rows() != mlp.spec.widths.front())
    throw ShapeError("mlp_forward: input has " + std::to_string(t.value(x).rows()) +
                     " rows, spec expects " + std::to_string(mlp.spec.widths.front()));
  Var h = x;
  for (std::size_t l = 0; l < mlp.weights.size(); ++l) {
    ParamTensor* b = mlp.spec.bias ? &store.at(mlp.biases[l]) : nullptr;
    h = linear(t, store.at(mlp.weights[l]), b, h);
    if (l + 1 < mlp.weights.size())
      h = mlp.spec.activation == Activation::ReLU ? relu(t, h) : tanh_act(t, h);
  }
  return h;
}

Vec mlp_eval(const ParamStore& store, const MlpParams& mlp, const Vec& x) {
  Vec h = x;
  for (std::size_t l = 0; l < mlp.weights.size(); ++l) {
    h = store.at(mlp.weights[l]).value * h;
    if (mlp.spec.bias) h += store.at(mlp.biases[l]).value.col(0);
    if (l + 1 < mlp.weights.size()) {
      if (mlp.spec.activation == Activation::ReLU)
        h = h.cwiseMax(0.0);
      else
        h = h.array().tanh().matrix();
    }
  }
  return h;
}

Var deepset_pool(Tape& t, ParamStore& store, const MlpParams& phi_in, const MlpParams& phi_out,
                 Var x_self, std::span<const Var> children) {
  Var agg;
  if (children.empty()) {
    agg = t.leaf(Mat::Zero(phi_in.spec.widths.back(), t.value(x_self).cols()));
  } else {
    // Accumulate in node-creation order so a permuted child list sums in the
    // same sequence and stays bit-identical.
    std::vector<Var> ordered(children.begin(), children.end());
    std::sort(ordered.begin(), ordered.end(), [](Var a, Var b) { return a.id < b.id; });
    for (Var c : ordered) {
      Var mapped = mlp_forward(t, store, phi_in, c);
      agg = agg.valid() ? add(t, agg, mapped) : mapped;
    }
  }
  std::vector<Var> parts{x_self, agg};
  return mlp_forward(t, store, phi_out, concat_rows(t, parts));
}

SeqEncoderParams make_seq_encoder(ParamStore& store, const std::string& prefix, int dim, Rng& rng) {
  if (dim < 1) throw std::invalid_argument("encoder dim must be positive");
  SeqEncoderParams enc;
  enc.dim = dim;
  double a = std::sqrt(1.0 / dim);
  auto init_weight = [&](const std::string& name) {
    int idx = store.add(prefix + "." + name, dim, dim);
    Mat& w = store.at(idx).value;
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = (2.0 * rng.next_double() - 1.0) * a;
    return idx;
  };
  auto init_bias = [&](const std::string& name) {
    int idx = store.add(prefix + "." + name, dim, 1);
    Mat& b = store.at(idx).value;
    for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = (2.0 * rng.next_double() - 1.0) * a;
    return idx;
  };
  enc.w_gate = init_weight("w_gate");
  enc.b_gate = store.add(prefix + ".b_gate", dim, 1);
  store.at(enc.b_gate).value.setOnes();
  enc.w_cand = init_weight("w_cand");
  enc.b_cand = init_bias("b_cand");
  enc.w_out = init_weight("w_out");
  enc.b_out = init_bias("b_out");
  return enc;
}

std::vector<Var> seq_encode(Tape& t, ParamStore& store, const SeqEncoderParams& enc,
                            std::span<const Var> inputs) {
  if (inputs.empty()) throw std::invalid_argument("seq_encode: empty sequence");
  const int steps = static_cast<int>(inputs.size());
  const int width = static_cast<int>(t.value(inputs[0]).cols());
  Var x = concat_cols(t, inputs);
  Var gate = sigmoid(t, linear(t, store.at(enc.w_gate), &store.at(enc.b_gate), x));
  Var cand = linear(t, store.at(enc.w_cand), &store.at(enc.b_cand), x);
  Var states = gated_scan(t, gate, cand, steps);
  Var out = linear(t, store.at(enc.w_out), &store.at(enc.b_out), states);
  std::vector<Var> per_step;
  per_step.reserve(steps);
  for (int s = 0; s < steps; ++s) per_step.push_back(cols_block(t, out, s * width, width));
  return per_step;
}

GumbelSample gumbel_softmax_sample(Tape& t, Var logits, double tau, Rng& rng, bool hard) {
  if (tau <= 0.0) throw std::invalid_argument("gumbel temperature must be positive");
  const Mat& lv = t.value(logits);
  if (lv.cols() != 1) throw ShapeError("gumbel_softmax_sample expects a single column");
  auto noise = std::make_shared<Mat>(lv.rows(), 1);
  for (Eigen::Index i = 0; i < lv.rows(); ++i) (*noise)(i, 0) = rng.next_gumbel();
  Var soft = softmax_cols(t, logits, noise, tau);
  int chosen = 0;
  t.value(soft).col(0).maxCoeff(&chosen);
  if (!hard) return {soft, chosen};
  Mat onehot = Mat::Zero(lv.rows(), 1);
  onehot(chosen, 0) = 1.0;
  Var hard_var = t.emplace(std::move(onehot));
  t.set_backward(hard_var, [soft, hard_var](Tape& tp) { tp.grad(soft) += tp.grad(hard_var); });
  return {hard_var, chosen};
}

AdamWState make_adamw(const ParamStore& store, AdamWConfig cfg) {
  AdamWState state;
  state.cfg = cfg;
  for (int i = 0; i < store.count(); ++i) {
    const Mat& v = store.at(i).value;
    state.m.push_back(Mat::Zero(v.rows(), v.cols()));
    state.v.push_back(Mat::Zero(v.rows(), v.cols()));
  }
  return state;
}

void adamw_step(AdamWState& state, ParamStore& store, double lr) {
  if (static_cast<int>(state.m.size()) != store.count())
    throw ShapeError("adamw state does not match parameter store");
  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.cfg.beta2, static_cast<double>(state.step));
  for (int i = 0; i < store.count(); ++i) {
    ParamTensor& p = store.at(i);
    if (p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols())
      throw ShapeError("gradient shape mismatch for '" + p.name + "'");
    state.m[i] = state.cfg.beta1 * state.m[i] + (1.0 - state.cfg.beta1) * p.grad;
    state.v[i].array() =
        state.cfg.beta2 * state.v[i].array() + (1.0 - state.cfg.beta2) * p.grad.array().square();
    p.value.array() -= lr * ((state.m[i].array() / bc1) /
                                 ((state.v[i].array() / bc2).sqrt() + state.cfg.eps) +
                             state.cfg.weight_decay * p.value.array());
  }
}

double lr_at(const ScheduleSpec& schedule, int epoch) {
  if (schedule.warmup_epochs < 0 || schedule.warmup_epochs >= schedule.total_epochs)
    throw std::invalid_argument("schedule requires 0 <= warmup < total");
  if (epoch < 0 || epoch >= schedule.total_epochs)
    throw std::invalid_argument("epoch out of schedule range");
  if (epoch < schedule.warmup_epochs)
    return schedule.base_lr * static_cast<double>(epoch) / schedule.warmup_epochs;
  const double progress = static_cast<double>(epoch - schedule.warmup_epochs) /
                          (schedule.total_epochs - schedule.warmup_epochs);
  return schedule.base_lr * 0.5 * (1.0 + std::cos(M_PI * progress));
}

void save_checkpoint(const std::string& path, const ParamStore& store,
                     const std::map<std::string, std::string>& meta) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open '" + path + "' for writing");
  os << "hierwalk-checkpoint 1\n";
  for (const auto& [k, v] : meta) os << "meta " << k << " " << v << "\n";
  for (int i = 0; i < store.count(); ++i) {
    const ParamTensor& p = store.at(i);
    os << "tensor " << p.name << " " << p.value.rows() << " " << p.value.cols() << "\n";
    os.write(reinterpret_cast<const char*>(p.value.data()),
             static_cast<std::streamsize>(sizeof(double) * p.value.size()));
    os << "\n";
  }
  os << "end\n";
  if (!os) throw FormatError("write failed for '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open '" + path + "' for reading");
  std::string line;
  if (!std::getline(is, line) || line != "hierwalk-checkpoint 1")
    throw FormatError(path + ": not a checkpoint file");
  Checkpoint ckpt;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line == "end") return ckpt;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "meta") {
      std::string key, value;
      if (!(ls >> key)) throw FormatError(path + ": malformed meta line");
      std::getline(ls, value);
      if (!value.empty() && value.front() == ' ') value.erase(value.begin());
      ckpt.meta[key] = value;
    } else if (tag == "tensor") {
      std::string name;
      Eigen::Index rows, cols;
      if (!(ls >> name >> rows >> cols)) throw FormatError(path + ": malformed tensor line");
      Mat m(rows, cols);
      is.read(reinterpret_cast<char*>(m.data()),
              static_cast<std::streamsize>(sizeof(double) * m.size()));
      if (!is) throw FormatError(path + ": truncated tensor payload for '" + name + "'");
      ckpt.tensors.emplace_back(name, std::move(m));
    } else {
      throw FormatError(path + ": unexpected line '" + line + "'");
    }
  }
  throw FormatError(path + ": missing end marker");
}

void load_into_store(const Checkpoint& ckpt, ParamStore& store) {
  if (static_cast<int>(ckpt.tensors.size()) != store.count())
    throw ConfigError("checkpoint holds " + std::to_string(ckpt.tensors.size()) +
                      " tensors, model expects " + std::to_string(store.count()));
  for (const auto& [name, value] : ckpt.tensors) {
    if (!store.has(name)) throw ConfigError("checkpoint tensor '" + name + "' not in model");
    ParamTensor& p = store.by_name(name);
    if (p.value.rows() != value.rows() || p.value.cols() != value.cols())
      throw ConfigError("checkpoint tensor '" + name + "' has mismatched shape");
    p.value = value;
  }
}

}  // namespace hierwalk
