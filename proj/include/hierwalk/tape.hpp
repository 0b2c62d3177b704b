#pragma once

#include <deque>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "hierwalk/types.hpp"

namespace hierwalk {

struct ParamTensor {
  std::string name;
  Mat value;
  Mat grad;
};

/// Handle to a node on a Tape.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

/// Reverse-mode computation record over dense matrices. Values are computed
/// eagerly at node creation; backward() replays the records in reverse.
/// Columns act as the batch dimension throughout, so a vector is a one-column
/// matrix and minibatches are wide matrices.
class Tape {
 public:
  Var leaf(Mat value);

  const Mat& value(Var v) const { return nodes_[v.id].value; }
  /// Gradient accumulator, allocated (zeroed) on first access.
  Mat& grad(Var v);
  bool has_grad(Var v) const { return nodes_[v.id].grad.size() > 0; }

  /// Seeds the 1x1 root with gradient one and runs all records in reverse.
  void backward(Var root);

  /// When enabled, every created node is checked for NaN/Inf.
  void set_check_finite(bool on) { check_finite_ = on; }

  int size() const { return static_cast<int>(nodes_.size()); }

  Var emplace(Mat value, std::function<void(Tape&)> backward_fn = nullptr);
  void set_backward(Var v, std::function<void(Tape&)> backward_fn);

 private:
  struct Node {
    Mat value;
    Mat grad;
    std::function<void(Tape&)> backward_fn;
  };
  // deque keeps node references stable while new nodes are appended
  std::deque<Node> nodes_;
  bool check_finite_ = false;
};

// ---- elementary ops ----

/// y = W x (+ b broadcast over columns). Gradients accumulate directly into
/// the parameter tensors.
Var linear(Tape& t, ParamTensor& W, ParamTensor* b, Var x);
Var relu(Tape& t, Var x);
Var tanh_act(Tape& t, Var x);
Var sigmoid(Tape& t, Var x);
Var add(Tape& t, Var a, Var b);
Var scale(Tape& t, Var x, double s);
Var concat_rows(Tape& t, std::span<const Var> parts);
Var concat_cols(Tape& t, std::span<const Var> parts);
/// Contiguous column block [offset, offset+count).
Var cols_block(Tape& t, Var x, int offset, int count);
/// Column gather; indices may repeat (backward scatter-adds).
Var gather_cols(Tape& t, Var x, std::shared_ptr<const std::vector<int>> idx);

/// CSR-style segment sum over columns: output column s is the sum of input
/// columns indices[offsets[s]..offsets[s+1]). Empty segments give zeros.
struct ColSegments {
  std::vector<int> offsets;  // size segments+1
  std::vector<int> indices;
};
Var segment_sum_cols(Tape& t, Var x, std::shared_ptr<const ColSegments> segs);

/// Builds an MxW matrix from entries of a 1xK row; index -1 yields `pad`.
Var gather_row_entries(Tape& t, Var row, std::shared_ptr<const Eigen::ArrayXXi> idx, double pad);

/// Column-wise softmax((logits + noise)/tau); noise may be null.
Var softmax_cols(Tape& t, Var logits, std::shared_ptr<const Mat> noise, double tau);

/// Per column w, mixes candidate columns H[:, cand(i,w)] with weights
/// soft(:, w). With hard=true the forward value is the chosen candidate alone
/// while the backward treats the output as the soft mixture (straight-through).
/// cand entries of -1 are padding.
Var select_cols(Tape& t, Var soft, Var H, std::shared_ptr<const Eigen::ArrayXXi> cand,
                std::shared_ptr<const std::vector<int>> chosen, bool hard);

/// Gated linear recurrence over step-major blocks: inputs are d x (T*W), and
/// S_t = G_t (*) S_{t-1} + (1 - G_t) (*) C_t with S_{-1} = 0.
Var gated_scan(Tape& t, Var gate, Var cand, int steps);

/// Two linear maps sharing one input, evaluated as a single stacked GEMM:
/// output rows are [Wa x + ba ; Wb x + bb].
Var dual_linear(Tape& t, ParamTensor& Wa, ParamTensor* ba, ParamTensor& Wb, ParamTensor* bb,
                Var x);

/// gated_scan with the gate nonlinearity folded in: the top half of `stacked`
/// holds gate pre-activations (sigmoid applied internally), the bottom half
/// the candidate values.
Var gated_scan_stacked(Tape& t, Var stacked, int steps);

/// Mean two-class (or c-class) cross entropy over columns; 1x1 output.
Var softmax_ce_loss(Tape& t, Var logits, std::shared_ptr<const std::vector<int>> labels);

/// sum(w (*) x) as a 1x1 node; handy as a probe loss in gradient checks.
Var weighted_sum(Tape& t, Var x, Mat w);

}  // namespace hierwalk
