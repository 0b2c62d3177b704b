#include "hierwalk/tape.hpp"

#include <cmath>

namespace hierwalk {

Var Tape::emplace(Mat value, std::function<void(Tape&)> backward_fn) {
  if (check_finite_ && !value.allFinite())
    throw NumericsError("non-finite value entering the tape");
  nodes_.push_back(Node{std::move(value), Mat(), std::move(backward_fn)});
  return Var{static_cast<int>(nodes_.size()) - 1};
}

void Tape::set_backward(Var v, std::function<void(Tape&)> backward_fn) {
  nodes_[v.id].backward_fn = std::move(backward_fn);
}

Var Tape::leaf(Mat value) { return emplace(std::move(value)); }

Mat& Tape::grad(Var v) {
  Node& n = nodes_[v.id];
  if (n.grad.size() == 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::backward(Var root) {
  if (!root.valid()) throw std::invalid_argument("backward on invalid var");
  const Mat& rv = nodes_[root.id].value;
  if (rv.rows() != 1 || rv.cols() != 1) throw ShapeError("backward root must be 1x1");
  grad(root)(0, 0) = 1.0;
  for (int i = root.id; i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.grad.size() == 0 || !n.backward_fn) continue;
    n.backward_fn(*this);
  }
}

Var linear(Tape& t, ParamTensor& W, ParamTensor* b, Var x) {
  const Mat& xv = t.value(x);
  if (W.value.cols() != xv.rows())
    throw ShapeError("linear: W is " + std::to_string(W.value.rows()) + "x" +
                     std::to_string(W.value.cols()) + " but x has " + std::to_string(xv.rows()) +
                     " rows");
  if (b && (b->value.rows() != W.value.rows() || b->value.cols() != 1))
    throw ShapeError("linear: bias shape mismatch");
  Mat y = W.value * xv;
  if (b) y.colwise() += Vec(b->value.col(0));
  Var out = t.emplace(std::move(y));
  t.set_backward(out, [&W, b, x, out](Tape& tp) {
    const Mat& g = tp.grad(out);
    if (W.grad.size() == 0) W.grad = Mat::Zero(W.value.rows(), W.value.cols());
    W.grad.noalias() += g * tp.value(x).transpose();
    if (b) {
      if (b->grad.size() == 0) b->grad = Mat::Zero(b->value.rows(), 1);
      b->grad.col(0) += g.rowwise().sum();
    }
    tp.grad(x).noalias() += W.value.transpose() * g;
  });
  return out;
}

Var relu(Tape& t, Var x) {
  Var out = t.emplace(t.value(x).cwiseMax(0.0));
  t.set_backward(out, [x, out](Tape& tp) {
    tp.grad(x).array() +=
        tp.grad(out).array() * (tp.value(x).array() > 0.0).cast<double>();
  });
  return out;
}

Var tanh_act(Tape& t, Var x) {
  Var out = t.emplace(t.value(x).array().tanh().matrix());
  t.set_backward(out, [x, out](Tape& tp) {
    tp.grad(x).array() += tp.grad(out).array() * (1.0 - tp.value(out).array().square());
  });
  return out;
}

Var sigmoid(Tape& t, Var x) {
  Var out = t.emplace(((1.0 + (-t.value(x).array()).exp()).inverse()).matrix());
  t.set_backward(out, [x, out](Tape& tp) {
    auto y = tp.value(out).array();
    tp.grad(x).array() += tp.grad(out).array() * y * (1.0 - y);
  });
  return out;
}

Var add(Tape& t, Var a, Var b) {
  if (t.value(a).rows() != t.value(b).rows() || t.value(a).cols() != t.value(b).cols())
    throw ShapeError("add: operand shapes differ");
  Var out = t.emplace(t.value(a) + t.value(b));
  t.set_backward(out, [a, b, out](Tape& tp) {
    tp.grad(a) += tp.grad(out);
    tp.grad(b) += tp.grad(out);
  });
  return out;
}

Var scale(Tape& t, Var x, double s) {
  Var out = t.emplace(t.value(x) * s);
  t.set_backward(out, [x, s, out](Tape& tp) { tp.grad(x) += s * tp.grad(out); });
  return out;
}

Var concat_rows(Tape& t, std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: empty");
  Eigen::Index cols = t.value(parts[0]).cols();
  Eigen::Index rows = 0;
  for (Var p : parts) {
    if (t.value(p).cols() != cols) throw ShapeError("concat_rows: column counts differ");
    rows += t.value(p).rows();
  }
  Mat y(rows, cols);
  Eigen::Index at = 0;
  for (Var p : parts) {
    y.middleRows(at, t.value(p).rows()) = t.value(p);
    at += t.value(p).rows();
  }
  std::vector<Var> held(parts.begin(), parts.end());
  Var out = t.emplace(std::move(y));
  t.set_backward(out, [held = std::move(held), out](Tape& tp) {
    const Mat& g = tp.grad(out);
    Eigen::Index at = 0;
    for (Var p : held) {
      tp.grad(p) += g.middleRows(at, tp.value(p).rows());
      at += tp.value(p).rows();
    }
  });
  return out;
}

Var concat_cols(Tape& t, std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: empty");
  Eigen::Index rows = t.value(parts[0]).rows();
  Eigen::Index cols = 0;
  for (Var p : parts) {
    if (t.value(p).rows() != rows) throw ShapeError("concat_cols: row counts differ");
    cols += t.value(p).cols();
  }
  Mat y(rows, cols);
  Eigen::Index at = 0;
  for (Var p : parts) {
    y.middleCols(at, t.value(p).cols()) = t.value(p);
    at += t.value(p).cols();
  }
  std::vector<Var> held(parts.begin(), parts.end());
  Var out = t.emplace(std::move(y));
  t.set_backward(out, [held = std::move(held), out](Tape& tp) {
    const Mat& g = tp.grad(out);
    Eigen::Index at = 0;
    for (Var p : held) {
      tp.grad(p) += g.middleCols(at, tp.value(p).cols());
      at += tp.value(p).cols();
    }
  });
  return out;
}

Var cols_block(Tape& t, Var x, int offset, int count) {
  const Mat& xv = t.value(x);
  if (offset < 0 || count < 0 || offset + count > xv.cols())
    throw std::out_of_range("cols_block out of range");
  Var out = t.emplace(xv.middleCols(offset, count));
  t.set_backward(out, [x, offset, count, out](Tape& tp) {
    tp.grad(x).middleCols(offset, count) += tp.grad(out);
  });
  return out;
}

Var gather_cols(Tape& t, Var x, std::shared_ptr<const std::vector<int>> idx) {
  const Mat& xv = t.value(x);
  Mat y(xv.rows(), static_cast<Eigen::Index>(idx->size()));
  for (std::size_t j = 0; j < idx->size(); ++j) {
    int c = (*idx)[j];
    if (c < 0 || c >= xv.cols()) throw std::out_of_range("gather_cols index out of range");
    y.col(static_cast<Eigen::Index>(j)) = xv.col(c);
  }
  Var out = t.emplace(std::move(y));
  t.set_backward(out, [x, idx, out](Tape& tp) {
    const Mat& g = tp.grad(out);
    Mat& gx = tp.grad(x);
    for (std::size_t j = 0; j < idx->size(); ++j)
      gx.col((*idx)[j]) += g.col(static_cast<Eigen::Index>(j));
  });
  return out;
}

Var segment_sum_cols(Tape& t, Var x, std::shared_ptr<const ColSegments> segs) {
  const Mat& xv = t.value(x);
  const int segments = static_cast<int>(segs->offsets.size()) - 1;
  Mat y = Mat::Zero(xv.rows(), segments);
  for (int s = 0; s < segments; ++s)
    for (int j = segs->offsets[s]; j < segs->offsets[s + 1]; ++j)
      y.col(s) += xv.col(segs->indices[j]);
  Var out = t.emplace(std::move(y));
  t.set_backward(out, [x, segs, out](Tape& tp) {
    const Mat& g = tp.grad(out);
    Mat& gx = tp.grad(x);
    const int segments = static_cast<int>(segs->offsets.size()) - 1;
    for (int s = 0; s < segments; ++s)
      for (int j = segs->offsets[s]; j < segs->offsets[s + 1]; ++j)
        gx.col(segs->indices[j]) += g.col(s);
  });
  return out;
}

Var gather_row_entries(Tape& t, Var row, std::shared_ptr<const Eigen::ArrayXXi> idx, double pad) {
  const Mat& rv = t.value(row);
  if (rv.rows() != 1) throw ShapeError("gather_row_entries expects a 1xK row");
  Mat y(idx->rows(), idx->cols());
  for (Eigen::Index w = 0; w < idx->cols(); ++w)
    for (Eigen::Index i = 0; i < idx->rows(); ++i) {
      int c = (*idx)(i, w);
      y(i, w) = c < 0 ? pad : rv(0, c);
    }
  Var out = t.emplace(std::move(y));
  t.set_backward(out, [row, idx, out](Tape& tp) {
    const Mat& g = tp.grad(out);
    Mat& gr = tp.grad(row);
    for (Eigen::Index w = 0; w < idx->cols(); ++w)
      for (Eigen::Index i = 0; i < idx->rows(); ++i) {
        int c = (*idx)(i, w);
        if (c >= 0) gr(0, c) += g(i, w);
      }
  });
  return out;
}

Var softmax_cols(Tape& t, Var logits, std::shared_ptr<const Mat> noise, double tau) {
  if (tau <= 0.0) throw std::invalid_argument("softmax temperature must be positive");
  const Mat& lv = t.value(logits);
  Mat z = noise ? Mat((lv + *noise) / tau) : Mat(lv / tau);
  Mat p(z.rows(), z.cols());
  for (Eigen::Index w = 0; w < z.cols(); ++w) {
    double m = z.col(w).maxCoeff();
    Vec e = (z.col(w).array() - m).exp();
    p.col(w) = e / e.sum();
  }
  Var out = t.emplace(std::move(p));
  t.set_backward(out, [logits, tau, out](Tape& tp) {
    const Mat& g = tp.grad(out);
    const Mat& p = tp.value(out);
    Mat& gl = tp.grad(logits);
    for (Eigen::Index w = 0; w < p.cols(); ++w) {
      double dot = p.col(w).dot(g.col(w));
      gl.col(w).array() += p.col(w).array() * (g.col(w).array() - dot) / tau;
    }
  });
  return out;
}

Var select_cols(Tape& t, Var soft, Var H, std::shared_ptr<const Eigen::ArrayXXi> cand,
                std::shared_ptr<const std::vector<int>> chosen, bool hard) {
  const Mat& p = t.value(soft);
  const Mat& h = t.value(H);
  const Eigen::Index W = p.cols();
  if (cand->rows() != p.rows() || cand->cols() != W)
    throw ShapeError("select_cols: candidate index shape mismatch");
  if (static_cast<Eigen::Index>(chosen->size()) != W)
    throw ShapeError("select_cols: chosen size mismatch");
  Mat y = Mat::Zero(h.rows(), W);
  for (Eigen::Index w = 0; w < W; ++w) {
    if (hard) {
      y.col(w) = h.col((*cand)((*chosen)[w], w));
    } else {
      for (Eigen::Index i = 0; i < cand->rows(); ++i) {
        int c = (*cand)(i, w);
        if (c >= 0) y.col(w) += p(i, w) * h.col(c);
      }
    }
  }
  Var out = t.emplace(std::move(y));
  t.set_backward(out, [soft, H, cand, chosen, hard, out](Tape& tp) {
    const Mat& g = tp.grad(out);
    const Mat& p = tp.value(soft);
    const Mat& h = tp.value(H);
    Mat& gp = tp.grad(soft);
    Mat& gh = tp.grad(H);
    for (Eigen::Index w = 0; w < g.cols(); ++w) {
      for (Eigen::Index i = 0; i < cand->rows(); ++i) {
        int c = (*cand)(i, w);
        if (c < 0) continue;
        gp(i, w) += h.col(c).dot(g.col(w));
        if (!hard) gh.col(c) += p(i, w) * g.col(w);
      }
      if (hard) gh.col((*cand)((*chosen)[w], w)) += g.col(w);
    }
  });
  return out;
}

Var gated_scan(Tape& t, Var gate, Var cand, int steps) {
  const Mat& G = t.value(gate);
  const Mat& C = t.value(cand);
  if (G.rows() != C.rows() || G.cols() != C.cols()) throw ShapeError("gated_scan: shape mismatch");
  if (steps < 1 || G.cols() % steps != 0)
    throw std::invalid_argument("gated_scan: columns not divisible into steps");
  const Eigen::Index W = G.cols() / steps;
  Mat S(G.rows(), G.cols());
  for (int step = 0; step < steps; ++step) {
    auto g = G.middleCols(step * W, W).array();
    auto c = C.middleCols(step * W, W).array();
    if (step == 0)
      S.middleCols(0, W) = ((1.0 - g) * c).matrix();
    else
      S.middleCols(step * W, W) =
          (g * S.middleCols((step - 1) * W, W).array() + (1.0 - g) * c).matrix();
  }
  Var out = t.emplace(std::move(S));
  t.set_backward(out, [gate, cand, steps, out](Tape& tp) {
    const Mat& G = tp.value(gate);
    const Mat& C = tp.value(cand);
    const Mat& S = tp.value(out);
    const Mat& gS = tp.grad(out);
    Mat& gG = tp.grad(gate);
    Mat& gC = tp.grad(cand);
    const Eigen::Index W = G.cols() / steps;
    Mat e = Mat::Zero(G.rows(), W);  // running dL/dS_t
    for (int step = steps - 1; step >= 0; --step) {
      e += gS.middleCols(step * W, W);
      auto g = G.middleCols(step * W, W).array();
      auto c = C.middleCols(step * W, W).array();
      if (step == 0)
        gG.middleCols(0, W).array() += (-c) * e.array();
      else
        gG.middleCols(step * W, W).array() +=
            (S.middleCols((step - 1) * W, W).array() - c) * e.array();
      gC.middleCols(step * W, W).array() += (1.0 - g) * e.array();
      if (step > 0) e.array() *= g;
    }
  });
  return out;
}

Var dual_linear(Tape& t, ParamTensor& Wa, ParamTensor* ba, ParamTensor& Wb, ParamTensor* bb,
                Var x) {
  const Mat& xv = t.value(x);
  const Eigen::Index ra = Wa.value.rows();
  const Eigen::Index rb = Wb.value.rows();
  if (Wa.value.cols() != xv.rows() || Wb.value.cols() != xv.rows())
    throw ShapeError("dual_linear: weight/input shape mismatch");
  Mat stacked_w(ra + rb, Wa.value.cols());
  stacked_w.topRows(ra) = Wa.value;
  stacked_w.bottomRows(rb) = Wb.value;
  Mat y = stacked_w * xv;
  if (ba) y.topRows(ra).colwise() += Vec(ba->value.col(0));
  if (bb) y.bottomRows(rb).colwise() += Vec(bb->value.col(0));
  Var out = t.emplace(std::move(y));
  t.set_backward(out, [&Wa, ba, &Wb, bb, x, out, ra, rb](Tape& tp) {
    const Mat& g = tp.grad(out);
    const Mat& xv = tp.value(x);
    if (Wa.grad.size() == 0) Wa.grad = Mat::Zero(Wa.value.rows(), Wa.value.cols());
    if (Wb.grad.size() == 0) Wb.grad = Mat::Zero(Wb.value.rows(), Wb.value.cols());
    Wa.grad.noalias() += g.topRows(ra) * xv.transpose();
    Wb.grad.noalias() += g.bottomRows(rb) * xv.transpose();
    if (ba) ba->grad.col(0) += g.topRows(ra).rowwise().sum();
    if (bb) bb->grad.col(0) += g.bottomRows(rb).rowwise().sum();
    Mat stacked_w(ra + rb, Wa.value.cols());
    stacked_w.topRows(ra) = Wa.value;
    stacked_w.bottomRows(rb) = Wb.value;
    tp.grad(x).noalias() += stacked_w.transpose() * g;
  });
  return out;
}

Var gated_scan_stacked(Tape& t, Var stacked, int steps) {
  const Mat& in = t.value(stacked);
  if (in.rows() % 2 != 0) throw ShapeError("gated_scan_stacked: odd row count");
  const Eigen::Index d = in.rows() / 2;
  if (steps < 1 || in.cols() % steps != 0)
    throw std::invalid_argument("gated_scan_stacked: columns not divisible into steps");
  const Eigen::Index W = in.cols() / steps;
  auto sig = std::make_shared<Mat>((1.0 + (-in.topRows(d).array()).exp()).inverse().matrix());
  Mat S(d, in.cols());
  for (int step = 0; step < steps; ++step) {
    auto g = sig->middleCols(step * W, W).array();
    auto c = in.block(d, step * W, d, W).array();
    if (step == 0)
      S.middleCols(0, W) = ((1.0 - g) * c).matrix();
    else
      S.middleCols(step * W, W) =
          (g * S.middleCols((step - 1) * W, W).array() + (1.0 - g) * c).matrix();
  }
  Var out = t.emplace(std::move(S));
  t.set_backward(out, [stacked, steps, sig, out, d](Tape& tp) {
    const Mat& in = tp.value(stacked);
    const Mat& S = tp.value(out);
    const Mat& gS = tp.grad(out);
    Mat& gin = tp.grad(stacked);
    const Eigen::Index W = in.cols() / steps;
    Mat e = Mat::Zero(d, W);
    for (int step = steps - 1; step >= 0; --step) {
      e += gS.middleCols(step * W, W);
      auto g = sig->middleCols(step * W, W).array();
      auto c = in.block(d, step * W, d, W).array();
      // gate pre-activation gradient includes the sigmoid derivative
      if (step == 0)
        gin.block(0, 0, d, W).array() += (-c) * e.array() * g * (1.0 - g);
      else
        gin.block(0, step * W, d, W).array() +=
            (S.middleCols((step - 1) * W, W).array() - c) * e.array() * g * (1.0 - g);
      gin.block(d, step * W, d, W).array() += (1.0 - g) * e.array();
      if (step > 0) e.array() *= g;
    }
  });
  return out;
}

Var softmax_ce_loss(Tape& t, Var logits, std::shared_ptr<const std::vector<int>> labels) {
  const Mat& z = t.value(logits);
  if (static_cast<Eigen::Index>(labels->size()) != z.cols())
    throw ShapeError("softmax_ce_loss: one label per column required");
  const int classes = static_cast<int>(z.rows());
  double total = 0.0;
  for (Eigen::Index w = 0; w < z.cols(); ++w) {
    int y = (*labels)[w];
    if (y < 0 || y >= classes) throw std::invalid_argument("label out of range");
    double m = z.col(w).maxCoeff();
    double lse = m + std::log((z.col(w).array() - m).exp().sum());
    total += lse - z(y, w);
  }
  Mat v(1, 1);
  v(0, 0) = total / static_cast<double>(z.cols());
  Var out = t.emplace(std::move(v));
  t.set_backward(out, [logits, labels, out](Tape& tp) {
    const Mat& z = tp.value(logits);
    const double g = tp.grad(out)(0, 0) / static_cast<double>(z.cols());
    Mat& gz = tp.grad(logits);
    for (Eigen::Index w = 0; w < z.cols(); ++w) {
      double m = z.col(w).maxCoeff();
      Vec e = (z.col(w).array() - m).exp();
      Vec p = e / e.sum();
      p((*labels)[w]) -= 1.0;
      gz.col(w) += g * p;
    }
  });
  return out;
}

Var weighted_sum(Tape& t, Var x, Mat w) {
  const Mat& xv = t.value(x);
  if (w.rows() != xv.rows() || w.cols() != xv.cols())
    throw ShapeError("weighted_sum: weight shape mismatch");
  Mat v(1, 1);
  v(0, 0) = (xv.array() * w.array()).sum();
  auto wp = std::make_shared<const Mat>(std::move(w));
  Var out = t.emplace(std::move(v));
  t.set_backward(out, [x, wp, out](Tape& tp) {
    tp.grad(x) += tp.grad(out)(0, 0) * (*wp);
  });
  return out;
}

}  // namespace hierwalk
