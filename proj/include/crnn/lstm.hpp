#pragma once

// LSTM recursion, fully-connected head and belief output.
//
// State update for one input x with previous (cell, hidden):
//   f = sigmoid(Wf x + Uf h + bf)      forget gate
//   u = sigmoid(Wu x + Uu h + bu)      update (input) gate
//   o = sigmoid(Wo x + Uo h + bo)      output gate
//   z = tanh(Wz x + Uz h + bz)         candidate
//   cell'   = f * cell + u * z
//   hidden' = o * tanh(cell')
// The head maps the terminal hidden vector to logits W h + b, and the belief
// is the softmax of the logits. Runs always start from the zero state.

#include <Eigen/Core>

#include <optional>
#include <string>
#include <vector>

#include "crnn/errors.hpp"
#include "crnn/simplex.hpp"

namespace crnn {

template <typename Scalar>
struct BasicGate {
  Matrix<Scalar> input;      // b x a
  Matrix<Scalar> recurrent;  // b x b
  Vector<Scalar> bias;       // b

  static BasicGate zeros(Eigen::Index a, Eigen::Index b) {
    return {Matrix<Scalar>::Zero(b, a), Matrix<Scalar>::Zero(b, b), Vector<Scalar>::Zero(b)};
  }

  template <typename DerivedX, typename DerivedH>
  Vector<Scalar> preactivation(const Eigen::MatrixBase<DerivedX>& x,
                               const Eigen::MatrixBase<DerivedH>& h) const {
    return input * x + recurrent * h + bias;
  }
};

template <typename Scalar>
struct BasicLstmWeights {
  BasicGate<Scalar> update;
  BasicGate<Scalar> output;
  BasicGate<Scalar> forget;
  BasicGate<Scalar> candidate;
  Matrix<Scalar> head;       // m x b
  Vector<Scalar> head_bias;  // m

  static BasicLstmWeights zeros(Eigen::Index a, Eigen::Index b, Eigen::Index m) {
    return {BasicGate<Scalar>::zeros(a, b), BasicGate<Scalar>::zeros(a, b),
            BasicGate<Scalar>::zeros(a, b), BasicGate<Scalar>::zeros(a, b),
            Matrix<Scalar>::Zero(m, b), Vector<Scalar>::Zero(m)};
  }

  Eigen::Index input_dim() const { return update.input.cols(); }
  Eigen::Index hidden_dim() const { return update.input.rows(); }
  Eigen::Index num_classes() const { return head.rows(); }

  /// Throws kDimensionMismatch / kInvalidInput on inconsistent or non-finite
  /// parameters.
  void validate() const;
};

/// Visits every parameter block as (name, matrix-or-vector). Works on const
/// and mutable weights; the names are the serialization keys.
template <typename Weights, typename Visitor>
void for_each_parameter(Weights& w, Visitor&& visit) {
  auto gate = [&](const char* prefix, auto& g) {
    visit(std::string(prefix) + ".input", g.input);
    visit(std::string(prefix) + ".recurrent", g.recurrent);
    visit(std::string(prefix) + ".bias", g.bias);
  };
  gate("update", w.update);
  gate("output", w.output);
  gate("forget", w.forget);
  gate("candidate", w.candidate);
  visit(std::string("head.weight"), w.head);
  visit(std::string("head.bias"), w.head_bias);
}

template <typename Scalar>
void BasicLstmWeights<Scalar>::validate() const {
  const Eigen::Index a = input_dim();
  const Eigen::Index b = hidden_dim();
  const Eigen::Index m = num_classes();
  require(a >= 1 && b >= 1, ErrorCode::kDimensionMismatch, "empty LSTM weights");
  require(m >= 2, ErrorCode::kDimensionMismatch, "head needs at least two classes");
  for (const BasicGate<Scalar>* g : {&update, &output, &forget, &candidate}) {
    require(g->input.rows() == b && g->input.cols() == a, ErrorCode::kDimensionMismatch,
            "gate input matrix must be b x a");
    require(g->recurrent.rows() == b && g->recurrent.cols() == b,
            ErrorCode::kDimensionMismatch, "gate recurrent matrix must be b x b");
    require(g->bias.size() == b, ErrorCode::kDimensionMismatch, "gate bias must have length b");
  }
  require(head.cols() == b, ErrorCode::kDimensionMismatch, "head must be m x b");
  require(head_bias.size() == m, ErrorCode::kDimensionMismatch, "head bias must have length m");
  for_each_parameter(*this, [](const std::string& name, const auto& block) {
    require(block.allFinite(), ErrorCode::kInvalidInput, name + " has non-finite entries");
  });
}

template <typename Scalar>
struct BasicHiddenState {
  Vector<Scalar> cell;
  Vector<Scalar> hidden;

  static BasicHiddenState zeros(Eigen::Index b) {
    return {Vector<Scalar>::Zero(b), Vector<Scalar>::Zero(b)};
  }

  /// (cell, hidden) stacked into one vector of length 2b.
  Vector<Scalar> stacked() const {
    Vector<Scalar> s(cell.size() + hidden.size());
    s << cell, hidden;
    return s;
  }
};

/// Block-max distance max(||cell - cell~||, ||hidden - hidden~||), both
/// Euclidean; the norm in which contraction and input-Lipschitz constants
/// are measured. It dominates the hidden-part distance the head sees, and it
/// is the norm under which the weight constraint yields a contraction. The
/// stacked Euclidean norm does not: with zero recurrent matrices a cell
/// change dc maps to (f dc, o tanh'(cell) f dc), whose stacked length
/// exceeds |dc| once f is close to one.
template <typename Scalar>
Scalar state_distance(const BasicHiddenState<Scalar>& s1, const BasicHiddenState<Scalar>& s2) {
  return std::max((s1.cell - s2.cell).norm(), (s1.hidden - s2.hidden).norm());
}

/// A time-indexed sequence of feature vectors stored column-wise: column t
/// is the input at step t + 1. Labels are 0-based class indices.
template <typename Scalar>
struct BasicSequence {
  Matrix<Scalar> steps;  // a x T
  std::optional<int> label;
  std::string id;

  Eigen::Index length() const { return steps.cols(); }
  Eigen::Index feature_dim() const { return steps.rows(); }

  void validate() const {
    require(steps.cols() >= 1 && steps.rows() >= 1, ErrorCode::kInvalidInput,
            "sequence must have T >= 1 steps of nonzero width");
    require(steps.allFinite(), ErrorCode::kInvalidInput, "sequence has non-finite entries");
  }
};

template <typename Scalar>
Vector<Scalar> sigmoid(const Vector<Scalar>& v) {
  return (Scalar(1) / (Scalar(1) + (-v.array()).exp())).matrix();
}

template <typename Scalar, typename DerivedX>
BasicHiddenState<Scalar> lstm_step(const BasicLstmWeights<Scalar>& w,
                                   const BasicHiddenState<Scalar>& s,
                                   const Eigen::MatrixBase<DerivedX>& x) {
  require(x.size() == w.input_dim(), ErrorCode::kDimensionMismatch,
          "input has length " + std::to_string(x.size()) + ", weights expect " +
              std::to_string(w.input_dim()));
  require(s.cell.size() == w.hidden_dim() && s.hidden.size() == w.hidden_dim(),
          ErrorCode::kDimensionMismatch, "state width does not match weights");
  const Vector<Scalar> f = sigmoid<Scalar>(w.forget.preactivation(x, s.hidden));
  const Vector<Scalar> u = sigmoid<Scalar>(w.update.preactivation(x, s.hidden));
  const Vector<Scalar> o = sigmoid<Scalar>(w.output.preactivation(x, s.hidden));
  const Vector<Scalar> z = w.candidate.preactivation(x, s.hidden).array().tanh().matrix();
  BasicHiddenState<Scalar> next;
  next.cell = f.cwiseProduct(s.cell) + u.cwiseProduct(z);
  next.hidden = o.cwiseProduct(next.cell.array().tanh().matrix());
  return next;
}

/// Forget-gate activation for one step; used to estimate sup |f|.
template <typename Scalar, typename DerivedX>
Vector<Scalar> forget_gate(const BasicLstmWeights<Scalar>& w, const BasicHiddenState<Scalar>& s,
                           const Eigen::MatrixBase<DerivedX>& x) {
  return sigmoid<Scalar>(w.forget.preactivation(x, s.hidden));
}

template <typename Scalar>
struct BasicSequenceOutput {
  BasicHiddenState<Scalar> state;
  Vector<Scalar> logits;
  Vector<Scalar> belief;
};

template <typename Scalar>
void check_sequence_fits(const BasicLstmWeights<Scalar>& w, const BasicSequence<Scalar>& x) {
  x.validate();
  require(x.feature_dim() == w.input_dim(), ErrorCode::kDimensionMismatch,
          "sequence feature width " + std::to_string(x.feature_dim()) + " vs weights " +
              std::to_string(w.input_dim()));
}

template <typename Scalar, typename DerivedH>
Vector<Scalar> head_logits(const BasicLstmWeights<Scalar>& w,
                           const Eigen::MatrixBase<DerivedH>& hidden) {
  return w.head * hidden + w.head_bias;
}

/// States h(0), h(1), ..., h(T) with h(0) = 0.
template <typename Scalar>
std::vector<BasicHiddenState<Scalar>> run_trajectory(const BasicLstmWeights<Scalar>& w,
                                                     const BasicSequence<Scalar>& x) {
  check_sequence_fits(w, x);
  std::vector<BasicHiddenState<Scalar>> states;
  states.reserve(static_cast<std::size_t>(x.length()) + 1);
  states.push_back(BasicHiddenState<Scalar>::zeros(w.hidden_dim()));
  for (Eigen::Index t = 0; t < x.length(); ++t) {
    states.push_back(lstm_step(w, states.back(), x.steps.col(t)));
  }
  return states;
}

template <typename Scalar>
BasicSequenceOutput<Scalar> run_sequence(const BasicLstmWeights<Scalar>& w,
                                         const BasicSequence<Scalar>& x) {
  check_sequence_fits(w, x);
  BasicHiddenState<Scalar> s = BasicHiddenState<Scalar>::zeros(w.hidden_dim());
  for (Eigen::Index t = 0; t < x.length(); ++t) s = lstm_step(w, s, x.steps.col(t));
  BasicSequenceOutput<Scalar> out;
  out.logits = head_logits(w, s.hidden);
  out.belief = softmax(out.logits);
  out.state = std::move(s);
  return out;
}

/// max_t ||x(t) - y(t)|| with the Euclidean step norm.
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar seq_linf_distance(const Eigen::MatrixBase<DerivedA>& x,
                                            const Eigen::MatrixBase<DerivedB>& y) {
  require(x.rows() == y.rows() && x.cols() == y.cols(), ErrorCode::kDimensionMismatch,
          "sequences differ in shape");
  require(x.cols() >= 1, ErrorCode::kInvalidInput, "empty sequence");
  return (x - y).colwise().norm().maxCoeff();
}

template <typename Scalar>
Scalar seq_linf_distance(const BasicSequence<Scalar>& x, const BasicSequence<Scalar>& y) {
  return seq_linf_distance(x.steps, y.steps);
}

using Gate = BasicGate<double>;
using LstmWeights = BasicLstmWeights<double>;
using HiddenState = BasicHiddenState<double>;
using Sequence = BasicSequence<double>;
using SequenceOutput = BasicSequenceOutput<double>;

}  // namespace crnn
