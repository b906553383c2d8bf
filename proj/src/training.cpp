#include "crnn/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "crnn/parallel.hpp"
#include "crnn/random.hpp"
#include "crnn/simplex.hpp"

namespace crnn {

double lse_loss(const Eigen::VectorXd& logits, int k) {
  require(logits.size() >= 2, ErrorCode::kInvalidInput, "need at least two logits");
  require(k >= 0 && k < logits.size(), ErrorCode::kIndexOutOfRange, "label out of range");
  require(logits.allFinite(), ErrorCode::kInvalidInput, "non-finite logits");
  return std::max(0.0, log_sum_exp(logits) - logits[k]);
}

double nll_loss(const Eigen::VectorXd& belief, int k) {
  check_belief(belief);
  require(k >= 0 && k < belief.size(), ErrorCode::kIndexOutOfRange, "label out of range");
  return -std::log(belief[k]);
}

LstmWeights zeros_like(const LstmWeights& w) {
  return LstmWeights::zeros(w.input_dim(), w.hidden_dim(), w.num_classes());
}

void add_scaled(LstmWeights& dst, const LstmWeights& src, double scale) {
  std::vector<const Eigen::MatrixXd*> mats;
  std::vector<const Eigen::VectorXd*> vecs;
  for_each_parameter(src, [&](const std::string&, const auto& block) {
    if constexpr (std::is_same_v<std::decay_t<decltype(block)>, Eigen::MatrixXd>) {
      mats.push_back(&block);
    } else {
      vecs.push_back(&block);
    }
  });
  std::size_t mi = 0;
  std::size_t vi = 0;
  for_each_parameter(dst, [&](const std::string&, auto& block) {
    if constexpr (std::is_same_v<std::decay_t<decltype(block)>, Eigen::MatrixXd>) {
      block += scale * *mats[mi++];
    } else {
      block += scale * *vecs[vi++];
    }
  });
}

namespace {

struct StepCache {
  Eigen::VectorXd h_prev, c_prev, f, u, o, z, c, tanh_c;
};

struct SequenceGradient {
  LstmWeights grad;
  double loss = 0;
  bool correct = false;
};

void accumulate_gate(Gate& g, const Eigen::VectorXd& da, const Eigen::Ref<const Eigen::VectorXd>& x,
                     const Eigen::VectorXd& h_prev) {
  g.input.noalias() += da * x.transpose();
  g.recurrent.noalias() += da * h_prev.transpose();
  g.bias += da;
}

SequenceGradient sequence_gradient(const LstmWeights& w, const Sequence& seq) {
  check_sequence_fits(w, seq);
  require(seq.label.has_value(), ErrorCode::kInvalidInput, "training sequence has no label");
  const int k = *seq.label;
  require(k >= 0 && k < w.num_classes(), ErrorCode::kIndexOutOfRange,
          "label " + std::to_string(k) + " outside [0, " + std::to_string(w.num_classes()) + ")");
  const Eigen::Index b = w.hidden_dim();
  const Eigen::Index T = seq.length();

  std::vector<StepCache> cache(static_cast<std::size_t>(T));
  Eigen::VectorXd h = Eigen::VectorXd::Zero(b);
  Eigen::VectorXd c = Eigen::VectorXd::Zero(b);
  for (Eigen::Index t = 0; t < T; ++t) {
    StepCache& sc = cache[static_cast<std::size_t>(t)];
    const auto x = seq.steps.col(t);
    sc.h_prev = h;
    sc.c_prev = c;
    sc.f = sigmoid<double>(w.forget.preactivation(x, h));
    sc.u = sigmoid<double>(w.update.preactivation(x, h));
    sc.o = sigmoid<double>(w.output.preactivation(x, h));
    sc.z = w.candidate.preactivation(x, h).array().tanh().matrix();
    sc.c = sc.f.cwiseProduct(c) + sc.u.cwiseProduct(sc.z);
    sc.tanh_c = sc.c.array().tanh().matrix();
    c = sc.c;
    h = sc.o.cwiseProduct(sc.tanh_c);
  }
  const Eigen::VectorXd logits = head_logits(w, h);
  const Eigen::VectorXd belief = softmax(logits);

  SequenceGradient out{zeros_like(w), lse_loss(logits, k), false};
  const ArgmaxResult top = argmax_label(belief);
  out.correct = !top.boundary && top.label == k;

  Eigen::VectorXd dq = belief;
  dq[k] -= 1.0;
  out.grad.head.noalias() += dq * h.transpose();
  out.grad.head_bias += dq;
  Eigen::VectorXd dh = w.head.transpose() * dq;
  Eigen::VectorXd dc_next = Eigen::VectorXd::Zero(b);

  for (Eigen::Index t = T - 1; t >= 0; --t) {
    const StepCache& sc = cache[static_cast<std::size_t>(t)];
    const auto x = seq.steps.col(t);
    const Eigen::VectorXd d_o = dh.cwiseProduct(sc.tanh_c);
    const Eigen::VectorXd dc =
        dc_next + dh.cwiseProduct(sc.o).cwiseProduct((1.0 - sc.tanh_c.array().square()).matrix());
    const Eigen::VectorXd da_f =
        dc.cwiseProduct(sc.c_prev).cwiseProduct((sc.f.array() * (1.0 - sc.f.array())).matrix());
    const Eigen::VectorXd da_u =
        dc.cwiseProduct(sc.z).cwiseProduct((sc.u.array() * (1.0 - sc.u.array())).matrix());
    const Eigen::VectorXd da_o =
        d_o.cwiseProduct((sc.o.array() * (1.0 - sc.o.array())).matrix());
    const Eigen::VectorXd da_z =
        dc.cwiseProduct(sc.u).cwiseProduct((1.0 - sc.z.array().square()).matrix());
    accumulate_gate(out.grad.forget, da_f, x, sc.h_prev);
    accumulate_gate(out.grad.update, da_u, x, sc.h_prev);
    accumulate_gate(out.grad.output, da_o, x, sc.h_prev);
    accumulate_gate(out.grad.candidate, da_z, x, sc.h_prev);
    dh = w.forget.recurrent.transpose() * da_f + w.update.recurrent.transpose() * da_u +
         w.output.recurrent.transpose() * da_o + w.candidate.recurrent.transpose() * da_z;
    dc_next = dc.cwiseProduct(sc.f);
  }
  return out;
}

void check_gradient_finite(const LstmWeights& g) {
  for_each_parameter(g, [](const std::string& name, const auto& block) {
    if (!block.allFinite()) {
      Eigen::Index r = 0;
      Eigen::Index c = 0;
      for (r = 0; r < block.rows(); ++r) {
        for (c = 0; c < block.cols(); ++c) {
          if (!std::isfinite(block(r, c))) {
            fail(ErrorCode::kNumerical, "non-finite gradient in " + name + "(" +
                                            std::to_string(r) + "," + std::to_string(c) + ")");
          }
        }
      }
    }
  });
}

}  // namespace

BatchGradient backward(const LstmWeights& w, std::span<const Sequence* const> batch) {
  require(!batch.empty(), ErrorCode::kInvalidInput, "empty batch");
  w.validate();
  std::vector<SequenceGradient> parts(batch.size());
  parallel_for(batch.size(), [&](std::size_t i) { parts[i] = sequence_gradient(w, *batch[i]); });
  BatchGradient out{zeros_like(w), 0.0, 0};
  const double scale = 1.0 / static_cast<double>(batch.size());
  for (const SequenceGradient& part : parts) {
    add_scaled(out.gradient, part.grad, scale);
    out.loss += part.loss * scale;
    out.correct += part.correct ? 1 : 0;
  }
  check_gradient_finite(out.gradient);
  return out;
}

BatchGradient backward(const LstmWeights& w, const std::vector<Sequence>& batch) {
  std::vector<const Sequence*> ptrs;
  ptrs.reserve(batch.size());
  for (const Sequence& s : batch) ptrs.push_back(&s);
  return backward(w, std::span<const Sequence* const>(ptrs));
}

LstmWeights init_weights(Eigen::Index a, Eigen::Index b, Eigen::Index m, std::uint64_t seed,
                         double forget_bias) {
  LstmWeights w = LstmWeights::zeros(a, b, m);
  auto rng = make_rng(seed, 0x1417);
  const double r_in = 1.0 / std::sqrt(static_cast<double>(a));
  const double r_rec = 1.0 / std::sqrt(static_cast<double>(b));
  auto fill = [&](Eigen::MatrixXd& mat, double r) {
    std::uniform_real_distribution<double> dist(-r, r);
    for (Eigen::Index j = 0; j < mat.cols(); ++j) {
      for (Eigen::Index i = 0; i < mat.rows(); ++i) mat(i, j) = dist(rng);
    }
  };
  for (Gate* g : {&w.update, &w.output, &w.forget, &w.candidate}) {
    fill(g->input, r_in);
    fill(g->recurrent, r_rec);
  }
  fill(w.head, r_rec);
  w.forget.bias.setConstant(forget_bias);
  return w;
}

void TrainConfig::validate() const {
  require(learning_rate > 0.0 && std::isfinite(learning_rate), ErrorCode::kConfig,
          "learning_rate must be positive");
  require(epochs >= 1, ErrorCode::kConfig, "epochs must be >= 1");
  require(batch_size >= 1, ErrorCode::kConfig, "batch_size must be >= 1");
  require(!stability_enabled || tau > 1.0, ErrorCode::kConfig,
          "tau must exceed 1 when the stability constraint is enabled");
  require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, ErrorCode::kConfig,
          "Adam decay rates must lie in [0, 1)");
  require(epsilon > 0.0, ErrorCode::kConfig, "Adam epsilon must be positive");
}

std::string TrainHistory::to_csv() const {
  std::ostringstream out;
  out << "epoch,loss,train_accuracy,constraint_rounds,f_sup,lambda_hat,constraint_lhs,steps,"
         "steps_satisfied\n";
  for (const EpochRecord& e : epochs) {
    out << e.epoch << ',' << format_double(e.loss) << ',' << format_double(e.train_accuracy) << ','
        << e.constraint_rounds << ',' << format_double(e.f_sup) << ','
        << format_double(e.lambda_hat) << ',' << format_double(e.constraint_lhs) << ','
        << e.steps << ',' << e.steps_satisfied << '\n';
  }
  return out.str();
}

namespace {

void adam_update(LstmWeights& w, AdamState& state, const LstmWeights& grad,
                 const TrainConfig& cfg) {
  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  // The four structures share one parameter order; walk them in lockstep.
  std::vector<double*> wp, mp, vp;
  std::vector<const double*> gp;
  std::vector<Eigen::Index> sizes;
  for_each_parameter(w, [&](const std::string&, auto& block) {
    wp.push_back(block.data());
    sizes.push_back(block.size());
  });
  for_each_parameter(state.first, [&](const std::string&, auto& block) { mp.push_back(block.data()); });
  for_each_parameter(state.second, [&](const std::string&, auto& block) { vp.push_back(block.data()); });
  for_each_parameter(grad, [&](const std::string&, const auto& block) { gp.push_back(block.data()); });
  for (std::size_t blk = 0; blk < wp.size(); ++blk) {
    Eigen::Map<Eigen::ArrayXd> p(wp[blk], sizes[blk]);
    Eigen::Map<Eigen::ArrayXd> m1(mp[blk], sizes[blk]);
    Eigen::Map<Eigen::ArrayXd> m2(vp[blk], sizes[blk]);
    Eigen::Map<const Eigen::ArrayXd> g(gp[blk], sizes[blk]);
    m1 = cfg.beta1 * m1 + (1.0 - cfg.beta1) * g;
    m2 = cfg.beta2 * m2 + (1.0 - cfg.beta2) * g.square();
    p -= cfg.learning_rate * (m1 / c1) / ((m2 / c2).sqrt() + cfg.epsilon);
  }
}

}  // namespace

TrainResult train(LstmWeights weights, const std::vector<Sequence>& data,
                  const TrainConfig& config, const StepObserver& observer) {
  config.validate();
  weights.validate();
  require(!data.empty(), ErrorCode::kInvalidInput, "training data is empty");
  for (const Sequence& s : data) {
    check_sequence_fits(weights, s);
    require(s.label && *s.label >= 0 && *s.label < weights.num_classes(),
            ErrorCode::kInvalidInput, "sequence " + s.id + " has a missing or invalid label");
  }

  TrainResult result{std::move(weights), AdamState{}, TrainHistory{}};
  LstmWeights& w = result.weights;
  result.adam.first = zeros_like(w);
  result.adam.second = zeros_like(w);

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t global_step = 0;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    auto rng = make_rng(config.seed, static_cast<std::uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), rng);

    EpochRecord rec;
    rec.epoch = epoch;
    double f_sup = config.stability_enabled ? estimate_f_sup(w, data) : 0.0;
    double loss_sum = 0.0;
    std::size_t correct = 0;

    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::vector<const Sequence*> batch;
      batch.reserve(end - start);
      for (std::size_t i = start; i < end; ++i) batch.push_back(&data[order[i]]);

      const BatchGradient g = backward(w, batch);
      if (!std::isfinite(g.loss)) {
        result.history.epochs.push_back(rec);
        throw TrainingDiverged("non-finite loss at epoch " + std::to_string(epoch),
                               result.history);
      }
      loss_sum += g.loss * static_cast<double>(batch.size());
      correct += g.correct;
      adam_update(w, result.adam, g.gradient, config);

      int rounds = 0;
      if (config.stability_enabled) {
        if (config.per_step_f_sup) f_sup = estimate_f_sup(w, data);
        rounds = project_weights_in_place(w, config.tau, f_sup, config.mode);
        rec.constraint_rounds += rounds;
        if (constraint_check(w, f_sup, config.mode).satisfied) ++rec.steps_satisfied;
      }
      ++rec.steps;
      ++global_step;
      if (observer) observer(StepEvent{global_step, epoch, w, f_sup, rounds});
    }

    const double n = static_cast<double>(data.size());
    rec.loss = loss_sum / n;
    if (!std::isfinite(rec.loss)) {
      result.history.epochs.push_back(rec);
      throw TrainingDiverged("non-finite loss at epoch " + std::to_string(epoch), result.history);
    }
    rec.train_accuracy = static_cast<double>(correct) / n;
    rec.f_sup = config.stability_enabled ? f_sup : estimate_f_sup(w, data);
    rec.constraint_lhs = constraint_lhs(w, config.mode);
    if (config.lambda_snapshot_samples > 0) {
      rec.lambda_hat = estimate_lambda(w, build_sampling_pool(w, data),
                                       config.lambda_snapshot_samples, 0.1,
                                       splitmix64(config.seed + static_cast<std::uint64_t>(epoch)))
                           .value;
    }
    result.history.epochs.push_back(rec);
  }

  // f_sup was frozen within each epoch, so the final weights may miss the
  // constraint at their own f_sup. Re-measure and re-project to a fixed point.
  if (config.stability_enabled) {
    constexpr int kMaxClosingPasses = 100;
    for (int pass = 0; pass < kMaxClosingPasses; ++pass) {
      result.final_f_sup = estimate_f_sup(w, data);
      if (constraint_check(w, result.final_f_sup, config.mode).satisfied) {
        result.final_satisfied = true;
        break;
      }
      result.closing_rounds += project_weights_in_place(w, config.tau, result.final_f_sup,
                                                        config.mode);
    }
  }
  return result;
}

double accuracy(const LstmWeights& w, const std::vector<Sequence>& data) {
  require(!data.empty(), ErrorCode::kInvalidInput, "accuracy of empty dataset");
  std::vector<char> ok(data.size(), 0);
  parallel_for(data.size(), [&](std::size_t i) {
    const ArgmaxResult top = argmax_label(run_sequence(w, data[i]).belief);
    ok[i] = data[i].label && !top.boundary && top.label == *data[i].label;
  });
  return static_cast<double>(std::count(ok.begin(), ok.end(), 1)) /
         static_cast<double>(data.size());
}

std::optional<std::string> Checkpoint::meta_value(const std::string& key) const {
  for (const auto& [k, v] : meta) {
    if (k == key) return v;
  }
  return std::nullopt;
}

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path,
                     PackEncoding encoding) {
  Pack pack;
  pack.set_meta("kind", "checkpoint");
  for (const auto& [k, v] : ck.meta) pack.set_meta(k, v);
  store_weights(pack, ck.weights);
  if (ck.adam) {
    pack.set_meta("adam.step", std::to_string(ck.adam->step));
    store_weights(pack, ck.adam->first, "adam.first.");
    store_weights(pack, ck.adam->second, "adam.second.");
  }
  write_pack(pack, path, encoding);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const Pack pack = read_pack(path);
  Checkpoint ck{load_weights(pack), std::nullopt, {}};
  for (const auto& [k, v] : pack.meta) {
    if (k != "kind" && k != "adam.step") ck.meta.emplace_back(k, v);
  }
  if (const auto step = pack.meta_value("adam.step")) {
    AdamState adam{load_weights(pack, "adam.first."), load_weights(pack, "adam.second."),
                   std::stol(*step)};
    ck.adam = std::move(adam);
  }
  return ck;
}

}  // namespace crnn
