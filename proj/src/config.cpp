#include "crnn/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "crnn/lstm_io.hpp"

namespace crnn {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(text);
  while (std::getline(in, cur, ',')) {
    cur = trim(cur);
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

template <typename Int>
Int parse_int(const std::string& text) {
  Int v{};
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw std::invalid_argument("not an integer: '" + text + "'");
  }
  return v;
}

double parse_real(const std::string& text) {
  try {
    return parse_double(text);
  } catch (const Error&) {
    throw std::invalid_argument("not a number: '" + text + "'");
  }
}

bool parse_bool(const std::string& text) {
  if (text == "on" || text == "true" || text == "1" || text == "yes") return true;
  if (text == "off" || text == "false" || text == "0" || text == "no") return false;
  throw std::invalid_argument("expected on/off, got '" + text + "'");
}

std::string join(const std::vector<double>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ", ";
    out += format_double(values[i]);
  }
  return out;
}

struct Field {
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

template <typename T>
Field int_field(T ExperimentConfig::*member) {
  return {[member](ExperimentConfig& c, const std::string& v) { c.*member = parse_int<T>(v); },
          [member](const ExperimentConfig& c) { return std::to_string(c.*member); }};
}

template <typename Owner, typename T>
Field nested_int(Owner ExperimentConfig::*owner, T Owner::*member) {
  return {[=](ExperimentConfig& c, const std::string& v) { (c.*owner).*member = parse_int<T>(v); },
          [=](const ExperimentConfig& c) { return std::to_string((c.*owner).*member); }};
}

template <typename Owner>
Field nested_real(Owner ExperimentConfig::*owner, double Owner::*member) {
  return {[=](ExperimentConfig& c, const std::string& v) { (c.*owner).*member = parse_real(v); },
          [=](const ExperimentConfig& c) { return format_double((c.*owner).*member); }};
}

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = {
      {"dataset",
       {[](ExperimentConfig& c, const std::string& v) { c.dataset = parse_dataset_selector(v); },
        [](const ExperimentConfig& c) { return c.dataset.to_string(); }}},
      {"synth.classes", int_field(&ExperimentConfig::synth_classes)},
      {"synth.height", int_field(&ExperimentConfig::synth_height)},
      {"synth.width", int_field(&ExperimentConfig::synth_width)},
      {"synth.train_per_class", int_field(&ExperimentConfig::synth_train_per_class)},
      {"synth.test_per_class", int_field(&ExperimentConfig::synth_test_per_class)},
      {"mnist.train_per_class", int_field(&ExperimentConfig::mnist_train_per_class)},
      {"mnist.test_per_class", int_field(&ExperimentConfig::mnist_test_per_class)},
      {"sequence.window", nested_int(&ExperimentConfig::sequence, &SequenceConfig::window)},
      {"sequence.factor", nested_int(&ExperimentConfig::sequence, &SequenceConfig::factor)},
      {"sequence.length", nested_int(&ExperimentConfig::sequence, &SequenceConfig::length)},
      {"sequence.path_seed", nested_int(&ExperimentConfig::sequence, &SequenceConfig::path_seed)},
      {"model.hidden", int_field(&ExperimentConfig::hidden)},
      {"model.input",
       {[](ExperimentConfig& c, const std::string& v) { c.expect_input_dim = parse_int<int>(v); },
        [](const ExperimentConfig& c) {
          return c.expect_input_dim ? std::to_string(*c.expect_input_dim) : std::string();
        }}},
      {"model.classes",
       {[](ExperimentConfig& c, const std::string& v) { c.expect_classes = parse_int<int>(v); },
        [](const ExperimentConfig& c) {
          return c.expect_classes ? std::to_string(*c.expect_classes) : std::string();
        }}},
      {"train.learning_rate", nested_real(&ExperimentConfig::train, &TrainConfig::learning_rate)},
      {"train.epochs", nested_int(&ExperimentConfig::train, &TrainConfig::epochs)},
      {"train.batch_size", nested_int(&ExperimentConfig::train, &TrainConfig::batch_size)},
      {"train.tau", nested_real(&ExperimentConfig::train, &TrainConfig::tau)},
      {"train.seed", nested_int(&ExperimentConfig::train, &TrainConfig::seed)},
      {"train.forget_bias", nested_real(&ExperimentConfig::train, &TrainConfig::forget_bias)},
      {"train.beta1", nested_real(&ExperimentConfig::train, &TrainConfig::beta1)},
      {"train.beta2", nested_real(&ExperimentConfig::train, &TrainConfig::beta2)},
      {"train.epsilon", nested_real(&ExperimentConfig::train, &TrainConfig::epsilon)},
      {"train.lambda_snapshot_samples",
       nested_int(&ExperimentConfig::train, &TrainConfig::lambda_snapshot_samples)},
      {"train.per_step_f_sup",
       {[](ExperimentConfig& c, const std::string& v) { c.train.per_step_f_sup = parse_bool(v); },
        [](const ExperimentConfig& c) {
          return std::string(c.train.per_step_f_sup ? "on" : "off");
        }}},
      {"train.stability",
       {[](ExperimentConfig& c, const std::string& v) { c.stability = parse_stability_choice(v); },
        [](const ExperimentConfig& c) { return to_string(c.stability); }}},
      {"train.constraint",
       {[](ExperimentConfig& c, const std::string& v) {
          c.train.mode = parse_constraint_mode(v);
          c.estimation.mode = c.train.mode;
        },
        [](const ExperimentConfig& c) { return std::string(to_string(c.train.mode)); }}},
      {"estimate.lambda_samples",
       nested_int(&ExperimentConfig::estimation, &EstimationOptions::lambda_samples)},
      {"estimate.kappa_samples",
       nested_int(&ExperimentConfig::estimation, &EstimationOptions::kappa_samples)},
      {"estimate.lambda_radius",
       nested_real(&ExperimentConfig::estimation, &EstimationOptions::lambda_radius)},
      {"estimate.kappa_radius",
       nested_real(&ExperimentConfig::estimation, &EstimationOptions::kappa_radius)},
      {"estimate.seed", nested_int(&ExperimentConfig::estimation, &EstimationOptions::seed)},
      {"estimate.radius_subsample",
       nested_int(&ExperimentConfig::estimation, &EstimationOptions::radius_subsample)},
      {"estimate.inflation",
       {[](ExperimentConfig& c, const std::string& v) { c.inflation = parse_real(v); },
        [](const ExperimentConfig& c) { return format_double(c.inflation); }}},
      {"sweep.grid",
       {[](ExperimentConfig& c, const std::string& v) {
          c.sweep_grid.clear();
          for (const auto& item : split_list(v)) c.sweep_grid.push_back(parse_real(item));
        },
        [](const ExperimentConfig& c) { return join(c.sweep_grid); }}},
      {"sweep.budget_fractions",
       {[](ExperimentConfig& c, const std::string& v) {
          c.budget_fractions.clear();
          for (const auto& item : split_list(v)) c.budget_fractions.push_back(parse_real(item));
        },
        [](const ExperimentConfig& c) { return join(c.budget_fractions); }}},
      {"compare.perturbation",
       {[](ExperimentConfig& c, const std::string& v) {
          if (v == "none") {
            c.compare_perturbation.reset();
          } else {
            c.compare_perturbation = parse_perturbation(v);
          }
        },
        [](const ExperimentConfig& c) {
          if (!c.compare_perturbation) return std::string("none");
          const auto& p = *c.compare_perturbation;
          return std::string(to_string(p.kind)) + ":" + format_double(p.magnitude) + ":" +
                 std::to_string(p.seed);
        }}},
      {"out",
       {[](ExperimentConfig& c, const std::string& v) { c.out = v; },
        [](const ExperimentConfig& c) { return c.out.string(); }}},
  };
  return table;
}

[[noreturn]] void config_error(const std::string& where, const std::string& key,
                               const std::string& message) {
  fail(ErrorCode::kConfig, where + (key.empty() ? "" : ": field '" + key + "'") + ": " + message);
}

}  // namespace

std::string DatasetSelector::to_string() const {
  return kind == Kind::kSynthetic ? "synth:" + std::to_string(seed) : "mnist:" + dir.string();
}

DatasetSelector parse_dataset_selector(const std::string& text) {
  DatasetSelector sel;
  const auto colon = text.find(':');
  const std::string kind = text.substr(0, colon);
  const std::string arg = colon == std::string::npos ? "" : text.substr(colon + 1);
  if (kind == "synth") {
    sel.kind = DatasetSelector::Kind::kSynthetic;
    if (!arg.empty()) {
      try {
        sel.seed = parse_int<std::uint64_t>(arg);
      } catch (const std::invalid_argument& e) {
        fail(ErrorCode::kConfig, std::string("dataset: ") + e.what());
      }
    }
  } else if (kind == "mnist") {
    require(!arg.empty(), ErrorCode::kConfig, "dataset: mnist needs a directory (mnist:<dir>)");
    sel.kind = DatasetSelector::Kind::kMnist;
    sel.dir = arg;
  } else {
    fail(ErrorCode::kConfig, "dataset: expected synth:<seed> or mnist:<dir>, got '" + text + "'");
  }
  return sel;
}

StabilityChoice parse_stability_choice(const std::string& text) {
  if (text == "on") return StabilityChoice::kOn;
  if (text == "off") return StabilityChoice::kOff;
  if (text == "both") return StabilityChoice::kBoth;
  throw std::invalid_argument("expected on, off or both, got '" + text + "'");
}

std::string to_string(StabilityChoice choice) {
  switch (choice) {
    case StabilityChoice::kOn: return "on";
    case StabilityChoice::kOff: return "off";
    case StabilityChoice::kBoth: return "both";
  }
  return "on";
}

void ExperimentConfig::validate() const {
  auto check = [](bool ok, const std::string& key, const std::string& msg) {
    if (!ok) config_error("config", key, msg);
  };
  check(synth_classes >= 2, "synth.classes", "must be >= 2");
  check(synth_height >= 8 && synth_width >= 8, "synth.height", "maps must be at least 8x8");
  check(synth_train_per_class >= 1, "synth.train_per_class", "must be >= 1");
  check(synth_test_per_class >= 0, "synth.test_per_class", "must be >= 0");
  check(mnist_train_per_class >= 0, "mnist.train_per_class", "must be >= 0");
  check(mnist_test_per_class >= 0, "mnist.test_per_class", "must be >= 0");
  check(sequence.window >= 1, "sequence.window", "must be >= 1");
  check(sequence.factor >= 1 && sequence.window % sequence.factor == 0, "sequence.factor",
        "must divide sequence.window");
  check(sequence.length >= 1, "sequence.length", "must be >= 1");
  check(hidden >= 1, "model.hidden", "must be >= 1");
  check(inflation >= 1.0, "estimate.inflation", "must be >= 1");
  check(estimation.lambda_samples >= 1 && estimation.kappa_samples >= 1, "estimate.lambda_samples",
        "sample counts must be >= 1");
  check(estimation.lambda_radius > 0 && estimation.kappa_radius > 0, "estimate.lambda_radius",
        "radii must be > 0");
  check(!sweep_grid.empty(), "sweep.grid", "grid is empty");
  for (std::size_t i = 0; i < sweep_grid.size(); ++i) {
    check(std::isfinite(sweep_grid[i]) && sweep_grid[i] >= 0, "sweep.grid",
          "entries must be finite and >= 0");
    check(i == 0 || sweep_grid[i] > sweep_grid[i - 1], "sweep.grid", "must be strictly increasing");
  }
  for (double f : budget_fractions) {
    check(f > 0 && f < 1, "sweep.budget_fractions", "fractions must lie in (0, 1)");
  }
  check(train.learning_rate > 0 && std::isfinite(train.learning_rate), "train.learning_rate",
        "must be a positive finite number");
  check(train.epochs >= 1, "train.epochs", "must be >= 1");
  check(train.batch_size >= 1, "train.batch_size", "must be >= 1");
  check(stability == StabilityChoice::kOff || train.tau > 1.0, "train.tau",
        "must exceed 1 when the stability constraint is enabled");
  check(train.beta1 >= 0 && train.beta1 < 1, "train.beta1", "must lie in [0, 1)");
  check(train.beta2 >= 0 && train.beta2 < 1, "train.beta2", "must lie in [0, 1)");
  check(train.epsilon > 0, "train.epsilon", "must be > 0");
}

std::string ExperimentConfig::to_text() const {
  std::ostringstream out;
  for (const auto& [key, field] : fields()) {
    const std::string value = field.get(*this);
    if (!value.empty()) out << key << " = " << value << '\n';
  }
  return out.str();
}

ExperimentConfig parse_config(const std::string& text, const std::string& source) {
  ExperimentConfig config;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string where = source + ":" + std::to_string(line_no);
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) config_error(where, "", "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = fields().find(key);
    if (it == fields().end()) config_error(where, key, "unknown key");
    if (!seen.insert(key).second) config_error(where, key, "repeated key");
    try {
      it->second.set(config, value);
    } catch (const std::invalid_argument& e) {
      config_error(where, key, e.what());
    } catch (const Error& e) {
      config_error(where, key, e.what());
    }
  }
  config.validate();
  return config;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::kConfig, "cannot open config " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path.string());
}

}  // namespace crnn
