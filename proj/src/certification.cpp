#include "crnn/certification.hpp"

#include <cmath>
#include <map>
#include <sstream>

#include "crnn/lstm_io.hpp"
#include "crnn/parallel.hpp"
#include "crnn/simplex.hpp"

namespace crnn {
namespace {

void check_constants(double kappa, double lambda) {
  require(std::isfinite(kappa) && kappa >= 0.0, ErrorCode::kInvalidInput,
          "kappa must be finite and nonnegative");
  require(std::isfinite(lambda) && lambda >= 0.0, ErrorCode::kInvalidInput,
          "lambda must be finite and nonnegative");
  require(lambda < 1.0, ErrorCode::kUnstableModel,
          "lambda = " + format_double(lambda) + " >= 1: the deviation bound is undefined");
}

}  // namespace

double eta_bound(double kappa, double lambda, double wc_norm, Eigen::Index m) {
  check_constants(kappa, lambda);
  require(std::isfinite(wc_norm) && wc_norm >= 0.0, ErrorCode::kInvalidInput,
          "head norm must be finite and nonnegative");
  require(m >= 2, ErrorCode::kInvalidInput, "need m >= 2");
  return kappa * wc_norm / ((1.0 - lambda) * std::sqrt(static_cast<double>(m)));
}

double hidden_deviation_bound(double kappa, double lambda, int t, double d_inf) {
  check_constants(kappa, lambda);
  require(t >= 1, ErrorCode::kInvalidInput, "t must be >= 1");
  require(d_inf >= 0.0, ErrorCode::kInvalidInput, "distance must be nonnegative");
  return (1.0 - std::pow(lambda, t)) / (1.0 - lambda) * kappa * d_inf;
}

NominalSet nominal_set(const LstmWeights& w, const std::vector<Sequence>& dataset, int k) {
  require(k >= 0 && k < w.num_classes(), ErrorCode::kIndexOutOfRange, "class index out of range");
  std::vector<char> correct(dataset.size(), 0);
  parallel_for(dataset.size(), [&](std::size_t i) {
    const Sequence& s = dataset[i];
    if (!s.label || *s.label != k) return;
    const ArgmaxResult top = argmax_label(run_sequence(w, s).belief);
    correct[i] = !top.boundary && top.label == k;
  });
  NominalSet out;
  out.cls = k;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if (correct[i]) {
      out.members.push_back(i);
      out.ids.push_back(dataset[i].id);
    }
  }
  return out;
}

double robustness_radius(const std::vector<Eigen::VectorXd>& beliefs, int k, Eigen::Index m) {
  require(!beliefs.empty(), ErrorCode::kUndefinedRadius,
          "class " + std::to_string(k) + " has no nominal beliefs");
  require(k >= 0 && k < m, ErrorCode::kIndexOutOfRange, "class index out of range");
  std::vector<double> per_belief(beliefs.size());
  parallel_for(beliefs.size(), [&](std::size_t i) {
    const Eigen::VectorXd& p = beliefs[i];
    require(p.size() == m, ErrorCode::kDimensionMismatch, "belief length differs from m");
    require(p[k] >= p.maxCoeff(), ErrorCode::kInvalidInput,
            "belief " + std::to_string(i) + " is not classified as " + std::to_string(k));
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < m; ++j) {
      if (j != k) best = std::min(best, cell_distance(p, j));
    }
    per_belief[i] = best;
  });
  return *std::min_element(per_belief.begin(), per_belief.end());
}

double RobustnessCertificate::recomputed_eta() const {
  return kappa_used * wc_norm / ((1.0 - lambda_used) * std::sqrt(static_cast<double>(m)));
}

RobustnessCertificate make_certificate(double kappa_hat, double lambda_hat, double wc_norm,
                                       Eigen::Index m, double inflation, ConstantsSource source) {
  require(inflation >= 1.0, ErrorCode::kInvalidInput, "inflation factor must be >= 1");
  check_constants(kappa_hat, lambda_hat);
  RobustnessCertificate c;
  c.m = m;
  c.source = source;
  c.inflation = inflation;
  c.kappa_hat = kappa_hat;
  c.lambda_hat = lambda_hat;
  c.kappa_used = inflation * kappa_hat;
  c.lambda_used = 1.0 - (1.0 - lambda_hat) / inflation;
  c.wc_norm = wc_norm;
  c.eta = eta_bound(c.kappa_used, c.lambda_used, wc_norm, m);
  return c;
}

double certified_budget(const RobustnessCertificate& cert, int k) {
  for (const ClassCertificate& c : cert.classes) {
    if (c.cls != k) continue;
    require(c.epsilon.has_value(), ErrorCode::kUndefinedRadius,
            "class " + std::to_string(k + 1) + " has an empty nominal set");
    if (cert.eta == 0.0) return std::numeric_limits<double>::infinity();
    return *c.epsilon / cert.eta;
  }
  fail(ErrorCode::kIndexOutOfRange, "certificate has no class " + std::to_string(k + 1));
}

CertifiedCheck check_certified(const Sequence& perturbed, const std::vector<Sequence>& nominal,
                               double budget) {
  require(!nominal.empty(), ErrorCode::kInvalidInput, "empty nominal set");
  CertifiedCheck out;
  for (std::size_t i = 0; i < nominal.size(); ++i) {
    const double d = seq_linf_distance(nominal[i], perturbed);
    if (d < out.distance) {
      out.distance = d;
      out.witness = i;
    }
  }
  out.certified = out.distance < budget;
  return out;
}

// Text form:
//   format=crnn-certificate
//   version=1
//   <key>=<value> ...
//   [classes]
//   class,nominal_count,epsilon,budget,nominal_ids
//   <1-based class>,<count>,<eps|undefined>,<budget|undefined|inf>,<id;id;...>
std::string RobustnessCertificate::to_text() const {
  std::ostringstream out;
  out << "format=crnn-certificate\nversion=1\n";
  out << "m=" << m << '\n';
  out << "constants=" << (source == ConstantsSource::kEmpirical ? "empirical" : "assumed") << '\n';
  out << "inflation=" << format_double(inflation) << '\n';
  out << "kappa_hat=" << format_double(kappa_hat) << '\n';
  out << "lambda_hat=" << format_double(lambda_hat) << '\n';
  out << "kappa_used=" << format_double(kappa_used) << '\n';
  out << "lambda_used=" << format_double(lambda_used) << '\n';
  out << "wc_norm=" << format_double(wc_norm) << '\n';
  out << "eta=" << format_double(eta) << '\n';
  out << "degenerate=" << (degenerate() ? 1 : 0) << '\n';
  out << "radius_subsampled=" << (radius_subsampled ? 1 : 0) << '\n';
  out << "[classes]\nclass,nominal_count,epsilon,budget,nominal_ids\n";
  for (const ClassCertificate& c : classes) {
    out << c.cls + 1 << ',' << c.nominal_count << ',';
    if (c.epsilon) {
      out << format_double(*c.epsilon) << ','
          << format_double(eta == 0.0 ? std::numeric_limits<double>::infinity() : *c.epsilon / eta);
    } else {
      out << "undefined,undefined";
    }
    out << ',';
    for (std::size_t i = 0; i < c.nominal_ids.size(); ++i) {
      if (i) out << ';';
      out << c.nominal_ids[i];
    }
    out << '\n';
  }
  return out.str();
}

RobustnessCertificate RobustnessCertificate::from_text(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::map<std::string, std::string> kv;
  bool in_table = false;
  bool header_seen = false;
  RobustnessCertificate c;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (!in_table) {
      if (line == "[classes]") {
        in_table = true;
        continue;
      }
      const auto eq = line.find('=');
      require(eq != std::string::npos, ErrorCode::kFormat, "certificate line without '=': " + line);
      kv[line.substr(0, eq)] = line.substr(eq + 1);
      continue;
    }
    if (!header_seen) {
      require(line == "class,nominal_count,epsilon,budget,nominal_ids", ErrorCode::kFormat,
              "unexpected class table header");
      header_seen = true;
      continue;
    }
    std::vector<std::string> cells;
    std::size_t start = 0;
    for (int f = 0; f < 4; ++f) {
      const auto comma = line.find(',', start);
      require(comma != std::string::npos, ErrorCode::kFormat, "short class row: " + line);
      cells.push_back(line.substr(start, comma - start));
      start = comma + 1;
    }
    cells.push_back(line.substr(start));
    ClassCertificate cc;
    cc.cls = std::stoi(cells[0]) - 1;
    cc.nominal_count = std::stoul(cells[1]);
    if (cells[2] != "undefined") cc.epsilon = parse_double(cells[2]);
    std::size_t pos = 0;
    const std::string& ids = cells[4];
    while (pos < ids.size()) {
      const auto semi = ids.find(';', pos);
      const auto end = semi == std::string::npos ? ids.size() : semi;
      cc.nominal_ids.push_back(ids.substr(pos, end - pos));
      pos = end + 1;
    }
    c.classes.push_back(std::move(cc));
  }
  auto get = [&](const std::string& key) {
    const auto it = kv.find(key);
    require(it != kv.end(), ErrorCode::kFormat, "certificate missing " + key);
    return it->second;
  };
  require(get("format") == "crnn-certificate", ErrorCode::kFormat, "not a certificate");
  require(get("version") == "1", ErrorCode::kFormat, "unsupported certificate version");
  c.m = std::stol(get("m"));
  const std::string source = get("constants");
  require(source == "empirical" || source == "assumed", ErrorCode::kFormat,
          "unknown constants source " + source);
  c.source = source == "empirical" ? ConstantsSource::kEmpirical : ConstantsSource::kAssumed;
  c.inflation = parse_double(get("inflation"));
  c.kappa_hat = parse_double(get("kappa_hat"));
  c.lambda_hat = parse_double(get("lambda_hat"));
  c.kappa_used = parse_double(get("kappa_used"));
  c.lambda_used = parse_double(get("lambda_used"));
  c.wc_norm = parse_double(get("wc_norm"));
  c.eta = parse_double(get("eta"));
  c.radius_subsampled = get("radius_subsampled") == "1";
  return c;
}

}  // namespace crnn
