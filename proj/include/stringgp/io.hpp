#pragma once

#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "stringgp/errors.hpp"
#include "stringgp/kernels.hpp"
#include "stringgp/membrane.hpp"
#include "stringgp/regression.hpp"
#include "stringgp/string_gp.hpp"

namespace stringgp::io {

using json = nlohmann::json;

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Parses JSON text; syntax errors report the line and column.
inline json parse_json(const std::string& text, const std::string& origin = "config") {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw InputError(origin + ": line " + std::to_string(line) + ", column " + std::to_string(col) +
                     ": malformed JSON");
  }
}

inline json load_json(const std::string& path) { return parse_json(read_file(path), path); }

namespace detail {

[[noreturn]] inline void bad_key(const std::string& where, const std::string& what) {
  throw InputError("config key '" + where + "': " + what);
}

inline const json& require(const json& j, const std::string& key, const std::string& where) {
  if (!j.is_object()) bad_key(where, "expected an object");
  auto it = j.find(key);
  if (it == j.end()) bad_key(where.empty() ? key : where + "." + key, "missing");
  return *it;
}

inline double number(const json& j, const std::string& where) {
  if (!j.is_number()) bad_key(where, "expected a number");
  return j.get<double>();
}

template <class T>
T value_or(const json& j, const std::string& key, T fallback, const std::string& where) {
  if (!j.is_object()) bad_key(where, "expected an object");
  auto it = j.find(key);
  if (it == j.end()) return fallback;
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    bad_key(where.empty() ? key : where + "." + key, "wrong type");
  }
}

inline std::vector<double> numbers(const json& j, const std::string& where) {
  if (!j.is_array()) bad_key(where, "expected an array of numbers");
  std::vector<double> v;
  for (std::size_t i = 0; i < j.size(); ++i) v.push_back(number(j[i], where + "[" + std::to_string(i) + "]"));
  return v;
}

}  // namespace detail

// {"family": "se", "params": {"variance": 1, "scale": 0.5}}; params may also be
// given as an array in canonical order.
inline KernelSpec kernel_from_json(const json& j, const std::string& where = "kernel") {
  KernelSpec k;
  const json& fam = detail::require(j, "family", where);
  if (!fam.is_string()) detail::bad_key(where + ".family", "expected a string");
  try {
    k.family = parse_family(fam.get<std::string>());
  } catch (const InputError& e) {
    detail::bad_key(where + ".family", e.what());
  }
  const json& p = detail::require(j, "params", where);
  if (p.is_array()) {
    k.params = detail::numbers(p, where + ".params");
  } else if (p.is_object()) {
    std::size_t comps = 1;
    if (k.family == Family::SpectralMixture) {
      comps = 0;
      while (p.contains("variance_" + std::to_string(comps + 1))) ++comps;
      if (comps == 0) comps = 1;
    }
    k.params.assign(k.family == Family::SpectralMixture ? 3 * comps : expected_param_count(k.family), 0.0);
    const auto names = param_names(k);
    for (const auto& [key, val] : p.items()) {
      auto it = std::find(names.begin(), names.end(), key);
      if (it == names.end()) detail::bad_key(where + ".params." + key, "unknown parameter for this family");
    }
    for (std::size_t i = 0; i < names.size(); ++i)
      k.params[i] = detail::number(detail::require(p, names[i], where + ".params"), where + ".params." + names[i]);
  } else {
    detail::bad_key(where + ".params", "expected an object or an array");
  }
  try {
    k.validate();
  } catch (const InputError& e) {
    detail::bad_key(where, e.what());
  }
  return k;
}

inline json kernel_to_json(const KernelSpec& k) {
  json p = json::object();
  const auto names = param_names(k);
  for (std::size_t i = 0; i < k.params.size(); ++i) p[names[i]] = k.params[i];
  return {{"family", family_name(k.family)}, {"params", p}};
}

inline MeanFunction mean_from_json(const json& j, const std::string& where) {
  if (j.is_number()) return MeanFunction::constant(j.get<double>());
  if (!j.is_string()) detail::bad_key(where, "expected \"zero\" or \"constant:c\"");
  const std::string s = j.get<std::string>();
  if (s == "zero") return MeanFunction::zero();
  if (s.rfind("constant:", 0) == 0) {
    try {
      std::size_t used = 0;
      const double c = std::stod(s.substr(9), &used);
      if (used == s.size() - 9) return MeanFunction::constant(c);
    } catch (const std::exception&) {
    }
  }
  detail::bad_key(where, "expected \"zero\" or \"constant:c\", got \"" + s + "\"");
}

inline std::string mean_to_string(const MeanFunction& m) {
  if (m.is_zero()) return "zero";
  const Vec2 v = m(0.0);
  std::ostringstream os;
  os << std::setprecision(17) << "constant:" << v(0);
  return os.str();
}

// {"boundaries": [...], "strings": [{"kernel": ..., "mean": ...}, ...]}. A
// top-level "kernel" (and "mean") applies to every string when "strings" is
// absent; {"lower", "upper", "count"} may replace "boundaries" for equal strings.
inline StringPartition partition_from_json(const json& j, const std::string& where = "partition") {
  if (!j.is_object()) detail::bad_key(where, "expected an object");
  StringPartition p;
  if (j.contains("boundaries")) {
    p.boundaries = detail::numbers(j["boundaries"], where + ".boundaries");
  } else if (j.contains("count")) {
    const double lo = detail::number(detail::require(j, "lower", where), where + ".lower");
    const double hi = detail::number(detail::require(j, "upper", where), where + ".upper");
    const int K = detail::value_or<int>(j, "count", 1, where);
    if (K < 1) detail::bad_key(where + ".count", "must be at least 1");
    p = StringPartition::uniform(KernelSpec{}, lo, hi, static_cast<std::size_t>(K));
    p.strings.clear();
  } else {
    detail::bad_key(where + ".boundaries", "missing");
  }
  if (p.boundaries.size() < 2) detail::bad_key(where + ".boundaries", "need at least two boundary times");
  const std::size_t K = p.boundaries.size() - 1;
  if (j.contains("strings")) {
    const json& s = j["strings"];
    if (!s.is_array()) detail::bad_key(where + ".strings", "expected an array");
    if (s.size() != K)
      detail::bad_key(where + ".strings", "expected " + std::to_string(K) + " strings, got " + std::to_string(s.size()));
    for (std::size_t i = 0; i < K; ++i) {
      const std::string w = where + ".strings[" + std::to_string(i) + "]";
      StringSpec spec;
      spec.kernel = kernel_from_json(detail::require(s[i], "kernel", w), w + ".kernel");
      if (s[i].contains("mean")) spec.mean = mean_from_json(s[i]["mean"], w + ".mean");
      p.strings.push_back(std::move(spec));
    }
  } else {
    StringSpec spec;
    spec.kernel = kernel_from_json(detail::require(j, "kernel", where), where + ".kernel");
    if (j.contains("mean")) spec.mean = mean_from_json(j["mean"], where + ".mean");
    p.strings.assign(K, spec);
  }
  try {
    p.validate(false);
  } catch (const InputError& e) {
    detail::bad_key(where, e.what());
  }
  return p;
}

inline json partition_to_json(const StringPartition& p) {
  json s = json::array();
  for (const auto& st : p.strings) s.push_back({{"kernel", kernel_to_json(st.kernel)}, {"mean", mean_to_string(st.mean)}});
  return {{"boundaries", p.boundaries}, {"strings", s}};
}

// {"kind": "sum" | "product" | "elementary" | "full_additive", "order": n, "weights": [...]}
inline LinkFunction link_from_json(const json& j, std::size_t d, const std::string& where = "link") {
  if (j.is_null()) return LinkFunction::sum(d);
  const std::string kind = detail::value_or<std::string>(j, "kind", "sum", where);
  LinkFunction l;
  if (kind == "sum") {
    l = LinkFunction::sum(d);
  } else if (kind == "product") {
    l = LinkFunction::product(d);
  } else if (kind == "elementary") {
    l = LinkFunction::elementary(d, static_cast<std::size_t>(detail::value_or<int>(j, "order", 1, where)));
  } else if (kind == "full_additive") {
    l = LinkFunction::full_additive(detail::numbers(detail::require(j, "weights", where), where + ".weights"));
  } else {
    detail::bad_key(where + ".kind", "unknown link kind '" + kind + "'");
  }
  if (l.dimension != d) detail::bad_key(where, "link dimension does not match the number of input dimensions");
  try {
    l.validate();
  } catch (const InputError& e) {
    detail::bad_key(where, e.what());
  }
  return l;
}

inline json link_to_json(const LinkFunction& l) {
  switch (l.kind) {
    case LinkKind::SymmetricSum: return {{"kind", "sum"}};
    case LinkKind::Product: return {{"kind", "product"}};
    case LinkKind::ElementarySymmetric: return {{"kind", "elementary"}, {"order", l.order}};
    case LinkKind::WeightedFullAdditive: return {{"kind", "full_additive"}, {"weights", l.weights}};
  }
  return {};
}

struct ModelConfig {
  RegressionModel model;  // without data
  FitConfig fit;
  std::vector<std::vector<std::size_t>> select_counts;  // optional boundary-count candidates
  InformationCriterion criterion = InformationCriterion::BIC;
};

// {"dims": [partition, ...], "link": ..., "noise": {"mode": "shared" | "per_string",
//  "variances": [...], "floor": f}, "fit": {...}, "select": {"counts": [[...]], "criterion": "aic"|"bic"}}
inline ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  const json& dims = detail::require(j, "dims", "");
  if (!dims.is_array() || dims.empty()) detail::bad_key("dims", "expected a non-empty array");
  for (std::size_t i = 0; i < dims.size(); ++i)
    c.model.dims.push_back(partition_from_json(dims[i], "dims[" + std::to_string(i) + "]"));
  c.model.link = link_from_json(j.value("link", json()), c.model.dims.size());
  if (j.contains("noise")) {
    const json& n = j["noise"];
    const std::string mode = detail::value_or<std::string>(n, "mode", "shared", "noise");
    if (mode == "shared")
      c.model.noise.mode = NoiseMode::Shared;
    else if (mode == "per_string")
      c.model.noise.mode = NoiseMode::PerString;
    else
      detail::bad_key("noise.mode", "expected \"shared\" or \"per_string\"");
    c.model.noise.floor = detail::value_or<double>(n, "floor", 0.0, "noise");
    if (n.contains("variances")) c.model.noise.variances = detail::numbers(n["variances"], "noise.variances");
  }
  const std::size_t groups = c.model.num_groups();
  if (c.model.noise.variances.size() == 1 && groups > 1) c.model.noise.variances.assign(groups, c.model.noise.variances[0]);
  if (c.model.noise.variances.size() != groups)
    detail::bad_key("noise.variances", "expected " + std::to_string(groups) + " values");
  for (double v : c.model.noise.variances)
    if (!(v > 0.0)) detail::bad_key("noise.variances", "must be positive");
  if (j.contains("fit")) {
    const json& f = j["fit"];
    c.fit.restarts = detail::value_or<int>(f, "restarts", c.fit.restarts, "fit");
    c.fit.seed = detail::value_or<std::uint64_t>(f, "seed", c.fit.seed, "fit");
    c.fit.learn_noise = detail::value_or<bool>(f, "learn_noise", c.fit.learn_noise, "fit");
    c.fit.learn_boundaries = detail::value_or<bool>(f, "learn_boundaries", c.fit.learn_boundaries, "fit");
    c.fit.spectral_init = detail::value_or<bool>(f, "spectral_init", c.fit.spectral_init, "fit");
    c.fit.optimizer.max_iterations = detail::value_or<int>(f, "max_iterations", c.fit.optimizer.max_iterations, "fit");
    if (c.fit.restarts < 0) detail::bad_key("fit.restarts", "must be non-negative");
  }
  if (j.contains("select")) {
    const json& s = j["select"];
    const json& counts = detail::require(s, "counts", "select");
    if (!counts.is_array() || counts.size() != c.model.dims.size())
      detail::bad_key("select.counts", "expected one candidate list per dimension");
    for (const auto& l : counts) {
      std::vector<std::size_t> v;
      for (double x : detail::numbers(l, "select.counts")) {
        if (!(x >= 1.0) || x != std::floor(x)) detail::bad_key("select.counts", "counts must be positive integers");
        v.push_back(static_cast<std::size_t>(x));
      }
      c.select_counts.push_back(v);
    }
    const std::string crit = detail::value_or<std::string>(s, "criterion", "bic", "select");
    if (crit == "aic")
      c.criterion = InformationCriterion::AIC;
    else if (crit == "bic")
      c.criterion = InformationCriterion::BIC;
    else
      detail::bad_key("select.criterion", "expected \"aic\" or \"bic\"");
  }
  return c;
}

inline json model_to_json(const RegressionModel& m, double log_likelihood) {
  json dims = json::array();
  for (const auto& p : m.dims) dims.push_back(partition_to_json(p));
  json noise = {{"mode", m.noise.mode == NoiseMode::Shared ? "shared" : "per_string"},
                {"variances", m.noise.variances},
                {"floor", m.noise.floor}};
  return {{"dims", dims}, {"link", link_to_json(m.link)}, {"noise", noise}, {"log_likelihood", log_likelihood}};
}

struct Table {
  std::vector<std::string> header;
  MatrixXd data;
};

// Numeric CSV with a header row.
inline Table read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path + "'");
  Table t;
  std::string line;
  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      const auto a = cell.find_first_not_of(" \t\r"), b = cell.find_last_not_of(" \t\r");
      out.push_back(a == std::string::npos ? "" : cell.substr(a, b - a + 1));
    }
    if (!s.empty() && s.back() == ',') out.emplace_back();
    return out;
  };
  if (!std::getline(in, line)) throw InputError(path + ": empty file, header row required");
  t.header = split(line);
  std::vector<std::vector<double>> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split(line);
    if (cells.size() != t.header.size())
      throw InputError(path + ": line " + std::to_string(lineno) + ": expected " + std::to_string(t.header.size()) +
                       " columns, got " + std::to_string(cells.size()));
    std::vector<double> r;
    for (const auto& c : cells) {
      try {
        std::size_t used = 0;
        r.push_back(std::stod(c, &used));
        if (used != c.size()) throw std::invalid_argument(c);
      } catch (const std::exception&) {
        throw InputError(path + ": line " + std::to_string(lineno) + ": '" + c + "' is not a number");
      }
    }
    rows.push_back(std::move(r));
  }
  if (!rows.empty() && t.header.size() > 0) {
    bool numeric_header = true;
    for (const auto& h : t.header) {
      try {
        std::size_t used = 0;
        std::stod(h, &used);
        numeric_header = numeric_header && used == h.size();
      } catch (const std::exception&) {
        numeric_header = false;
      }
    }
    if (numeric_header) throw InputError(path + ": header row required");
  }
  t.data.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(t.header.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t k = 0; k < rows[i].size(); ++k) t.data(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = rows[i][k];
  return t;
}

inline void write_csv(const std::string& path, const std::vector<std::string>& header, const MatrixXd& data) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write '" + path + "'");
  for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << '\n' << std::setprecision(17);
  for (Eigen::Index r = 0; r < data.rows(); ++r) {
    for (Eigen::Index c = 0; c < data.cols(); ++c) out << (c ? "," : "") << data(r, c);
    out << '\n';
  }
  if (!out) throw InputError("failed writing '" + path + "'");
}

inline void write_json(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write '" + path + "'");
  out << std::setw(2) << j << '\n';
  if (!out) throw InputError("failed writing '" + path + "'");
}

}  // namespace stringgp::io
