// stringgp command-line interface.
//
//   stringgp sample       --config partition.json --output path.csv [--seed s] [--grid n]
//   stringgp kernel-table --kernel se [--strings 2,4,8,16] [--grid 100] [--output table.csv]
//   stringgp fit          --data train.csv --config model.json --output fitted.json [--seed s]
//   stringgp predict      --data test.csv --config fitted.json --output predictions.csv
//   stringgp mcmc         --data train.csv --config mcmc.json --output run_dir [--iters --burnin --thin --seed]
//   stringgp experiment   --experiment f0 [--kernel periodic] [--strings 2] [--output dir] [--seed s]
//
// Exit codes: 0 success, 2 input error, 3 numerical failure.

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>

#include "stringgp/stringgp.hpp"

namespace fs = std::filesystem;
using namespace stringgp;
using io::json;

namespace {

struct Options {
  std::string config, data, output, kernel, strings, experiment, params, log_level = "warn";
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> iters, burnin, thin, grid;
};

std::vector<std::size_t> parse_counts(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      std::size_t used = 0;
      const long v = std::stol(tok, &used);
      if (used != tok.size() || v < 1) throw std::invalid_argument(tok);
      out.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw InputError("--strings expects positive integers separated by commas, got '" + s + "'");
    }
  }
  if (out.empty()) throw InputError("--strings is empty");
  return out;
}

std::vector<double> parse_reals(const std::string& s, const std::string& flag) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw InputError(flag + " expects numbers separated by commas, got '" + s + "'");
    }
  }
  return out;
}

void require(const std::string& value, const std::string& flag) {
  if (value.empty()) throw InputError(flag + " is required");
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw InputError("cannot create output directory '" + dir + "'");
}

json report_json(const experiments::ErrorReport& r) {
  return {{"abs_error_mean", r.abs_mean}, {"abs_error_2sd", r.abs_2sd}, {"sq_error_mean", r.sq_mean},
          {"sq_error_2sd", r.sq_2sd},     {"points", r.points}};
}

// ---------------------------------------------------------------- sample

int cmd_sample(const Options& o) {
  require(o.config, "--config");
  require(o.output, "--output");
  const json j = io::load_json(o.config);
  const StringPartition p = io::partition_from_json(j.contains("partition") ? j["partition"] : j, "partition");
  std::vector<std::vector<double>> times(p.num_strings());
  if (j.contains("string_times")) {
    const json& st = j["string_times"];
    if (!st.is_array() || st.size() != p.num_strings())
      throw InputError("config key 'string_times': expected one array per string");
    for (std::size_t s = 0; s < st.size(); ++s) {
      const std::string where = "string_times[" + std::to_string(s) + "]";
      if (!st[s].is_array()) throw InputError("config key '" + where + "': expected an array of numbers");
      for (const auto& v : st[s]) {
        if (!v.is_number()) throw InputError("config key '" + where + "': expected an array of numbers");
        times[s].push_back(v.get<double>());
      }
      std::sort(times[s].begin(), times[s].end());
    }
  }
  std::size_t per = j.value("points_per_string", 0);
  if (o.grid) per = *o.grid;
  if (per > 0 && !j.contains("string_times"))
    for (std::size_t s = 0; s < p.num_strings(); ++s)
      for (std::size_t i = 1; i <= per; ++i)
        times[s].push_back(p.boundaries[s] + (p.boundaries[s + 1] - p.boundaries[s]) * static_cast<double>(i) /
                                                 static_cast<double>(per + 1));
  const std::uint64_t seed = o.seed.value_or(j.value("seed", std::uint64_t{0}));
  const StringGP gp(p);
  Rng rng = substream(seed, {0x5a});
  const DerivativePathSample path = sample_path(gp, times, rng);
  MatrixXd out(static_cast<Eigen::Index>(path.times.size()), 3);
  for (std::size_t i = 0; i < path.times.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) << path.times[i], path.states[i](0), path.states[i](1);
  io::write_csv(o.output, {"t", "z", "dz"}, out);
  std::cout << "wrote " << path.times.size() << " rows to " << o.output << '\n';
  return 0;
}

// ---------------------------------------------------------------- kernel table

KernelSpec kernel_from_flags(const Options& o) {
  if (!o.config.empty()) {
    const json j = io::load_json(o.config);
    return io::kernel_from_json(j.contains("kernel") ? j["kernel"] : j);
  }
  const Family f = parse_family(o.kernel.empty() ? "se" : o.kernel);
  KernelSpec k;
  switch (f) {
    case Family::RationalQuadratic: k = KernelSpec::rational_quadratic(1.0, 0.5, 1.0); break;
    case Family::Periodic: k = KernelSpec::periodic(1.0, 0.5, 1.0); break;
    case Family::SpectralMixture: k = KernelSpec::spectral_mixture({1.0, 1.0, 1.0}); break;
    case Family::Linear: k = KernelSpec::linear(1.0, 0.0); break;
    default: k = KernelSpec{f, {1.0, 0.5}};
  }
  if (!o.params.empty()) k.params = parse_reals(o.params, "--params");
  k.validate();
  return k;
}

int cmd_kernel_table(const Options& o) {
  const KernelSpec k = kernel_from_flags(o);
  if (!k.stationary()) throw InputError("kernel table requires a stationary kernel");
  const auto counts = parse_counts(o.strings.empty() ? "2,4,8,16" : o.strings);
  const auto rows = kernel_error_table(k, counts, o.grid.value_or(100));
  MatrixXd out(static_cast<Eigen::Index>(rows.size()), 4);
  std::cout << "kernel " << family_name(k.family) << ", grid " << o.grid.value_or(100) << "\n";
  std::cout << "strings,min,avg,max\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) << static_cast<double>(rows[i].strings), rows[i].min, rows[i].avg, rows[i].max;
    std::cout << rows[i].strings << ',' << rows[i].min << ',' << rows[i].avg << ',' << rows[i].max << '\n';
  }
  if (!o.output.empty()) io::write_csv(o.output, {"strings", "min", "avg", "max"}, out);
  return 0;
}

// ---------------------------------------------------------------- fit / predict

void load_training(const std::string& path, std::size_t d, MatrixXd& X, VectorXd& y, std::vector<std::string>* names) {
  const io::Table t = io::read_csv(path);
  if (t.header.size() != d + 1)
    throw InputError(path + ": expected " + std::to_string(d) + " feature columns and one target column, got " +
                     std::to_string(t.header.size()) + " columns");
  if (t.data.rows() == 0) throw InputError(path + ": empty data set");
  X = t.data.leftCols(static_cast<Eigen::Index>(d));
  y = t.data.col(static_cast<Eigen::Index>(d));
  if (names) *names = t.header;
}

int cmd_fit(const Options& o) {
  require(o.data, "--data");
  require(o.config, "--config");
  const std::string out = o.output.empty() ? "fitted_model.json" : o.output;
  io::ModelConfig c = io::model_config_from_json(io::load_json(o.config));
  std::vector<std::string> names;
  load_training(o.data, c.model.dimension(), c.model.X, c.model.y, &names);
  if (o.seed) c.fit.seed = *o.seed;
  FitResult fit;
  json extra = json::object();
  if (!c.select_counts.empty()) {
    const BoundarySelection sel = select_boundaries(c.model, c.select_counts, c.criterion, c.fit);
    fit = sel.fit;
    json scores = json::array();
    for (const auto& [counts, score] : sel.scores) scores.push_back({{"counts", counts}, {"score", score}});
    extra = {{"selected_counts", sel.counts}, {"scores", scores}};
  } else {
    fit = fit_mle(c.model, c.fit);
  }
  json j = io::model_to_json(fit.model, fit.log_likelihood);
  j["fit"] = {{"num_parameters", fit.num_parameters},
              {"starts_tried", fit.starts_tried},
              {"line_search_failed", fit.line_search_failed},
              {"seed", c.fit.seed}};
  if (!extra.empty()) j["selection"] = extra;
  json X = json::array();
  for (Eigen::Index i = 0; i < fit.model.X.rows(); ++i) {
    std::vector<double> r;
    for (Eigen::Index k = 0; k < fit.model.X.cols(); ++k) r.push_back(fit.model.X(i, k));
    X.push_back(r);
  }
  j["train"] = {{"columns", names},
                {"X", X},
                {"y", std::vector<double>(fit.model.y.data(), fit.model.y.data() + fit.model.y.size())}};
  io::write_json(out, j);
  std::cout << "log marginal likelihood " << fit.log_likelihood << "; model written to " << out << '\n';
  if (fit.line_search_failed) std::cerr << "warning: line search failed; best iterate kept\n";
  return 0;
}

int cmd_predict(const Options& o) {
  require(o.data, "--data");
  require(o.config, "--config");
  require(o.output, "--output");
  const json j = io::load_json(o.config);
  io::ModelConfig c = io::model_config_from_json(j);
  if (!j.contains("train")) throw InputError("config key 'train': missing (predict expects a model written by fit)");
  const json& tr = j["train"];
  const std::size_t d = c.model.dimension();
  try {
    const auto& X = tr.at("X");
    const auto y = tr.at("y").get<std::vector<double>>();
    c.model.X.resize(static_cast<Eigen::Index>(X.size()), static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < X.size(); ++i) {
      const auto row = X[i].get<std::vector<double>>();
      if (row.size() != d) throw InputError("config key 'train.X': row width does not match model dimension");
      for (std::size_t k = 0; k < d; ++k) c.model.X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = row[k];
    }
    c.model.y = Eigen::Map<const VectorXd>(y.data(), static_cast<Eigen::Index>(y.size()));
  } catch (const json::exception&) {
    throw InputError("config key 'train': expected X (rows of numbers) and y (numbers)");
  }
  const io::Table t = io::read_csv(o.data);
  if (t.header.size() != d && t.header.size() != d + 1)
    throw InputError(o.data + ": expected " + std::to_string(d) + " feature columns (optionally followed by a target)");
  const MatrixXd Xs = t.data.leftCols(static_cast<Eigen::Index>(d));
  const Prediction p = predict(c.model, Xs);
  MatrixXd out(Xs.rows(), static_cast<Eigen::Index>(d + 2));
  out << Xs, p.mean, p.std();
  std::vector<std::string> header(t.header.begin(), t.header.begin() + static_cast<std::ptrdiff_t>(d));
  header.push_back("mean");
  header.push_back("std");
  io::write_csv(o.output, header, out);
  std::cout << "wrote " << Xs.rows() << " predictions to " << o.output << '\n';
  return 0;
}

// ---------------------------------------------------------------- mcmc

std::vector<double> per_dim(const json& j, const std::string& key, std::size_t n, std::optional<double> fallback) {
  if (!j.contains(key)) {
    if (!fallback) return {};
    return std::vector<double>(n, *fallback);
  }
  const json& v = j[key];
  if (v.is_number()) return std::vector<double>(n, v.get<double>());
  if (!v.is_array() || v.size() != n) throw InputError("config key '" + key + "': expected a number or " + std::to_string(n) + " numbers");
  std::vector<double> out;
  for (const auto& x : v) {
    if (!x.is_number()) throw InputError("config key '" + key + "': expected numbers");
    out.push_back(x.get<double>());
  }
  return out;
}

struct McmcSetup {
  McmcModel model;
  McmcConfig cfg;
  std::unique_ptr<Likelihood> lik;
  std::string variant = "whitened";
  double noise = 0.1, noise_shape = 1.0, noise_scale = 0.01;
  bool learn_noise = true;
  VectorXd y;
};

McmcSetup mcmc_setup(const Options& o, const json& j) {
  McmcSetup s;
  s.variant = j.value("variant", std::string("whitened"));
  if (s.variant != "whitened" && s.variant != "kernel")
    throw InputError("config key 'variant': expected \"whitened\" or \"kernel\"");
  const json lik = j.value("likelihood", json{{"kind", "gaussian"}});
  const std::string kind = lik.value("kind", std::string("gaussian"));
  const io::Table t = io::read_csv(o.data);
  if (t.data.rows() == 0) throw InputError(o.data + ": empty data set");
  MatrixXd X;
  std::unique_ptr<Likelihood> L;
  std::size_t outputs = 1;
  if (kind == "gaussian") {
    const std::size_t d = j.value("inputs", t.header.size() - 1);
    if (d == 0 || d >= t.header.size()) throw InputError("config key 'inputs': need at least one feature and one target column");
    outputs = t.header.size() - d;
    X = t.data.leftCols(static_cast<Eigen::Index>(d));
    VectorXd y(static_cast<Eigen::Index>(outputs) * t.data.rows());
    for (std::size_t l = 0; l < outputs; ++l) y.segment(static_cast<Eigen::Index>(l) * t.data.rows(), t.data.rows()) = t.data.col(static_cast<Eigen::Index>(d + l));
    s.noise = lik.value("noise", 0.1);
    s.noise_shape = lik.value("prior_shape", 1.0);
    s.noise_scale = lik.value("prior_scale", 0.01);
    const std::string upd = lik.value("update", std::string("conjugate"));
    GaussianLikelihood::Update u = GaussianLikelihood::Update::Conjugate;
    if (upd == "mh") u = GaussianLikelihood::Update::MetropolisHastings;
    else if (upd == "fixed") u = GaussianLikelihood::Update::Fixed;
    else if (upd != "conjugate") throw InputError("config key 'likelihood.update': expected conjugate, mh or fixed");
    s.learn_noise = u != GaussianLikelihood::Update::Fixed;
    s.y = y;
    L = std::make_unique<GaussianLikelihood>(y, s.noise, s.noise_shape, s.noise_scale, u);
  } else if (kind == "gamma_utility") {
    if (s.variant != "whitened") throw InputError("the gamma utility likelihood requires the whitened sampler");
    std::map<std::string, Eigen::Index> col;
    for (std::size_t i = 0; i < t.header.size(); ++i) col[t.header[i]] = static_cast<Eigen::Index>(i);
    for (const char* c : {"period", "asset", "characteristic", "gross_return"})
      if (!col.count(c)) throw InputError(o.data + ": gamma utility data needs columns period, asset, characteristic, gross_return");
    const double P = t.data.col(col["period"]).maxCoeff() + 1, A = t.data.col(col["asset"]).maxCoeff() + 1;
    const auto T = static_cast<std::size_t>(P), n = static_cast<std::size_t>(A);
    if (T * n != static_cast<std::size_t>(t.data.rows())) throw InputError(o.data + ": incomplete period/asset panel");
    MarketData m;
    m.gross_returns.resize(static_cast<Eigen::Index>(T), static_cast<Eigen::Index>(n));
    m.characteristics.resize(static_cast<Eigen::Index>(T), static_cast<Eigen::Index>(n));
    X.resize(t.data.rows(), 1);
    for (Eigen::Index r = 0; r < t.data.rows(); ++r) {
      const auto tt = static_cast<Eigen::Index>(t.data(r, col["period"])), ii = static_cast<Eigen::Index>(t.data(r, col["asset"]));
      if (r != tt * static_cast<Eigen::Index>(n) + ii) throw InputError(o.data + ": rows must be ordered by period, then asset");
      m.gross_returns(tt, ii) = t.data(r, col["gross_return"]);
      m.characteristics(tt, ii) = t.data(r, col["characteristic"]);
      X(r, 0) = m.characteristics(tt, ii);
    }
    const std::string u = lik.value("utility", std::string("sharpe"));
    if (u != "sharpe" && u != "excess") throw InputError("config key 'likelihood.utility': expected sharpe or excess");
    double shape = 0.0, rate = 0.0;
    if (lik.contains("shape")) {
      shape = lik.value("shape", 1.0);
      rate = lik.value("rate", 1.0);
    } else {
      std::tie(shape, rate) = gamma_from_moments(lik.value("mean", 2.0), lik.value("var", 1.0));
    }
    L = std::make_unique<GammaUtilityLikelihood>(m, u == "sharpe" ? UtilityKind::SharpeRatio : UtilityKind::ExcessReturn,
                                                 shape, rate);
  } else {
    throw InputError("config key 'likelihood.kind': expected gaussian or gamma_utility");
  }
  const std::size_t d = static_cast<std::size_t>(X.cols());
  MatrixXd Xs(0, X.cols());
  if (j.contains("test")) {
    const json& tj = j["test"];
    if (tj.is_string()) {
      const io::Table tt = io::read_csv(tj.get<std::string>());
      if (tt.header.size() < d) throw InputError("test inputs have fewer columns than the training features");
      Xs = tt.data.leftCols(static_cast<Eigen::Index>(d));
    } else if (tj.is_array()) {
      Xs.resize(static_cast<Eigen::Index>(tj.size()), static_cast<Eigen::Index>(d));
      for (std::size_t i = 0; i < tj.size(); ++i) {
        const json& row = tj[i].is_array() ? tj[i] : json::array({tj[i]});
        if (row.size() != d) throw InputError("config key 'test': row width does not match inputs");
        for (std::size_t k = 0; k < d; ++k) Xs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = row[k].get<double>();
      }
    } else {
      throw InputError("config key 'test': expected a CSV path or an array of input rows");
    }
  } else if (o.grid) {
    if (d != 1) throw InputError("--grid test points are only generated for one input dimension");
    const double lo = X.minCoeff(), hi = X.maxCoeff();
    Xs.resize(static_cast<Eigen::Index>(*o.grid), 1);
    for (std::size_t i = 0; i < *o.grid; ++i)
      Xs(static_cast<Eigen::Index>(i), 0) = *o.grid == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(*o.grid - 1);
  }
  const Family fam = parse_family(j.value("kernel", std::string("se")));
  KernelSpec probe = experiments::default_kernel(fam);
  s.model = McmcModel::from_inputs(X, Xs, fam, probe.size(), 1.0, 1.0, 1.0, outputs,
                                   io::link_from_json(j.value("link", json()), d));
  const std::size_t slots = s.model.num_slots();
  const auto alpha = per_dim(j, "alpha", slots, std::nullopt), beta = per_dim(j, "beta", slots, std::nullopt);
  const auto rho = per_dim(j, "rho", slots, 1.0);
  const auto init = per_dim(j, "init_log_theta", probe.size(), std::nullopt);
  for (std::size_t k = 0; k < slots; ++k) {
    auto& dm = s.model.slots[k];
    if (alpha.empty() != beta.empty()) throw InputError("config keys 'alpha' and 'beta' must be given together");
    if (alpha.empty()) {
      std::tie(dm.alpha, dm.beta) = default_hyperprior(dm.boundaries.size(), dm.upper - dm.lower);
    } else {
      dm.alpha = alpha[k];
      dm.beta = beta[k];
    }
    dm.rho = rho[k];
    if (!init.empty()) dm.init_log_theta = Eigen::Map<const VectorXd>(init.data(), static_cast<Eigen::Index>(init.size()));
  }
  s.cfg.iters = o.iters.value_or(j.value("iters", std::size_t{1000}));
  s.cfg.burnin = o.burnin.value_or(j.value("burnin", s.cfg.iters / 2));
  s.cfg.thin = o.thin.value_or(j.value("thin", std::size_t{1}));
  s.cfg.seed = o.seed.value_or(j.value("seed", std::uint64_t{0}));
  s.cfg.between_models = j.value("changepoints", true);
  s.cfg.update_changepoints = s.cfg.between_models;
  s.cfg.update_theta = j.value("learn_theta", true);
  if (s.cfg.burnin > s.cfg.iters) throw InputError("burn-in exceeds iterations");
  if (s.cfg.thin == 0) throw InputError("thinning must be positive");
  s.lik = std::move(L);
  return s;
}

int cmd_mcmc(const Options& o) {
  require(o.data, "--data");
  require(o.config, "--config");
  require(o.output, "--output");
  const json j = io::load_json(o.config);
  McmcSetup s = mcmc_setup(o, j);
  ensure_dir(o.output);
  const auto t0 = std::chrono::steady_clock::now();
  const Eigen::Index M = s.model.X_test.rows();
  const std::size_t d = s.model.input_dim;
  std::vector<VectorXd> draws;
  std::vector<std::vector<std::vector<double>>> cps;
  std::vector<std::size_t> iters;
  MatrixXd grads;
  json extra;
  if (s.variant == "whitened") {
    McmcSampler sampler(s.model, *s.lik, s.cfg);
    const McmcChain chain = sampler.run();
    draws = chain.f_test;
    cps = chain.changepoints;
    iters = chain.iterations;
    grads.resize(static_cast<Eigen::Index>(chain.grad_test.size()), chain.grad_test.empty() ? 0 : chain.grad_test[0].size());
    for (std::size_t i = 0; i < chain.grad_test.size(); ++i) grads.row(static_cast<Eigen::Index>(i)) = chain.grad_test[i].transpose();
    extra = {{"add", {chain.add_proposed, chain.add_accepted}},
             {"delete", {chain.delete_proposed, chain.delete_accepted}},
             {"shift", {chain.shift_proposed, chain.shift_accepted}},
             {"operations",
              {{"factor_builds", sampler.operations().factor_builds},
               {"unwhiten_steps", sampler.operations().unwhiten_steps},
               {"likelihood_evals", sampler.operations().likelihood_evals}}}};
  } else {
    if (s.model.outputs != 1) throw InputError("the kernel variant supports a single output");
    std::vector<McmcDimension> dims = s.model.slots;
    KernelSamplerConfig kc;
    kc.iters = s.cfg.iters;
    kc.burnin = s.cfg.burnin;
    kc.thin = s.cfg.thin;
    kc.seed = s.cfg.seed;
    kc.learn_noise = s.learn_noise;
    kc.noise_shape = s.noise_shape;
    kc.noise_scale = s.noise_scale;
    kc.between_models = s.cfg.between_models;
    KernelSampler ks(dims, s.model.link, s.model.X_train, s.y, s.model.X_test, s.noise, kc);
    const KernelSamplerChain chain = ks.run();
    draws = chain.f_test;
    cps = chain.boundaries;
    iters = chain.iterations;
    extra = {{"add", {chain.add_proposed, chain.add_accepted}}, {"delete", {chain.delete_proposed, chain.delete_accepted}}};
  }
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const Eigen::Index F = M * static_cast<Eigen::Index>(s.model.outputs);
  std::vector<std::string> header{"iteration"};
  for (Eigen::Index i = 0; i < F; ++i) header.push_back("f" + std::to_string(i));
  for (Eigen::Index i = 0; i < grads.cols(); ++i)
    header.push_back("grad" + std::to_string(i / static_cast<Eigen::Index>(d)) + "_" + std::to_string(i % static_cast<Eigen::Index>(d)));
  MatrixXd chain_out(static_cast<Eigen::Index>(iters.size()), static_cast<Eigen::Index>(header.size()));
  for (std::size_t r = 0; r < iters.size(); ++r) {
    const auto R = static_cast<Eigen::Index>(r);
    chain_out(R, 0) = static_cast<double>(iters[r]);
    if (F > 0) chain_out.block(R, 1, 1, F) = draws[r].transpose();
    if (grads.cols() > 0) chain_out.block(R, 1 + F, 1, grads.cols()) = grads.row(R);
  }
  io::write_csv((fs::path(o.output) / "chain.csv").string(), header, chain_out);

  {
    std::ofstream cp(fs::path(o.output) / "changepoints.csv");
    cp << "iteration,dimension,count,positions\n" << std::setprecision(17);
    for (std::size_t r = 0; r < iters.size(); ++r)
      for (std::size_t k = 0; k < cps[r].size(); ++k) {
        cp << iters[r] << ',' << k << ',' << cps[r][k].size() << ',';
        for (std::size_t q = 0; q < cps[r][k].size(); ++q) cp << (q ? ";" : "") << cps[r][k][q];
        cp << '\n';
      }
  }

  VectorXd mean = VectorXd::Zero(F), sq = VectorXd::Zero(F);
  for (const auto& f : draws) {
    mean += f;
    sq += f.cwiseProduct(f);
  }
  if (!draws.empty()) {
    mean /= static_cast<double>(draws.size());
    sq /= static_cast<double>(draws.size());
  }
  const VectorXd sd = (sq - mean.cwiseProduct(mean)).cwiseMax(0.0).cwiseSqrt();
  std::vector<std::string> ph;
  for (std::size_t k = 0; k < d; ++k) ph.push_back("x" + std::to_string(k));
  ph.insert(ph.end(), {"output", "mean", "std"});
  MatrixXd pred(F, static_cast<Eigen::Index>(d + 3));
  for (Eigen::Index i = 0; i < F; ++i) {
    pred.block(i, 0, 1, static_cast<Eigen::Index>(d)) = s.model.X_test.row(i % std::max<Eigen::Index>(M, 1));
    pred(i, static_cast<Eigen::Index>(d)) = static_cast<double>(i / std::max<Eigen::Index>(M, 1));
    pred(i, static_cast<Eigen::Index>(d + 1)) = mean(i);
    pred(i, static_cast<Eigen::Index>(d + 2)) = sd(i);
  }
  io::write_csv((fs::path(o.output) / "predictions.csv").string(), ph, pred);

  json hist = json::array();
  for (std::size_t k = 0; k < s.model.num_slots(); ++k) {
    std::map<std::size_t, std::size_t> h;
    for (const auto& r : cps) ++h[r[k].size()];
    json hk = json::object();
    for (const auto& [n, c] : h) hk[std::to_string(n)] = c;
    hist.push_back(hk);
  }
  json summary = {{"variant", s.variant},        {"iterations", s.cfg.iters}, {"burnin", s.cfg.burnin},
                  {"thin", s.cfg.thin},          {"seed", s.cfg.seed},        {"recorded", iters.size()},
                  {"seconds", seconds},          {"changepoint_histograms", hist}, {"moves", extra}};
  io::write_json((fs::path(o.output) / "summary.json").string(), summary);
  std::cout << "recorded " << iters.size() << " draws in " << seconds << " s; outputs in " << o.output << '\n';
  return 0;
}

// ---------------------------------------------------------------- experiments

int cmd_experiment(const Options& o) {
  require(o.experiment, "--experiment");
  const std::string id = o.experiment;
  const std::uint64_t seed = o.seed.value_or(0);
  json metrics = {{"experiment", id}, {"seed", seed}};
  std::string line;
  const auto t0 = std::chrono::steady_clock::now();
  if (id == "f0" || id == "f1") {
    const Family fam = parse_family(o.kernel.empty() ? "periodic" : o.kernel);
    const std::size_t K = o.strings.empty() ? 2 : parse_counts(o.strings).front();
    const auto r = experiments::run_extrapolation(id == "f0" ? 0 : 1, fam, K, seed);
    metrics["kernel"] = family_name(fam);
    metrics["strings"] = K;
    metrics["errors"] = report_json(r.report);
    metrics["log_likelihood"] = r.fit.log_likelihood;
    metrics["model"] = io::model_to_json(r.fit.model, r.fit.log_likelihood);
    std::ostringstream os;
    os << id << " " << family_name(fam) << " (" << K << " strings): abs error " << r.report.abs_mean << " +- "
       << r.report.abs_2sd << ", squared error " << r.report.sq_mean << " +- " << r.report.sq_2sd;
    line = os.str();
    if (!o.output.empty()) {
      ensure_dir(o.output);
      MatrixXd P(static_cast<Eigen::Index>(r.data.test_t.size()), 4);
      const VectorXd sd = r.prediction.std();
      for (std::size_t i = 0; i < r.data.test_t.size(); ++i) {
        const auto I = static_cast<Eigen::Index>(i);
        P.row(I) << r.data.test_t[i], r.data.test_y(I), r.prediction.mean(I), sd(I);
      }
      io::write_csv((fs::path(o.output) / "predictions.csv").string(), {"t", "truth", "mean", "std"}, P);
    }
  } else if (id == "f2" || id == "f3") {
    const Family fam = parse_family(o.kernel.empty() ? "periodic" : o.kernel);
    const std::size_t K = o.strings.empty() ? 2 : parse_counts(o.strings).front();
    const auto r = experiments::run_interpolation(id == "f2" ? 2 : 3, fam, K, seed, o.grid.value_or(100));
    metrics["kernel"] = family_name(fam);
    metrics["strings"] = K;
    metrics["errors"] = report_json(r.report);
    std::ostringstream os;
    os << id << " " << family_name(fam) << " (" << K << " strings per axis): abs error " << r.report.abs_mean
       << " +- " << r.report.abs_2sd << ", squared error " << r.report.sq_mean << " +- " << r.report.sq_2sd;
    line = os.str();
  } else if (id == "motorcycle-synthetic") {
    const Family fam = parse_family(o.kernel.empty() ? "matern32" : o.kernel);
    const auto r = experiments::run_motorcycle(seed, o.grid.value_or(133), fam);
    metrics["kernel"] = family_name(fam);
    metrics["group_predictive_sd"] = r.group_sd;
    metrics["group_noise_sd"] = r.noise_sd;
    metrics["rmse"] = r.rmse;
    std::ostringstream os;
    os << "motorcycle-synthetic: mean predictive sd per noise group " << r.group_sd[0] << ", " << r.group_sd[1]
       << ", " << r.group_sd[2] << "; rmse " << r.rmse;
    line = os.str();
  } else if (id == "airline-synthetic" || id == "spt-synthetic") {
    McmcConfig c;
    c.iters = o.iters.value_or(500);
    c.burnin = o.burnin.value_or(c.iters / 2);
    c.thin = o.thin.value_or(1);
    c.seed = seed;
    if (c.burnin > c.iters) throw InputError("burn-in exceeds iterations");
    if (c.thin == 0) throw InputError("thinning must be positive");
    std::ostringstream os;
    if (id == "airline-synthetic") {
      const auto r = experiments::run_airline(o.grid.value_or(2000), 3, c, seed);
      metrics["mse"] = r.mse;
      metrics["sampler_seconds"] = r.seconds;
      metrics["mean_changepoints"] = r.mean_changepoints;
      metrics["operations"] = {{"factor_builds", r.ops.factor_builds},
                               {"unwhiten_steps", r.ops.unwhiten_steps},
                               {"likelihood_evals", r.ops.likelihood_evals}};
      os << "airline-synthetic (N=" << o.grid.value_or(2000) << "): test mse " << r.mse << " in " << r.seconds << " s";
    } else {
      const auto r = experiments::run_portfolio(10, o.grid.value_or(250), c, seed);
      metrics["excess_log_wealth"] = r.excess_log_wealth;
      metrics["sharpe"] = r.sharpe;
      metrics["benchmark_sharpe"] = r.benchmark_sharpe;
      metrics["sampler_seconds"] = r.seconds;
      os << "spt-synthetic: excess log-wealth " << r.excess_log_wealth << ", Sharpe " << r.sharpe
         << " (equal weights " << r.benchmark_sharpe << ")";
    }
    line = os.str();
  } else {
    throw InputError("unknown experiment '" + id +
                     "' (expected f0, f1, f2, f3, motorcycle-synthetic, airline-synthetic or spt-synthetic)");
  }
  metrics["seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::cout << line << '\n';
  if (!o.output.empty()) {
    ensure_dir(o.output);
    io::write_json((fs::path(o.output) / "metrics.json").string(), metrics);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"String Gaussian processes: sampling, kernels, regression and reversible-jump MCMC"};
  app.require_subcommand(1);
  Options o;
  auto common = [&](CLI::App* c) {
    c->add_option("--log-level", o.log_level, "debug, info, warn, error or off");
  };
  auto* sample = app.add_subcommand("sample", "Draw a path and its derivative from a string GP");
  sample->add_option("--config", o.config, "Partition config (JSON)");
  sample->add_option("--output", o.output, "Output CSV (t, z, dz)");
  sample->add_option("--seed", o.seed, "Random seed");
  sample->add_option("--grid", o.grid, "Equally spaced interior points per string");
  auto* table = app.add_subcommand("kernel-table", "Errors of uniform string GP kernels against their base kernel");
  table->add_option("--kernel", o.kernel, "Kernel family (se, rq, matern32, matern52, periodic, sm)");
  table->add_option("--params", o.params, "Comma-separated kernel parameters");
  table->add_option("--config", o.config, "Kernel config (JSON), instead of --kernel");
  table->add_option("--strings", o.strings, "Comma-separated string counts");
  table->add_option("--grid", o.grid, "Grid resolution per axis");
  table->add_option("--output", o.output, "Output CSV");
  auto* fit = app.add_subcommand("fit", "Maximum marginal likelihood fit");
  fit->add_option("--data", o.data, "Training CSV: feature columns then target, header row");
  fit->add_option("--config", o.config, "Model config (JSON)");
  fit->add_option("--output", o.output, "Fitted model (JSON)");
  fit->add_option("--seed", o.seed, "Random seed for restarts");
  auto* pred = app.add_subcommand("predict", "Posterior predictions from a fitted model");
  pred->add_option("--data", o.data, "Test inputs CSV");
  pred->add_option("--config", o.config, "Fitted model written by fit");
  pred->add_option("--output", o.output, "Predictions CSV (features, mean, std)");
  auto* mcmc = app.add_subcommand("mcmc", "Reversible-jump MCMC over latent values, kernels and change-points");
  mcmc->add_option("--data", o.data, "Data CSV");
  mcmc->add_option("--config", o.config, "Sampler config (JSON)");
  mcmc->add_option("--output", o.output, "Output directory");
  mcmc->add_option("--seed", o.seed, "Random seed");
  mcmc->add_option("--iters", o.iters, "Iterations");
  mcmc->add_option("--burnin", o.burnin, "Burn-in iterations");
  mcmc->add_option("--thin", o.thin, "Thinning interval");
  mcmc->add_option("--grid", o.grid, "Number of equally spaced test points (one input dimension)");
  auto* exp = app.add_subcommand("experiment", "Synthetic benchmark experiments");
  exp->add_option("--experiment", o.experiment,
                  "f0, f1, f2, f3, motorcycle-synthetic, airline-synthetic or spt-synthetic");
  exp->add_option("--kernel", o.kernel, "Kernel family");
  exp->add_option("--strings", o.strings, "Number of strings");
  exp->add_option("--seed", o.seed, "Random seed");
  exp->add_option("--output", o.output, "Output directory");
  exp->add_option("--iters", o.iters, "MCMC iterations");
  exp->add_option("--burnin", o.burnin, "MCMC burn-in");
  exp->add_option("--thin", o.thin, "MCMC thinning");
  exp->add_option("--grid", o.grid, "Resolution or sample size");
  for (auto* c : {sample, table, fit, pred, mcmc, exp}) common(c);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  try {
    static const std::map<std::string, log::Level> levels{{"debug", log::Level::debug}, {"info", log::Level::info},
                                                          {"warn", log::Level::warn},   {"error", log::Level::error},
                                                          {"off", log::Level::off}};
    auto lv = levels.find(o.log_level);
    if (lv == levels.end()) throw InputError("unknown log level '" + o.log_level + "'");
    log::set_level(lv->second);
    if (sample->parsed()) return cmd_sample(o);
    if (table->parsed()) return cmd_kernel_table(o);
    if (fit->parsed()) return cmd_fit(o);
    if (pred->parsed()) return cmd_predict(o);
    if (mcmc->parsed()) return cmd_mcmc(o);
    if (exp->parsed()) return cmd_experiment(o);
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const DegeneracyError& e) {
    std::cerr << "error: degenerate model: " << e.what() << '\n';
    return 2;
  } catch (const json::exception& e) {
    std::cerr << "error: config: " << e.what() << '\n';
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
