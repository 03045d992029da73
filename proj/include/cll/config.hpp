#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cll/core.hpp"
#include "cll/dataset_io.hpp"

namespace cll {

inline std::string to_string(DatasetKind k) {
  switch (k) {
    case DatasetKind::Idx: return "idx";
    case DatasetKind::Cifar10: return "cifar10";
    default: return "cifar20";
  }
}
inline std::string to_string(LossKind k) {
  switch (k) {
    case LossKind::SclNl: return "scl-nl";
    case LossKind::SclExp: return "scl-exp";
    default: return "fwd";
  }
}
inline std::string to_string(MixKind k) {
  switch (k) {
    case MixKind::None: return "none";
    case MixKind::Mixup: return "mixup";
    case MixKind::Icm: return "icm";
    case MixKind::Micm: return "micm";
    case MixKind::MixupNf: return "mixup-nf";
    case MixKind::IntraClassNf: return "intra-nf";
    default: return "extra-nf";
  }
}
inline std::string to_string(OptKind k) {
  return k == OptKind::Adam ? "adam" : "sgd";
}
inline std::string to_string(BForm k) {
  return k == BForm::ExcludeTrue ? "exclude-true" : "exclude-given";
}

// Flat key=value experiment configuration. '#' starts a comment; blank
// lines are skipped; unknown keys are an error, so typos fail loudly
// instead of silently running defaults.
struct ExperimentConfig {
  std::string run_name = "run";
  DatasetKind dataset = DatasetKind::Idx;
  std::string images;
  std::string labels;
  std::string comp_labels;
  std::string clusters;
  std::string embeddings;
  std::string subset;
  std::string test_images;
  std::string test_labels;
  double test_fraction = 0.0;
  double val_fraction = 0.0;
  int K = 0;  // 0 = infer from data
  LossKind loss = LossKind::SclNl;
  double gamma = 1e-6;
  MixKind policy = MixKind::None;
  double alpha = 0.1;
  int kc = 50;
  double idw_c = 30.0;
  int setup = 0;  // 0 = none, 1/2/3 = label-generation setups
  double rho_ord = 1.0;
  double rho_trans = 1.0;
  int batch_size = 512;
  int epochs = 30;
  double lr = 1e-4;
  double weight_decay = 1e-4;
  OptKind optimizer = OptKind::Adam;
  std::uint64_t seed = 1;
  std::vector<int> hidden = {256};
  int embed_dim = 64;
  bool oracle_diagnostics = false;
  bool exhaustive = false;
  BForm b_form = BForm::ExcludeTrue;
  int grad_subsample = 2000;
  int grad_epochs = 10;
  int trials = 20;
  int max_iter = 300;
  double tol = 1e-4;

  void validate() const {
    if (!(alpha > 0.0)) throw ConfigError("alpha must be positive");
    if (!(gamma > 0.0 && gamma < 1.0))
      throw ConfigError("gamma must lie strictly between 0 and 1");
    if (!(idw_c > 0.0)) throw ConfigError("idw_c must be positive");
    if (kc < 1) throw ConfigError("kc must be at least 1");
    if (setup < 0 || setup > 3) throw ConfigError("setup must be 0, 1, 2 or 3");
    if (!(rho_ord >= 1.0)) throw ConfigError("rho_ord must be >= 1");
    if (!(rho_trans >= 1.0)) throw ConfigError("rho_trans must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
    if (epochs < 0) throw ConfigError("epochs must be non-negative");
    if (!(lr > 0.0)) throw ConfigError("lr must be positive");
    if (weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
    if (K != 0 && K <= 2)
      throw ConfigError("K must exceed 2: a complementary label rules out "
                        "one class, which determines the answer when K = 2");
    if (!(test_fraction >= 0.0 && test_fraction <= 0.5))
      throw ConfigError("test_fraction must lie in [0, 0.5]");
    if (!(val_fraction >= 0.0 && val_fraction <= 0.5))
      throw ConfigError("val_fraction must lie in [0, 0.5]");
    for (int h : hidden)
      if (h < 1) throw ConfigError("hidden widths must be positive");
    if (embed_dim < 1) throw ConfigError("embed_dim must be at least 1");
    if (grad_subsample < 1) throw ConfigError("grad_subsample must be >= 1");
    if (grad_epochs < 1) throw ConfigError("grad_epochs must be >= 1");
    if (trials < 1) throw ConfigError("trials must be >= 1");
    if (max_iter < 1) throw ConfigError("max_iter must be >= 1");
    if (!(tol >= 0.0)) throw ConfigError("tol must be >= 0");
  }

  // Key-sorted resolved view; feeds manifests and run identity.
  std::map<std::string, std::string> resolved() const;
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

inline bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config key '" + key + "' expects true or false, got '" +
                    v + "'");
}

inline double config_double(const std::string& v, const std::string& key) {
  try {
    return parse_double(v, "config value");
  } catch (const DataError&) {
    throw ConfigError("config key '" + key + "' expects a number, got '" + v +
                      "'");
  }
}

inline long long config_int(const std::string& v, const std::string& key) {
  try {
    return parse_int(v, "config value");
  } catch (const DataError&) {
    throw ConfigError("config key '" + key + "' expects an integer, got '" +
                      v + "'");
  }
}

inline std::vector<int> parse_hidden(const std::string& v) {
  std::vector<int> out;
  if (trim(v).empty()) return out;
  for (const auto& part : split(v, ',')) {
    out.push_back(static_cast<int>(config_int(trim(part), "hidden")));
  }
  return out;
}

}  // namespace detail

inline void apply_config_entry(ExperimentConfig& c, const std::string& key,
                               const std::string& value) {
  auto bad_enum = [&](const std::string& allowed) -> ConfigError {
    return ConfigError("config key '" + key + "' expects one of " + allowed +
                       ", got '" + value + "'");
  };
  if (key == "run_name") c.run_name = value;
  else if (key == "dataset") {
    if (value == "idx") c.dataset = DatasetKind::Idx;
    else if (value == "cifar10") c.dataset = DatasetKind::Cifar10;
    else if (value == "cifar20") c.dataset = DatasetKind::Cifar20;
    else throw bad_enum("idx|cifar10|cifar20");
  } else if (key == "images") c.images = value;
  else if (key == "labels") c.labels = value;
  else if (key == "comp_labels") c.comp_labels = value;
  else if (key == "clusters") c.clusters = value;
  else if (key == "embeddings") c.embeddings = value;
  else if (key == "subset") c.subset = value;
  else if (key == "test_images") c.test_images = value;
  else if (key == "test_labels") c.test_labels = value;
  else if (key == "test_fraction") c.test_fraction = detail::config_double(value, key);
  else if (key == "val_fraction") c.val_fraction = detail::config_double(value, key);
  else if (key == "K") c.K = static_cast<int>(detail::config_int(value, key));
  else if (key == "loss") {
    if (value == "scl-nl") c.loss = LossKind::SclNl;
    else if (value == "scl-exp") c.loss = LossKind::SclExp;
    else if (value == "fwd") c.loss = LossKind::Fwd;
    else throw bad_enum("scl-nl|scl-exp|fwd");
  } else if (key == "gamma") c.gamma = detail::config_double(value, key);
  else if (key == "policy") {
    if (value == "none") c.policy = MixKind::None;
    else if (value == "mixup") c.policy = MixKind::Mixup;
    else if (value == "icm") c.policy = MixKind::Icm;
    else if (value == "micm") c.policy = MixKind::Micm;
    else if (value == "mixup-nf") c.policy = MixKind::MixupNf;
    else if (value == "intra-nf") c.policy = MixKind::IntraClassNf;
    else if (value == "extra-nf") c.policy = MixKind::ExtraClassNf;
    else throw bad_enum("none|mixup|icm|micm|mixup-nf|intra-nf|extra-nf");
  } else if (key == "alpha") c.alpha = detail::config_double(value, key);
  else if (key == "kc") c.kc = static_cast<int>(detail::config_int(value, key));
  else if (key == "idw_c") c.idw_c = detail::config_double(value, key);
  else if (key == "setup") c.setup = static_cast<int>(detail::config_int(value, key));
  else if (key == "rho_ord") c.rho_ord = detail::config_double(value, key);
  else if (key == "rho_trans") c.rho_trans = detail::config_double(value, key);
  else if (key == "batch_size") c.batch_size = static_cast<int>(detail::config_int(value, key));
  else if (key == "epochs") c.epochs = static_cast<int>(detail::config_int(value, key));
  else if (key == "lr") c.lr = detail::config_double(value, key);
  else if (key == "weight_decay") c.weight_decay = detail::config_double(value, key);
  else if (key == "optimizer") {
    if (value == "adam") c.optimizer = OptKind::Adam;
    else if (value == "sgd") c.optimizer = OptKind::Sgd;
    else throw bad_enum("adam|sgd");
  } else if (key == "seed") c.seed = static_cast<std::uint64_t>(detail::config_int(value, key));
  else if (key == "hidden") c.hidden = detail::parse_hidden(value);
  else if (key == "embed_dim") c.embed_dim = static_cast<int>(detail::config_int(value, key));
  else if (key == "oracle_diagnostics") c.oracle_diagnostics = detail::parse_bool(value, key);
  else if (key == "exhaustive") c.exhaustive = detail::parse_bool(value, key);
  else if (key == "b_form") {
    if (value == "exclude-true") c.b_form = BForm::ExcludeTrue;
    else if (value == "exclude-given") c.b_form = BForm::ExcludeGiven;
    else throw bad_enum("exclude-true|exclude-given");
  } else if (key == "grad_subsample") c.grad_subsample = static_cast<int>(detail::config_int(value, key));
  else if (key == "grad_epochs") c.grad_epochs = static_cast<int>(detail::config_int(value, key));
  else if (key == "trials") c.trials = static_cast<int>(detail::config_int(value, key));
  else if (key == "max_iter") c.max_iter = static_cast<int>(detail::config_int(value, key));
  else if (key == "tol") c.tol = detail::config_double(value, key);
  else throw ConfigError("unknown config key: '" + key + "'");
}

inline ExperimentConfig parse_config_text(const std::string& text) {
  ExperimentConfig c;
  std::size_t lineno = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto nl = text.find('\n', start);
    std::string line = text.substr(
        start, nl == std::string::npos ? std::string::npos : nl - start);
    start = nl == std::string::npos ? text.size() + 1 : nl + 1;
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) +
                        " is not 'key = value': '" + line + "'");
    std::string key = detail::trim(line.substr(0, eq));
    std::string value = detail::trim(line.substr(eq + 1));
    if (key.empty())
      throw ConfigError("empty config key on line " + std::to_string(lineno));
    apply_config_entry(c, key, value);
  }
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::string text{std::istreambuf_iterator<char>(in),
                   std::istreambuf_iterator<char>()};
  return parse_config_text(text);
}

inline std::map<std::string, std::string> ExperimentConfig::resolved() const {
  std::map<std::string, std::string> m;
  m["run_name"] = run_name;
  m["dataset"] = cll::to_string(dataset);
  m["images"] = images;
  m["labels"] = labels;
  m["comp_labels"] = comp_labels;
  m["clusters"] = clusters;
  m["embeddings"] = embeddings;
  m["subset"] = subset;
  m["test_images"] = test_images;
  m["test_labels"] = test_labels;
  m["test_fraction"] = detail::fmt_double(test_fraction);
  m["val_fraction"] = detail::fmt_double(val_fraction);
  m["K"] = std::to_string(K);
  m["loss"] = cll::to_string(loss);
  m["gamma"] = detail::fmt_double(gamma);
  m["policy"] = cll::to_string(policy);
  m["alpha"] = detail::fmt_double(alpha);
  m["kc"] = std::to_string(kc);
  m["idw_c"] = detail::fmt_double(idw_c);
  m["setup"] = std::to_string(setup);
  m["rho_ord"] = detail::fmt_double(rho_ord);
  m["rho_trans"] = detail::fmt_double(rho_trans);
  m["batch_size"] = std::to_string(batch_size);
  m["epochs"] = std::to_string(epochs);
  m["lr"] = detail::fmt_double(lr);
  m["weight_decay"] = detail::fmt_double(weight_decay);
  m["optimizer"] = cll::to_string(optimizer);
  m["seed"] = std::to_string(seed);
  std::string h;
  for (std::size_t i = 0; i < hidden.size(); ++i) {
    if (i) h += ',';
    h += std::to_string(hidden[i]);
  }
  m["hidden"] = h;
  m["embed_dim"] = std::to_string(embed_dim);
  m["oracle_diagnostics"] = oracle_diagnostics ? "true" : "false";
  m["exhaustive"] = exhaustive ? "true" : "false";
  m["b_form"] = cll::to_string(b_form);
  m["grad_subsample"] = std::to_string(grad_subsample);
  m["grad_epochs"] = std::to_string(grad_epochs);
  m["trials"] = std::to_string(trials);
  m["max_iter"] = std::to_string(max_iter);
  m["tol"] = detail::fmt_double(tol);
  return m;
}

// Per-dataset mixing coefficients that reproduce the tuned defaults:
// pairwise Beta alpha and three-way Dirichlet alpha.
inline double tuned_beta_alpha(const std::string& dataset_name) {
  if (dataset_name == "cifar10") return 0.4;
  if (dataset_name == "cifar20") return 0.1;
  if (dataset_name == "mnist") return 0.1;
  if (dataset_name == "kmnist") return 0.3;
  if (dataset_name == "fmnist") return 0.1;
  throw ConfigError("no tuned beta alpha for dataset '" + dataset_name + "'");
}

inline double tuned_dirichlet_alpha(const std::string& dataset_name) {
  if (dataset_name == "cifar10") return 0.2;
  if (dataset_name == "cifar20") return 0.4;
  if (dataset_name == "mnist") return 0.1;
  if (dataset_name == "kmnist") return 0.3;
  if (dataset_name == "fmnist") return 0.4;
  throw ConfigError("no tuned dirichlet alpha for dataset '" + dataset_name +
                    "'");
}

}  // namespace cll
