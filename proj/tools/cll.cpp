// Command-line front end: wires label synthesis, embedding, clustering,
// augmentation diagnostics, training and reporting into reproducible runs.
// Every subcommand digests its inputs up front, writes its outputs through
// atomic renames, and finishes with a manifest.json; rerunning with the
// same manifest inputs reproduces every output byte.

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "cll/cll.hpp"

namespace fs = std::filesystem;

namespace {

using namespace cll;
using detail::atomic_write;
using detail::fmt_double;
using detail::parse_double;
using detail::parse_int;
using detail::split;

struct Common {
  std::string config_path;
  std::string out = ".";
  long long seed = -1;  // -1: keep the config's seed
  int threads = 1;
};

void add_common(CLI::App* sub, Common& c, bool config_required = true) {
  auto* opt = sub->add_option("--config", c.config_path,
                              "experiment config (key = value lines)");
  if (config_required) opt->required();
  sub->add_option("--seed", c.seed, "override the config seed");
  sub->add_option("--out", c.out, "output directory (created if missing)");
  sub->add_option("--threads", c.threads, "worker threads");
}

ExperimentConfig resolve(const Common& c) {
  ExperimentConfig cfg;
  if (!c.config_path.empty()) cfg = load_config(c.config_path);
  if (c.seed >= 0) cfg.seed = static_cast<std::uint64_t>(c.seed);
  cfg.validate();
  if (c.threads < 1) throw ConfigError("--threads must be at least 1");
  return cfg;
}

// One subcommand invocation: tracks input digests (taken before any
// computation) and output paths, and writes the manifest last.
struct Run {
  fs::path dir;
  RunManifest man;

  Run(const std::string& command, const Common& c,
      const std::map<std::string, std::string>& resolved_cfg,
      std::uint64_t seed) {
    dir = c.out;
    fs::create_directories(dir);
    man.command = command;
    man.config = resolved_cfg;
    man.seed = seed;
    man.run_id = make_run_id(command, man.config);
    if (!c.config_path.empty()) input(c.config_path);
  }

  void input(const std::string& path) { man.inputs[path] = digest_file(path); }

  std::string path(const std::string& rel) {
    man.outputs.push_back(rel);
    return (dir / rel).string();
  }

  void finish() const {
    write_manifest((dir / "manifest.json").string(), man);
    std::cout << man.command << ": run " << man.run_id << " wrote";
    for (const auto& o : man.outputs) std::cout << ' ' << o;
    std::cout << " in " << dir.string() << "\n";
  }
};

std::vector<std::string> image_paths(const ExperimentConfig& cfg) {
  if (cfg.images.empty())
    throw ConfigError("this command needs config key 'images'");
  if (cfg.dataset == DatasetKind::Idx) return {cfg.images};
  std::vector<std::string> out;
  for (const auto& p : split(cfg.images, ',')) {
    auto t = detail::trim(p);
    if (!t.empty()) out.push_back(t);
  }
  if (out.empty()) throw ConfigError("config key 'images' lists no files");
  return out;
}

// Features only; ordinary label bytes stay on disk (IDX) or are dropped
// unread into the caller (CIFAR records interleave them).
Matrix features_only(const ExperimentConfig& cfg) {
  auto paths = image_paths(cfg);
  if (cfg.dataset == DatasetKind::Idx) return load_idx_images(paths[0]);
  return load_cifar_features(paths, cfg.dataset == DatasetKind::Cifar20);
}

Dataset labeled_data(const ExperimentConfig& cfg) {
  auto paths = image_paths(cfg);
  if (cfg.dataset == DatasetKind::Idx) {
    if (cfg.labels.empty())
      throw ConfigError("this command needs config key 'labels'");
    return load_idx(paths[0], cfg.labels);
  }
  return load_cifar_bin(paths, cfg.dataset == DatasetKind::Cifar20);
}

void digest_images(Run& run, const ExperimentConfig& cfg) {
  for (const auto& p : image_paths(cfg)) run.input(p);
}

std::vector<std::size_t> subset_from_csv(const std::string& path,
                                         std::size_t nrows) {
  auto orig = read_index_csv(path);
  std::vector<std::size_t> idx;
  idx.reserve(orig.size());
  for (auto v : orig) {
    if (v < 0 || static_cast<std::size_t>(v) >= nrows)
      throw DataError("subset index " + std::to_string(v) +
                      " out of range for " + std::to_string(nrows) + " rows");
    idx.push_back(static_cast<std::size_t>(v));
  }
  return idx;
}

void write_matrix_csv(const std::string& path, const Matrix& M) {
  std::string text;
  for (std::size_t r = 0; r < M.rows; ++r) {
    for (std::size_t c = 0; c < M.cols; ++c) {
      if (c) text += ',';
      text += fmt_double(M.at(r, c));
    }
    text += '\n';
  }
  atomic_write(path, text);
}

int resolve_k(const ExperimentConfig& cfg, int data_k) {
  int K = cfg.K > 0 ? cfg.K : data_k;
  if (K <= 2)
    throw DataError("complementary labels need more than two classes, got K=" +
                    std::to_string(K));
  return K;
}

TransitionMatrix setup_transition(const ExperimentConfig& cfg, int K) {
  return (cfg.setup == 2 || cfg.setup == 3)
             ? biased_transition(K, cfg.rho_trans)
             : uniform_transition(K);
}

LossSpec loss_spec(const ExperimentConfig& cfg, int K) {
  LossSpec spec;
  spec.kind = cfg.loss;
  spec.gamma = cfg.gamma;
  if (cfg.loss == LossKind::Fwd) spec.T = setup_transition(cfg, K);
  return spec;
}

std::vector<int> model_dims(std::size_t d, const std::vector<int>& hidden,
                            int K) {
  std::vector<int> dims{static_cast<int>(d)};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(K);
  return dims;
}

// ---------------------------------------------------------------- gen-labels

void cmd_gen_labels(const Common& c) {
  auto cfg = resolve(c);
  Run run("gen-labels", c, cfg.resolved(), cfg.seed);
  digest_images(run, cfg);
  if (cfg.dataset == DatasetKind::Idx && !cfg.labels.empty())
    run.input(cfg.labels);

  auto ds = labeled_data(cfg);
  int K = resolve_k(cfg, ds.labels.K);
  auto res = apply_setup(ds.labels.y, K, cfg.setup, cfg.rho_ord, cfg.rho_trans,
                         cfg.seed);
  std::vector<int> y_kept(res.kept.size());
  for (std::size_t i = 0; i < res.kept.size(); ++i)
    y_kept[i] = ds.labels.y[res.kept[i]];

  write_labels_csv(run.path("labels.csv"), res.ybar);
  write_index_csv(run.path("indices.csv"), res.kept);
  write_labels_csv(run.path("oracle_labels.csv"), y_kept);
  write_matrix_csv(run.path("transition_target.csv"), res.T.P);
  write_matrix_csv(run.path("transition_empirical.csv"),
                   empirical_transition(y_kept, res.ybar, K));

  std::vector<std::size_t> counts(K, 0);
  for (int y : y_kept) ++counts[y];
  std::string cc = "class,count\n";
  for (int k = 0; k < K; ++k)
    cc += std::to_string(k) + "," + std::to_string(counts[k]) + "\n";
  atomic_write(run.path("class_counts.csv"), cc);

  run.finish();
}

// ------------------------------------------------------- embed / cluster

// Returns the embedding actually used downstream. The computed path writes
// the file first and reads it back, so clustering always sees float32
// precision whether embeddings were computed here or supplied externally.
Matrix embed_step(Run& run, const ExperimentConfig& cfg) {
  if (!cfg.embeddings.empty()) {
    run.input(cfg.embeddings);
    return read_embeddings(cfg.embeddings);
  }
  digest_images(run, cfg);
  if (!cfg.subset.empty()) run.input(cfg.subset);
  Matrix X = features_only(cfg);
  if (!cfg.subset.empty())
    X = subset_rows(X, subset_from_csv(cfg.subset, X.rows));
  Matrix E = pca_embed(X, std::min<int>(cfg.embed_dim,
                                        static_cast<int>(std::min(X.rows,
                                                                  X.cols))),
                       cfg.seed);
  auto path = run.path("embeddings.bin");
  write_embeddings(path, E);
  return read_embeddings(path);
}

void cluster_step(Run& run, const ExperimentConfig& cfg, const Matrix& E,
                  const std::string& oracle_csv, int threads) {
  auto res = kmeans(E, cfg.kc, cfg.seed, cfg.max_iter, cfg.tol, threads);
  write_cluster_csv(run.path("clusters.csv"), res.labels);

  std::string hist = "iteration,inertia\n";
  for (std::size_t i = 0; i < res.inertia_history.size(); ++i)
    hist += std::to_string(i) + "," + fmt_double(res.inertia_history[i]) + "\n";
  atomic_write(run.path("inertia.csv"), hist);

  if (!oracle_csv.empty()) {
    auto y = read_labels_csv(oracle_csv, std::numeric_limits<int>::max());
    if (y.size() != E.rows)
      throw DataError("oracle labels count " + std::to_string(y.size()) +
                      " does not match " + std::to_string(E.rows) +
                      " embedded rows");
    double p = cluster_purity(res.labels, y);
    atomic_write(run.path("purity.csv"), "metric,value\npurity," +
                                             fmt_double(p) + "\n");
  }
}

void cmd_embed(const Common& c) {
  auto cfg = resolve(c);
  Run run("embed", c, cfg.resolved(), cfg.seed);
  Matrix E = embed_step(run, cfg);
  if (!cfg.embeddings.empty()) {
    // passthrough: validated above, re-emitted under the run directory
    write_embeddings(run.path("embeddings.bin"), E);
  }
  run.finish();
}

void cmd_cluster(const Common& c, const std::string& oracle_csv) {
  auto cfg = resolve(c);
  if (cfg.embeddings.empty())
    throw ConfigError(
        "cluster needs config key 'embeddings' (run embed first)");
  Run run("cluster", c, cfg.resolved(), cfg.seed);
  run.input(cfg.embeddings);
  if (!oracle_csv.empty()) run.input(oracle_csv);
  Matrix E = read_embeddings(cfg.embeddings);
  cluster_step(run, cfg, E, oracle_csv, c.threads);
  run.finish();
}

void cmd_embed_cluster(const Common& c, const std::string& oracle_csv) {
  auto cfg = resolve(c);
  Run run("embed-cluster", c, cfg.resolved(), cfg.seed);
  if (!oracle_csv.empty()) run.input(oracle_csv);
  Matrix E = embed_step(run, cfg);
  cluster_step(run, cfg, E, oracle_csv, c.threads);
  run.finish();
}

// ------------------------------------------- augment-stats / noise-report

// Oracle-labeled view of the configured dataset for mixing diagnostics;
// these commands exist to measure noise, so ordinary labels are read.
LabeledSet diagnostics_set(Run& run, const ExperimentConfig& cfg,
                           bool need_cluster) {
  digest_images(run, cfg);
  if (cfg.dataset == DatasetKind::Idx && !cfg.labels.empty())
    run.input(cfg.labels);
  if (cfg.comp_labels.empty())
    throw ConfigError("this command needs config key 'comp_labels'");
  run.input(cfg.comp_labels);
  if (!cfg.subset.empty()) run.input(cfg.subset);
  if (!cfg.clusters.empty()) run.input(cfg.clusters);

  auto ds = labeled_data(cfg);
  LabeledSet data;
  data.K = resolve_k(cfg, ds.labels.K);
  data.X = std::move(ds.X);
  data.y = std::move(ds.labels.y);
  if (!cfg.subset.empty()) {
    auto idx = subset_from_csv(cfg.subset, data.X.rows);
    data.X = subset_rows(data.X, idx);
    data.y = subset_vec(data.y, idx);
  }
  data.ybar = read_labels_csv(cfg.comp_labels, data.K);
  if (data.ybar.size() != data.X.rows)
    throw DataError("complementary labels count " +
                    std::to_string(data.ybar.size()) + " does not match " +
                    std::to_string(data.X.rows) + " data rows");
  if (!cfg.clusters.empty()) {
    data.cluster = read_cluster_csv(cfg.clusters);
    if (data.cluster.size() != data.X.rows)
      throw DataError("cluster count " + std::to_string(data.cluster.size()) +
                      " does not match " + std::to_string(data.X.rows) +
                      " data rows");
  } else if (need_cluster) {
    throw ConfigError("policy " + to_string(cfg.policy) +
                      " needs config key 'clusters' (run embed-cluster first)");
  }
  return data;
}

void cmd_augment_stats(const Common& c) {
  auto cfg = resolve(c);
  if (cfg.policy == MixKind::None)
    throw ConfigError("augment-stats needs a mixing policy (config 'policy')");
  bool need_cluster =
      cfg.policy == MixKind::Icm || cfg.policy == MixKind::Micm;
  Run run("augment-stats", c, cfg.resolved(), cfg.seed);
  auto data = diagnostics_set(run, cfg, need_cluster);

  auto rep = noise_report(cfg.policy, data, cfg.alpha, cfg.idw_c, cfg.trials,
                          cfg.seed);
  std::string text = "metric,value\n";
  text += "outputs," + std::to_string(rep.outputs) + "\n";
  text += "noise_ratio," + fmt_double(rep.ratio) + "\n";
  text += "filter_pass_rate," + fmt_double(rep.filter_pass_rate) + "\n";
  atomic_write(run.path("augment_stats.csv"), text);

  std::string pc = "class,noise_ratio\n";
  for (std::size_t k = 0; k < rep.per_class.size(); ++k)
    pc += std::to_string(k) + "," + fmt_double(rep.per_class[k]) + "\n";
  atomic_write(run.path("augment_noise_per_class.csv"), pc);

  run.finish();
}

void cmd_noise_report(const Common& c) {
  auto cfg = resolve(c);
  Run run("noise-report", c, cfg.resolved(), cfg.seed);
  auto data = diagnostics_set(run, cfg, false);

  std::vector<MixKind> policies{MixKind::Mixup, MixKind::MixupNf,
                                MixKind::IntraClassNf, MixKind::ExtraClassNf};
  if (!data.cluster.empty()) {
    policies.insert(policies.begin() + 1, MixKind::Micm);
    policies.insert(policies.begin() + 1, MixKind::Icm);
  }

  std::string text = "policy,outputs,noise_ratio,filter_pass_rate\n";
  for (MixKind p : policies) {
    auto rep = noise_report(p, data, cfg.alpha, cfg.idw_c, cfg.trials,
                            cfg.seed);
    text += rep.policy + "," + std::to_string(rep.outputs) + "," +
            fmt_double(rep.ratio) + "," + fmt_double(rep.filter_pass_rate) +
            "\n";
  }
  atomic_write(run.path("noise_report.csv"), text);
  run.finish();
}

// ----------------------------------------------------------------- train

void cmd_train(const Common& c, bool oracle_flag) {
  auto cfg = resolve(c);
  if (oracle_flag) cfg.oracle_diagnostics = true;
  bool oracle = cfg.oracle_diagnostics;
  bool needs_cluster =
      cfg.policy == MixKind::Icm || cfg.policy == MixKind::Micm;
  bool filter_policy = cfg.policy == MixKind::MixupNf ||
                       cfg.policy == MixKind::IntraClassNf ||
                       cfg.policy == MixKind::ExtraClassNf;
  bool mixes = cfg.policy != MixKind::None;

  if (cfg.comp_labels.empty())
    throw ConfigError(
        "train needs config key 'comp_labels' (run gen-labels first)");
  if (needs_cluster && cfg.clusters.empty())
    throw ConfigError("policy " + to_string(cfg.policy) +
                      " needs config key 'clusters' (run embed-cluster "
                      "first)");
  if (filter_policy && !oracle)
    throw ConfigError("policy " + to_string(cfg.policy) +
                      " reads ordinary labels; pass --oracle-diagnostics to "
                      "acknowledge");
  bool test_files = !cfg.test_images.empty();
  if (test_files && cfg.test_fraction > 0.0)
    throw ConfigError("give test files or test_fraction, not both");
  if ((cfg.test_fraction > 0.0 || cfg.val_fraction > 0.0) && !oracle)
    throw ConfigError("held-out splits evaluate on ordinary labels; pass "
                      "--oracle-diagnostics to acknowledge");
  if (test_files && cfg.dataset == DatasetKind::Idx &&
      cfg.test_labels.empty())
    throw ConfigError("test_images needs test_labels");

  Run run("train", c, cfg.resolved(), cfg.seed);
  digest_images(run, cfg);
  run.input(cfg.comp_labels);
  if (!cfg.clusters.empty()) run.input(cfg.clusters);
  if (!cfg.subset.empty()) run.input(cfg.subset);
  if (oracle && cfg.dataset == DatasetKind::Idx && !cfg.labels.empty())
    run.input(cfg.labels);
  if (test_files) {
    run.input(cfg.test_images);
    if (!cfg.test_labels.empty()) run.input(cfg.test_labels);
  }

  // Ordinary labels are loaded only under the oracle flag; the plain path
  // never reads them.
  LabeledSet data;
  int data_k = 0;
  if (oracle) {
    auto ds = labeled_data(cfg);
    data.X = std::move(ds.X);
    data.y = std::move(ds.labels.y);
    data_k = ds.labels.K;
  } else {
    data.X = features_only(cfg);
  }
  if (!cfg.subset.empty()) {
    auto idx = subset_from_csv(cfg.subset, data.X.rows);
    data.X = subset_rows(data.X, idx);
    data.y = subset_vec(data.y, idx);
  }
  auto ybar_raw =
      read_labels_csv(cfg.comp_labels, std::numeric_limits<int>::max());
  int inferred = 0;
  for (int v : ybar_raw) inferred = std::max(inferred, v + 1);
  data.K = cfg.K > 0 ? cfg.K : (oracle ? std::max(data_k, inferred)
                                       : inferred);
  if (data.K <= 2)
    throw DataError("complementary labels need more than two classes");
  for (int v : ybar_raw)
    if (v >= data.K)
      throw DataError("complementary label " + std::to_string(v) +
                      " out of range for K=" + std::to_string(data.K));
  data.ybar = std::move(ybar_raw);
  if (data.ybar.size() != data.X.rows)
    throw DataError("complementary labels count " +
                    std::to_string(data.ybar.size()) + " does not match " +
                    std::to_string(data.X.rows) + " data rows");
  if (!cfg.clusters.empty()) {
    data.cluster = read_cluster_csv(cfg.clusters);
    if (data.cluster.size() != data.X.rows)
      throw DataError("cluster count " + std::to_string(data.cluster.size()) +
                      " does not match " + std::to_string(data.X.rows) +
                      " data rows");
  }

  // Held-out evaluation splits; the matrices must outlive train_model.
  std::vector<EvalSplit> evals;
  Matrix test_X, val_X;
  std::vector<int> test_y, val_y;
  Rng root(cfg.seed);
  std::uint64_t test_split_seed = root.fork(4).next_u64();
  std::uint64_t val_split_seed = root.fork(5).next_u64();
  if (cfg.test_fraction > 0.0) {
    auto [kept, held] =
        split_indices(data.X.rows, cfg.test_fraction, test_split_seed);
    test_X = subset_rows(data.X, held);
    test_y = subset_vec(data.y, held);
    data = subset_set(data, kept);
    evals.push_back({"test", &test_X, &test_y});
  }
  if (cfg.val_fraction > 0.0) {
    auto [kept, held] =
        split_indices(data.X.rows, cfg.val_fraction, val_split_seed);
    val_X = subset_rows(data.X, held);
    val_y = subset_vec(data.y, held);
    data = subset_set(data, kept);
    evals.push_back({"val", &val_X, &val_y});
  }
  if (test_files) {
    Dataset ts;
    if (cfg.dataset == DatasetKind::Idx) {
      ts = load_idx(cfg.test_images, cfg.test_labels);
    } else {
      std::vector<std::string> tp;
      for (const auto& p : split(cfg.test_images, ','))
        if (auto t = detail::trim(p); !t.empty()) tp.push_back(t);
      ts = load_cifar_bin(tp, cfg.dataset == DatasetKind::Cifar20);
    }
    test_X = std::move(ts.X);
    test_y = std::move(ts.labels.y);
    evals.push_back({"test", &test_X, &test_y});
  }
  if (!oracle) data.y.clear();  // belt and braces: nothing to read anyway

  TrainOptions topt;
  topt.epochs = cfg.epochs;
  topt.batch_size = static_cast<std::size_t>(cfg.batch_size);
  topt.lr = cfg.lr;
  topt.weight_decay = cfg.weight_decay;
  topt.optimizer = cfg.optimizer;
  topt.policy = cfg.policy;
  topt.alpha = cfg.alpha;
  topt.idw_c = cfg.idw_c;
  topt.seed = cfg.seed;
  topt.threads = c.threads;
  topt.track_noise = oracle && mixes;

  auto model = init_model(model_dims(data.X.cols, cfg.hidden, data.K),
                          cfg.seed);
  auto spec = loss_spec(cfg, data.K);
  auto res = train_model(std::move(model), data, spec, topt, evals,
                         run.man.run_id);
  save_checkpoint(run.path("model.ckpt"), res.model);
  write_results_csv(run.path("history.csv"), res.history);
  run.finish();
}

// --------------------------------------------------------- grad-analysis

void cmd_grad_analysis(const Common& c) {
  auto cfg = resolve(c);
  bool needs_cluster =
      cfg.policy == MixKind::Icm || cfg.policy == MixKind::Micm;
  Run run("grad-analysis", c, cfg.resolved(), cfg.seed);
  auto data = diagnostics_set(run, cfg, needs_cluster);

  GradProtocolOptions gopt;
  gopt.policy = cfg.policy;
  gopt.exhaustive = cfg.exhaustive;
  gopt.b_form = cfg.b_form;
  gopt.alpha = cfg.alpha;
  gopt.idw_c = cfg.idw_c;
  gopt.epochs = cfg.grad_epochs;
  gopt.subsample = cfg.grad_subsample;
  gopt.lr = cfg.lr;
  gopt.seed = cfg.seed;
  gopt.threads = c.threads;

  auto model = init_model(model_dims(data.X.cols, cfg.hidden, data.K),
                          cfg.seed);
  auto stats = grad_protocol(std::move(model), data, loss_spec(cfg, data.K),
                             gopt);
  std::string text = "epoch,mse,bias_sq,variance\n";
  for (const auto& s : stats)
    text += std::to_string(s.epoch) + "," + fmt_double(s.mse) + "," +
            fmt_double(s.bias_sq) + "," + fmt_double(s.variance) + "\n";
  atomic_write(run.path("grad_stats.csv"), text);
  run.finish();
}

// ---------------------------------------------------------------- report

struct LoadedRun {
  std::string dir;
  RunManifest man;
  std::vector<ResultRow> history;           // train runs
  std::vector<GradStats> grad;              // grad-analysis runs
};

std::vector<GradStats> read_grad_stats(const std::string& path) {
  auto lines = detail::read_lines(path);
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (lines.empty() || lines[0] != "epoch,mse,bias_sq,variance")
    throw DataError("bad gradient stats header in " + path);
  std::vector<GradStats> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    auto parts = split(lines[i], ',');
    if (parts.size() != 4)
      throw DataError("bad gradient stats row in " + path);
    GradStats g;
    g.epoch = static_cast<int>(parse_int(parts[0], "epoch"));
    g.mse = parse_double(parts[1], "mse");
    g.bias_sq = parse_double(parts[2], "bias_sq");
    g.variance = parse_double(parts[3], "variance");
    out.push_back(g);
  }
  return out;
}

// Cell identity: the resolved config minus per-seed noise. Two runs may
// share a table cell only if everything but seed and run_name matches.
std::string cell_full_key(const std::map<std::string, std::string>& cfg) {
  std::string key;
  for (const auto& [k, v] : cfg) {
    if (k == "seed" || k == "run_name") continue;
    key += k + "=" + v + ";";
  }
  return key;
}

std::string cell_label(const std::map<std::string, std::string>& cfg) {
  auto get = [&](const std::string& k) {
    auto it = cfg.find(k);
    return it == cfg.end() ? std::string("?") : it->second;
  };
  std::string label = get("loss") + "+" + get("policy");
  if (get("policy") != "none") label += " alpha=" + get("alpha");
  return label;
}

struct Cell {
  std::string full_key;
  std::vector<const LoadedRun*> runs;
};

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

void cmd_report(const std::vector<std::string>& dirs, const std::string& out) {
  std::vector<LoadedRun> runs;
  for (const auto& d : dirs) {
    auto mpath = (fs::path(d) / "manifest.json").string();
    if (!fs::exists(mpath)) continue;
    LoadedRun r;
    r.dir = d;
    r.man = read_manifest(mpath);
    if (r.man.command == "train") {
      auto hpath = (fs::path(d) / "history.csv").string();
      if (!fs::exists(hpath))
        throw DataError("train run " + d + " has no history.csv");
      r.history = read_results_csv(hpath);
    } else if (r.man.command == "grad-analysis") {
      auto gpath = (fs::path(d) / "grad_stats.csv").string();
      if (!fs::exists(gpath))
        throw DataError("grad-analysis run " + d + " has no grad_stats.csv");
      r.grad = read_grad_stats(gpath);
    } else {
      continue;  // other commands carry no tabulated results
    }
    runs.push_back(std::move(r));
  }
  if (runs.empty())
    throw DataError("no runs found in the given directories");

  fs::create_directories(out);
  std::map<std::string, Cell> train_cells, grad_cells;
  for (const auto& r : runs) {
    auto& cells = r.man.command == "train" ? train_cells : grad_cells;
    std::string label = cell_label(r.man.config);
    std::string full = cell_full_key(r.man.config);
    auto [it, fresh] = cells.try_emplace(label);
    if (fresh) it->second.full_key = full;
    else if (it->second.full_key != full)
      throw DataError("cell '" + label +
                      "' mixes runs whose configs differ beyond the seed");
    it->second.runs.push_back(&r);
  }

  std::string md = "# Results\n";
  RunManifest man;
  man.command = "report";
  for (const auto& d : dirs) {
    auto mpath = (fs::path(d) / "manifest.json").string();
    if (fs::exists(mpath)) man.inputs[mpath] = digest_file(mpath);
  }
  man.config["dirs"] = [&] {
    std::string j;
    for (const auto& d : dirs) j += (j.empty() ? "" : ",") + d;
    return j;
  }();
  man.run_id = make_run_id("report", man.config);

  if (!train_cells.empty()) {
    md += "\n## Final test accuracy\n\n";
    md += "| setting | runs | accuracy (mean ± std) |\n|---|---|---|\n";
    for (const auto& [label, cell] : train_cells) {
      std::vector<double> finals;
      for (const auto* r : cell.runs) {
        const ResultRow* best = nullptr;
        for (const auto& row : r->history)
          if (row.metric == "accuracy" && row.split == "test" &&
              (!best || row.epoch > best->epoch))
            best = &row;
        if (!best)
          for (const auto& row : r->history)
            if (row.metric == "accuracy" &&
                (!best || row.epoch > best->epoch))
              best = &row;
        if (!best)
          throw DataError("run " + r->dir +
                          " has no accuracy rows; train with test_fraction "
                          "or test files");
        finals.push_back(best->value);
      }
      if (finals.size() == 1)
        std::cerr << "warning: cell '" << label
                  << "' has a single run; std is 0\n";
      md += "| " + label + " | " + std::to_string(finals.size()) + " | " +
            fmt_double(mean_of(finals)) + " ± " + fmt_double(sample_std(finals)) +
            " |\n";
    }

    // per-epoch curves averaged over the runs of each cell
    std::string curves = "cell,epoch,split,metric,mean,std\n";
    for (const auto& [label, cell] : train_cells) {
      std::map<std::tuple<int, std::string, std::string>, std::vector<double>>
          series;
      for (const auto* r : cell.runs)
        for (const auto& row : r->history)
          series[{row.epoch, row.split, row.metric}].push_back(row.value);
      for (const auto& [key, vals] : series) {
        curves += label + "," + std::to_string(std::get<0>(key)) + "," +
                  std::get<1>(key) + "," + std::get<2>(key) + "," +
                  fmt_double(mean_of(vals)) + "," + fmt_double(sample_std(vals)) +
                  "\n";
      }
    }
    auto cpath = (fs::path(out) / "train_curves.csv").string();
    atomic_write(cpath, curves);
    man.outputs.push_back("train_curves.csv");
  }

  if (!grad_cells.empty()) {
    md += "\n## Gradient estimator quality (mean over runs)\n\n";
    md += "| setting | runs | mean MSE | mean bias² | mean variance |\n";
    md += "|---|---|---|---|---|\n";
    std::string curves = "cell,epoch,metric,mean,std\n";
    for (const auto& [label, cell] : grad_cells) {
      std::vector<double> mse, bias, var;
      std::map<int, std::array<std::vector<double>, 3>> by_epoch;
      for (const auto* r : cell.runs)
        for (const auto& g : r->grad) {
          mse.push_back(g.mse);
          bias.push_back(g.bias_sq);
          var.push_back(g.variance);
          by_epoch[g.epoch][0].push_back(g.mse);
          by_epoch[g.epoch][1].push_back(g.bias_sq);
          by_epoch[g.epoch][2].push_back(g.variance);
        }
      md += "| " + label + " | " + std::to_string(cell.runs.size()) + " | " +
            fmt_double(mean_of(mse)) + " | " + fmt_double(mean_of(bias)) +
            " | " + fmt_double(mean_of(var)) + " |\n";
      const char* names[3] = {"mse", "bias_sq", "variance"};
      for (const auto& [epoch, cols] : by_epoch)
        for (int m = 0; m < 3; ++m)
          curves += label + "," + std::to_string(epoch) + "," + names[m] +
                    "," + fmt_double(mean_of(cols[m])) + "," +
                    fmt_double(sample_std(cols[m])) + "\n";
    }
    auto gpath = (fs::path(out) / "grad_curves.csv").string();
    atomic_write(gpath, curves);
    man.outputs.push_back("grad_curves.csv");
  }

  atomic_write((fs::path(out) / "report.md").string(), md);
  man.outputs.insert(man.outputs.begin(), "report.md");
  write_manifest((fs::path(out) / "manifest.json").string(), man);
  std::cout << "report: wrote report.md in " << out << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"complementary-label learning toolkit"};
  app.require_subcommand(1);

  Common c_gen, c_embed, c_cluster, c_ec, c_aug, c_noise, c_train, c_grad;
  std::string cluster_oracle, ec_oracle;
  bool train_oracle = false;
  std::vector<std::string> report_dirs;
  std::string report_out = ".";

  auto* s_gen = app.add_subcommand(
      "gen-labels", "synthesize complementary labels under a setup");
  add_common(s_gen, c_gen);

  auto* s_embed = app.add_subcommand(
      "embed", "PCA-embed a dataset (or validate an external embedding)");
  add_common(s_embed, c_embed);

  auto* s_cluster =
      app.add_subcommand("cluster", "k-means over an embedding file");
  add_common(s_cluster, c_cluster);
  s_cluster->add_option("--oracle-labels", cluster_oracle,
                        "ordinary-label CSV for a purity report");

  auto* s_ec = app.add_subcommand("embed-cluster",
                                  "embed then cluster in one run");
  add_common(s_ec, c_ec);
  s_ec->add_option("--oracle-labels", ec_oracle,
                   "ordinary-label CSV for a purity report");

  auto* s_aug = app.add_subcommand(
      "augment-stats", "noise statistics for the configured mixing policy");
  add_common(s_aug, c_aug);

  auto* s_noise = app.add_subcommand(
      "noise-report", "noise ratios across all applicable mixing policies");
  add_common(s_noise, c_noise);

  auto* s_train = app.add_subcommand("train", "train a model per the config");
  add_common(s_train, c_train);
  s_train->add_flag("--oracle-diagnostics", train_oracle,
                    "allow reading ordinary labels for evaluation and "
                    "noise tracking");

  auto* s_grad = app.add_subcommand(
      "grad-analysis", "per-epoch gradient-estimator MSE/bias/variance");
  add_common(s_grad, c_grad);

  auto* s_report = app.add_subcommand(
      "report", "aggregate finished runs into tables and plot CSVs");
  s_report->add_option("dirs", report_dirs, "run directories")->required();
  s_report->add_option("--out", report_out, "output directory");

  try {
    app.parse(argc, argv);
    if (*s_gen) cmd_gen_labels(c_gen);
    if (*s_embed) cmd_embed(c_embed);
    if (*s_cluster) cmd_cluster(c_cluster, cluster_oracle);
    if (*s_ec) cmd_embed_cluster(c_ec, ec_oracle);
    if (*s_aug) cmd_augment_stats(c_aug);
    if (*s_noise) cmd_noise_report(c_noise);
    if (*s_train) cmd_train(c_train, train_oracle);
    if (*s_grad) cmd_grad_analysis(c_grad);
    if (*s_report) cmd_report(report_dirs, report_out);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
