#include "uom/cli.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "uom/cluster.hpp"
#include "uom/clustered.hpp"
#include "uom/data.hpp"
#include "uom/error.hpp"
#include "uom/eval.hpp"
#include "uom/idest.hpp"
#include "uom/parallel.hpp"
#include "uom/repro.hpp"
#include "uom/synth.hpp"
#include "uom/twostep.hpp"
#include "uom/weights.hpp"

namespace uom {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

const std::vector<std::string> kSubcommands{"synth", "estimate-id", "cluster", "train",
                                            "sample", "eval", "weights", "repro"};

// Options whose values are file system paths; echoed relative in run.json.
const std::set<std::string> kPathOptions{"input",   "labels",  "groups",     "model",       "samples", "reference",
                                         "train",   "out",     "test-input", "test-labels", "id-accuracy"};

/// JSON config: {"key": value} applies to the active subcommand,
/// {"subcommand": {"key": value}} to the named one.
class JsonConfig : public CLI::Config {
 public:
  explicit JsonConfig(std::string active) : active_(std::move(active)) {}

  std::string to_config(const CLI::App*, bool, bool, std::string) const override { return {}; }

  std::vector<CLI::ConfigItem> from_config(std::istream& in) const override {
    json j;
    try {
      in >> j;
    } catch (const json::exception& e) {
      throw CLI::ConversionError("--config", std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw CLI::ConversionError("--config", "top level must be an object");
    std::vector<CLI::ConfigItem> items;
    for (const auto& [key, value] : j.items()) {
      if (value.is_object()) {
        for (const auto& [k, v] : value.items()) items.push_back(item({key}, k, v));
      } else {
        items.push_back(item(active_.empty() ? std::vector<std::string>{} : std::vector<std::string>{active_}, key, value));
      }
    }
    return items;
  }

 private:
  static std::string scalar(const json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    return v.dump();
  }

  static CLI::ConfigItem item(std::vector<std::string> parents, const std::string& name, const json& v) {
    CLI::ConfigItem it;
    it.parents = std::move(parents);
    it.name = name;
    if (v.is_array()) {
      for (const auto& e : v) it.inputs.push_back(scalar(e));
    } else {
      it.inputs.push_back(scalar(v));
    }
    return it;
  }

  std::string active_;
};

struct Options {
  std::uint64_t seed = 0;
  std::string out;
  std::string format = "csv";

  // synth
  std::string kind = "affine";
  std::vector<std::size_t> dims;
  std::size_t n = 1000;
  std::size_t ambient_dim = 32;
  std::size_t latent_dim = 0;
  double gap = 10.0;
  double noise = 0.0;

  // shared inputs
  std::string input, labels, groups;
  std::vector<std::size_t> k_list{kDefaultKList};
  std::string variant = "k-1";

  // cluster
  std::size_t L = 2;
  std::string method = "ward";
  std::size_t max_iter = kLloydMaxIterations;

  // train
  std::string clusters = "labels";
  std::string dims_mode = "auto";
  std::vector<std::size_t> dim_values;
  std::size_t k = 20;
  std::string decoder = "affine";
  std::string base = "gaussian";
  std::size_t components = 10;
  std::vector<std::size_t> widths{64};
  std::size_t epochs = 200;
  double lr = 0.05;
  std::size_t batch = 64;
  std::size_t gmm_iter = 200;
  bool parallel = false;

  // sample
  std::string model;
  std::size_t m = 10000;

  // eval
  std::string samples, reference, train;
  bool mmd = false, bridge = false;
  std::optional<double> bandwidth, tau;
  std::string id_accuracy;

  // weights
  std::string test_input, test_labels;

  // repro
  std::string experiment = "all";
};

fs::path out_dir(const Options& o) {
  fs::create_directories(o.out);
  return o.out;
}

void write_json(const json& j, const fs::path& path) {
  std::ofstream f(path);
  if (!f) throw Error("cannot write '" + path.filename().string() + "'");
  f << j.dump(2) << '\n';
}

std::string portable_path(const std::string& p) {
  const fs::path path(p);
  if (!path.is_absolute()) return path.generic_string();
  return fs::proximate(path).generic_string();
}

json typed(const std::string& s) {
  if (s == "true") return true;
  if (s == "false") return false;
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec == std::errc() && res.ptr == s.data() + s.size() && !s.empty()) {
    if (s.find_first_of(".eE") == std::string::npos && s.front() != '-') return std::stoull(s);
    return v;
  }
  return s;
}

/// Every option of the subcommand with its effective value, defaults included.
json resolved_config(const CLI::App& sub) {
  json j = {{"subcommand", sub.get_name()}, {"threads", thread_count()}};
  for (const CLI::Option* opt : sub.get_options()) {
    if (opt->get_lnames().empty() && opt->get_positional() == false) continue;
    const std::string name = opt->get_lnames().empty() ? opt->get_name() : opt->get_lnames().front();
    if (name == "help") continue;
    std::vector<std::string> values;
    if (opt->count() > 0 || !opt->results().empty()) {
      values = opt->results();
    } else if (!opt->get_default_str().empty()) {
      values = {opt->get_default_str()};
    }
    if (opt->get_type_size() == 0) {
      j[name] = opt->count() > 0;
      continue;
    }
    json v = json::array();
    for (auto s : values) {
      if (s.size() >= 2 && s.front() == '[' && s.back() == ']') {
        std::stringstream ss(s.substr(1, s.size() - 2));
        for (std::string part; std::getline(ss, part, ',');) v.push_back(typed(part));
        continue;
      }
      if (kPathOptions.count(name)) s = portable_path(s);
      v.push_back(typed(s));
    }
    if (v.empty())
      j[name] = nullptr;
    else if (v.size() == 1 && opt->get_items_expected_max() <= 1)
      j[name] = v.front();
    else
      j[name] = v;
  }
  return j;
}

FileFormat output_format(const Options& o) { return o.format == "raw" ? FileFormat::raw_f32 : FileFormat::csv; }

std::string data_file(const std::string& stem, const Options& o) {
  return stem + (output_format(o) == FileFormat::raw_f32 ? ".f32" : ".csv");
}

GroupIndex groups_for(const Options& o, const DataMatrix& x) {
  if (!o.labels.empty() && !o.groups.empty()) throw ArgumentError("give --labels or --groups, not both");
  GroupIndex g;
  if (!o.labels.empty())
    g = GroupIndex::from_labels(load_labels(o.labels));
  else if (!o.groups.empty())
    g = load_groups(o.groups);
  else if (x.has_labels())
    g = GroupIndex::from_labels(x.labels());
  else
    return GroupIndex::single(x.rows());
  if (g.n() != x.rows())
    throw ValidationError("group file has " + std::to_string(g.n()) + " entries, dataset has " +
                          std::to_string(x.rows()) + " rows");
  return g;
}

// ---------------------------------------------------------------------------

void cmd_synth(const Options& o, std::ostream& out) {
  std::vector<SyntheticData> parts;
  for (std::size_t l = 0; l < o.dims.size(); ++l) {
    const std::uint64_t s = derive_seed(o.seed, l);
    if (o.kind == "affine") {
      parts.push_back(gen_affine_manifold(o.n, o.dims[l], o.ambient_dim, s, o.noise));
    } else {
      const std::size_t latent = o.latent_dim ? o.latent_dim : *std::max_element(o.dims.begin(), o.dims.end());
      parts.push_back(gen_pushforward_manifold(o.n, latent, o.dims[l], o.ambient_dim, s));
    }
  }
  SyntheticData u = compose_union(std::move(parts), o.gap, derive_seed(o.seed, o.dims.size()));
  const fs::path dir = out_dir(o);
  const std::vector<int> labels = u.x.labels();
  u.x.clear_labels();
  save_dataset(u.x, dir / data_file("data", o), output_format(o));
  save_labels(labels, dir / "labels.csv");
  write_json(to_json(u.truth), dir / "truth.json");
  out << "synth: " << u.x.rows() << " x " << u.x.cols() << ", " << o.dims.size() << " component(s)\n";
}

void cmd_estimate_id(const Options& o, std::ostream& out) {
  const DataMatrix x = load_dataset(o.input);
  const GroupIndex g = groups_for(o, x);
  const IdReport r = per_group_id(x, g, o.k_list, parse_id_variant(o.variant));
  const fs::path dir = out_dir(o);
  write_json(to_json(r), dir / "id_report.json");
  save_id_report_csv(r, dir / "id_report.csv");
  for (std::size_t grp = 0; grp < r.groups.size(); ++grp) {
    out << "group " << r.groups[grp] << ':';
    for (std::size_t p = 0; p < r.k_list.size(); ++p) {
      const auto& c = r.cell(grp, p);
      out << " k=" << c.k << ' ';
      if (c.estimate)
        out << c.estimate->value;
      else
        out << '-';
    }
    out << '\n';
  }
}

void cmd_cluster(const Options& o, std::ostream& out) {
  const DataMatrix x = load_dataset(o.input);
  const fs::path dir = out_dir(o);
  json info = {{"method", o.method}, {"L", o.L}};
  GroupIndex g;
  if (o.method == "ward") {
    const WardResult r = ward_agglomerative(x, o.L);
    save_dendrogram(r.merges, dir / "dendrogram.csv");
    g = r.groups;
  } else {
    const KMeansResult r = kmeanspp(x, o.L, o.seed, o.max_iter);
    info["iterations"] = r.iterations;
    info["converged"] = r.converged;
    g = r.groups;
  }
  info["sizes"] = g.sizes;
  save_groups(g, dir / "groups.csv");
  write_json(info, dir / "cluster.json");
  out << "cluster: " << o.method << ", sizes";
  for (auto s : g.sizes) out << ' ' << s;
  out << '\n';
}

void cmd_train(const Options& o, std::ostream& out) {
  const DataMatrix x = load_dataset(o.input);
  GroupIndex g;
  if (o.clusters == "labels") {
    if (o.labels.empty() && !x.has_labels()) throw ArgumentError("--clusters labels needs --labels");
    Options only_labels = o;
    only_labels.groups.clear();
    g = groups_for(only_labels, x);
  } else if (o.clusters == "groups") {
    if (o.groups.empty()) throw ArgumentError("--clusters groups needs --groups");
    Options only_groups = o;
    only_groups.labels.clear();
    g = groups_for(only_groups, x);
  } else if (o.clusters == "ward") {
    g = ward_agglomerative(x, o.L).groups;
  } else if (o.clusters == "kmeans") {
    g = kmeanspp(x, o.L, derive_seed(o.seed, 7), o.max_iter).groups;
  } else {
    g = GroupIndex::single(x.rows());
  }

  ClusteredConfig cfg;
  if (o.dims_mode == "auto")
    cfg.dims.mode = DimsMode::automatic;
  else if (o.dims_mode == "constant")
    cfg.dims.mode = DimsMode::constant;
  else
    cfg.dims.mode = DimsMode::per_cluster;
  cfg.dims.values = o.dim_values;
  cfg.dims.k = o.k;
  cfg.dims.variant = parse_id_variant(o.variant);
  cfg.model.decoder = parse_decoder_kind(o.decoder);
  cfg.model.base = o.base == "gmm" ? BaseKind::gmm : BaseKind::gaussian;
  cfg.model.gmm_components = o.components;
  cfg.model.mlp.widths = o.widths;
  cfg.model.mlp.epochs = o.epochs;
  cfg.model.mlp.learning_rate = o.lr;
  cfg.model.mlp.batch_size = o.batch;
  cfg.model.gmm.max_iterations = o.gmm_iter;
  cfg.model.seed = o.seed;
  cfg.seed = o.seed;
  cfg.parallel = o.parallel;

  const ClusteredModel model = train_clustered(x, g, cfg, out_dir(o));
  out << "train: " << model.L() << " cluster(s), dims";
  for (const auto& c : model.clusters) out << ' ' << c.latent_dim;
  out << '\n';
}

void cmd_sample(const Options& o, std::ostream& out) {
  const ClusteredModel model = load_bundle(o.model);
  DataMatrix xs = sample_clustered(model, o.m, o.seed);
  const fs::path dir = out_dir(o);
  const std::vector<int> labels = xs.labels();
  xs.clear_labels();
  save_dataset(xs, dir / data_file("samples", o), output_format(o));
  save_labels(labels, dir / "sample_clusters.csv", "cluster");
  out << "sample: " << xs.rows() << " rows from " << model.L() << " cluster(s)\n";
}

void cmd_eval(const Options& o, std::ostream& out) {
  const fs::path dir = out_dir(o);
  json report = json::object();
  if (o.mmd || o.bridge) {
    const DataMatrix xs = load_dataset(o.samples);
    if (o.mmd) {
      const DataMatrix ref = load_dataset(o.reference);
      const MmdResult r = mmd2_unbiased(xs, ref, o.bandwidth);
      report["mmd"] = to_json(r);
      out << "mmd2: " << r.value << " (bandwidth " << r.bandwidth << ")\n";
    }
    if (o.bridge) {
      const DataMatrix tr = load_dataset(o.train);
      const BridgeReport r = bridge_mass(xs, tr, o.tau);
      report["bridge"] = to_json(r);
      out << "bridge mass: " << r.off_support_fraction << " (tau " << r.tau << ")\n";
    }
  }
  if (!o.id_accuracy.empty()) {
    const DataMatrix pairs = load_dataset(o.id_accuracy);
    if (pairs.cols() != 2) throw ValidationError("--id-accuracy file needs two columns (d_hat, accuracy)");
    std::vector<double> d, a;
    for (std::size_t i = 0; i < pairs.rows(); ++i) {
      d.push_back(pairs(i, 0));
      a.push_back(pairs(i, 1));
    }
    const IdAccuracyReport r = id_accuracy_report(d, a);
    report["id_accuracy"] = to_json(r);
    save_plot_tsv(r, dir / "id_accuracy.tsv");
    out << "id vs accuracy: r = " << r.correlation.r << ", p = " << r.correlation.p << '\n';
  }
  write_json(report, dir / "eval.json");
}

void cmd_weights(const Options& o, std::ostream& out) {
  const DataMatrix x = load_dataset(o.input);
  Options only_labels = o;
  only_labels.groups.clear();
  const GroupIndex g = groups_for(only_labels, x);
  if (g.L < 2) throw ArgumentError("weights needs at least 2 classes");
  std::vector<int> y(g.assignment.begin(), g.assignment.end());

  const IdReport id = per_group_id(x, g, {o.k}, parse_id_variant(o.variant));
  std::vector<double> d_hats;
  for (std::size_t l = 0; l < g.L; ++l) {
    const auto& e = id.cell(l, 0).estimate;
    if (!e) throw EstimatorError("class " + std::to_string(l) + " has too few points for k=" + std::to_string(o.k));
    d_hats.push_back(e->value);
  }
  const ClassWeights omega = id_weights(d_hats);

  SoftmaxConfig cfg{o.lr, o.epochs, o.batch, o.seed};
  const SoftmaxFit standard = train_softmax_weighted(x, y, g.L, std::nullopt, cfg);
  const SoftmaxFit weighted = train_softmax_weighted(x, y, g.L, omega, cfg);

  const fs::path dir = out_dir(o);
  save_class_weights(omega, d_hats, dir / "weights.csv");
  save_classifier(weighted.classifier, dir / "classifier");
  json report = {{"d_hats", d_hats},
                 {"omega", omega.omega},
                 {"loss_trace_standard", standard.loss_trace},
                 {"loss_trace_weighted", weighted.loss_trace}};

  DataMatrix xt = x;
  std::vector<int> yt = y;
  if (!o.test_input.empty()) {
    xt = load_dataset(o.test_input);
    std::vector<int> raw = o.test_labels.empty() ? xt.labels() : load_labels(o.test_labels);
    if (raw.size() != xt.rows()) throw ValidationError("test labels do not match test rows");
    GroupIndex train_map = GroupIndex::from_labels(o.labels.empty() ? x.labels() : load_labels(o.labels));
    // map raw test labels through the training label order
    std::vector<int> train_raw = o.labels.empty() ? x.labels() : load_labels(o.labels);
    std::map<int, int> code;
    for (std::size_t i = 0; i < train_raw.size(); ++i) code[train_raw[i]] = static_cast<int>(train_map.assignment[i]);
    yt.clear();
    for (int v : raw) {
      const auto it = code.find(v);
      if (it == code.end()) throw ValidationError("test label " + std::to_string(v) + " not seen in training");
      yt.push_back(it->second);
    }
  }
  auto acc_json = [](const std::vector<std::optional<double>>& a) {
    json j = json::array();
    for (const auto& v : a) j.push_back(v ? json(*v) : json(nullptr));
    return j;
  };
  const auto acc_std = per_class_accuracy(standard.classifier, xt, yt);
  const auto acc_w = per_class_accuracy(weighted.classifier, xt, yt);
  report["accuracy_standard"] = acc_json(acc_std);
  report["accuracy_weighted"] = acc_json(acc_w);
  report["evaluated_on"] = o.test_input.empty() ? "train" : "test";
  write_json(report, dir / "weights.json");
  out << "weights:";
  for (double w : omega.omega) out << ' ' << w;
  out << '\n';
}

int cmd_repro(const Options& o, std::ostream& out, std::ostream& err) {
  std::vector<std::string> names;
  if (o.experiment == "all")
    names = repro_experiments();
  else
    names = {o.experiment};
  const fs::path dir = out_dir(o);
  std::vector<std::string> failed;
  for (const auto& name : names) {
    const ReproResult r = run_repro(name, o.seed, dir / name / "work");
    write_repro(r, dir / name);
    for (const auto& c : r.report["checks"])
      out << (c["passed"].get<bool>() ? "PASS " : "FAIL ") << name << ": " << c["name"].get<std::string>() << '\n';
    for (const auto& f : r.failed) failed.push_back(name + ": " + f);
  }
  for (const auto& f : failed) err << "failing check: " << f << '\n';
  return failed.empty() ? 0 : 1;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"Union-of-manifolds toolkit: intrinsic dimension, clustering, clustered generative models"};
  app.name("uom");
  app.require_subcommand(1);
  app.fallthrough(true);
  app.allow_config_extras(false);
  app.option_defaults()->always_capture_default()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  std::string active;
  for (const auto& a : args)
    if (std::find(kSubcommands.begin(), kSubcommands.end(), a) != kSubcommands.end()) {
      active = a;
      break;
    }
  app.config_formatter(std::make_shared<JsonConfig>(active));
  app.set_config("--config", "", "JSON config file; command-line flags override it");
  std::optional<std::size_t> threads;
  app.add_option("--threads", threads, "Worker threads (default: UOM_THREADS or all cores)")
      ->check(CLI::PositiveNumber);

  const auto list = [](CLI::Option* opt) { return opt->delimiter(',')->multi_option_policy(CLI::MultiOptionPolicy::TakeAll); };
  const auto common = [&](CLI::App* s, bool seeded) {
    if (seeded) s->add_option("--seed", o.seed, "Seed for all randomness");
    s->add_option("--out", o.out, "Output directory")->required();
  };

  CLI::App* synth = app.add_subcommand("synth", "Generate a union of synthetic manifolds");
  synth->add_option("--kind", o.kind, "Component generator")->check(CLI::IsMember({"affine", "pushforward"}));
  list(synth->add_option("--dims", o.dims, "True dimension per component, comma separated"))->required();
  synth->add_option("--n", o.n, "Points per component")->check(CLI::PositiveNumber);
  synth->add_option("--ambient-dim", o.ambient_dim, "Ambient dimension D")->check(CLI::PositiveNumber);
  synth->add_option("--latent-dim", o.latent_dim, "Generator input dimension (pushforward; 0 = max of --dims)");
  synth->add_option("--gap", o.gap, "Minimum distance between components")->check(CLI::NonNegativeNumber);
  synth->add_option("--noise", o.noise, "Isotropic noise sd (affine)")->check(CLI::NonNegativeNumber);
  synth->add_option("--format", o.format, "Output data format")->check(CLI::IsMember({"csv", "raw"}));
  common(synth, true);

  CLI::App* est = app.add_subcommand("estimate-id", "Per-group intrinsic dimension estimates");
  est->add_option("--input", o.input, "Dataset (.csv or .f32)")->required()->check(CLI::ExistingFile);
  est->add_option("--labels", o.labels, "Label CSV defining the groups")->check(CLI::ExistingFile);
  est->add_option("--groups", o.groups, "Group CSV from `cluster`")->check(CLI::ExistingFile);
  list(est->add_option("--k", o.k_list, "Neighborhood sizes, comma separated"));
  est->add_option("--variant", o.variant, "Normalization")->check(CLI::IsMember({"k-1", "k-2"}));
  common(est, false);

  CLI::App* clu = app.add_subcommand("cluster", "Partition a dataset into L groups");
  clu->add_option("--input", o.input, "Dataset")->required()->check(CLI::ExistingFile);
  clu->add_option("--L", o.L, "Number of clusters")->required()->check(CLI::Range(std::size_t{1}, std::size_t{1} << 40));
  clu->add_option("--method", o.method, "Algorithm")->check(CLI::IsMember({"ward", "kmeans"}));
  clu->add_option("--max-iter", o.max_iter, "Lloyd iteration cap (kmeans)")->check(CLI::PositiveNumber);
  common(clu, true);

  CLI::App* tr = app.add_subcommand("train", "Train a clustered two-step generative model");
  tr->add_option("--input", o.input, "Training dataset")->required()->check(CLI::ExistingFile);
  tr->add_option("--clusters", o.clusters, "Cluster source")
      ->check(CLI::IsMember({"labels", "groups", "ward", "kmeans", "none"}));
  tr->add_option("--labels", o.labels, "Label CSV")->check(CLI::ExistingFile);
  tr->add_option("--groups", o.groups, "Group CSV from `cluster`")->check(CLI::ExistingFile);
  tr->add_option("--L", o.L, "Clusters for ward/kmeans")->check(CLI::Range(std::size_t{1}, std::size_t{1} << 40));
  tr->add_option("--max-iter", o.max_iter, "Lloyd iteration cap (kmeans)")->check(CLI::PositiveNumber);
  tr->add_option("--dims", o.dims_mode, "Latent dimension policy")
      ->check(CLI::IsMember({"auto", "constant", "per-cluster"}));
  list(tr->add_option("--dim-values", o.dim_values, "Dimensions for constant (one) or per-cluster (L)"));
  tr->add_option("--k", o.k, "Neighborhood size for the estimator")->check(CLI::Range(std::size_t{2}, std::size_t{1} << 20));
  tr->add_option("--variant", o.variant, "Estimator normalization")->check(CLI::IsMember({"k-1", "k-2"}));
  tr->add_option("--decoder", o.decoder, "First-step model")->check(CLI::IsMember({"affine", "pca", "mlp"}));
  tr->add_option("--base", o.base, "Latent density")->check(CLI::IsMember({"gaussian", "gmm"}));
  tr->add_option("--components", o.components, "GMM components")->check(CLI::PositiveNumber);
  list(tr->add_option("--widths", o.widths, "Autoencoder hidden widths"));
  tr->add_option("--epochs", o.epochs, "Autoencoder epochs");
  tr->add_option("--lr", o.lr, "Autoencoder learning rate")->check(CLI::PositiveNumber);
  tr->add_option("--batch", o.batch, "Autoencoder batch size")->check(CLI::PositiveNumber);
  tr->add_option("--gmm-iter", o.gmm_iter, "EM iteration cap")->check(CLI::PositiveNumber);
  tr->add_flag("--parallel", o.parallel, "Train clusters concurrently");
  common(tr, true);

  CLI::App* sa = app.add_subcommand("sample", "Draw samples from a trained bundle");
  sa->add_option("--model", o.model, "Bundle directory from `train`")->required()->check(CLI::ExistingDirectory);
  sa->add_option("--m", o.m, "Number of samples")->check(CLI::PositiveNumber);
  sa->add_option("--format", o.format, "Output data format")->check(CLI::IsMember({"csv", "raw"}));
  common(sa, true);

  CLI::App* ev = app.add_subcommand("eval", "Sample quality and statistics reports");
  ev->add_option("--samples", o.samples, "Generated samples")->check(CLI::ExistingFile);
  ev->add_option("--reference", o.reference, "Held-out data for MMD")->check(CLI::ExistingFile);
  ev->add_option("--train", o.train, "Training data for bridge mass")->check(CLI::ExistingFile);
  ev->add_flag("--mmd", o.mmd, "Unbiased MMD^2 between samples and reference");
  ev->add_flag("--bridge", o.bridge, "Fraction of samples off the training support");
  ev->add_option("--bandwidth", o.bandwidth, "RBF bandwidth (default: median heuristic)")->check(CLI::PositiveNumber);
  ev->add_option("--tau", o.tau, "Bridge threshold (default: automatic)")->check(CLI::NonNegativeNumber);
  ev->add_option("--id-accuracy", o.id_accuracy, "CSV of (d_hat, accuracy) pairs")->check(CLI::ExistingFile);
  common(ev, false);

  CLI::App* we = app.add_subcommand("weights", "Dimension-proportional class weights and softmax training");
  we->add_option("--input", o.input, "Training dataset")->required()->check(CLI::ExistingFile);
  we->add_option("--labels", o.labels, "Training labels")->check(CLI::ExistingFile);
  we->add_option("--test-input", o.test_input, "Evaluation dataset")->check(CLI::ExistingFile);
  we->add_option("--test-labels", o.test_labels, "Evaluation labels")->check(CLI::ExistingFile);
  we->add_option("--k", o.k, "Neighborhood size for the estimator")->check(CLI::Range(std::size_t{2}, std::size_t{1} << 20));
  we->add_option("--variant", o.variant, "Estimator normalization")->check(CLI::IsMember({"k-1", "k-2"}));
  we->add_option("--epochs", o.epochs, "Epochs");
  we->add_option("--lr", o.lr, "Learning rate")->check(CLI::PositiveNumber);
  we->add_option("--batch", o.batch, "Batch size")->check(CLI::PositiveNumber);
  common(we, true);

  CLI::App* re = app.add_subcommand("repro", "Canned desk-scale experiments");
  std::vector<std::string> experiments = repro_experiments();
  experiments.push_back("all");
  re->add_option("experiment", o.experiment, "Experiment name or `all`")->check(CLI::IsMember(experiments));
  std::uint64_t repro_seed = kReproSeed;
  re->add_option("--seed", repro_seed, "Base seed for the experiment");
  common(re, false);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    const auto subs = app.get_subcommands();
    out << (subs.empty() ? app.help() : subs.front()->help());
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::CallForVersion&) {
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return 2;
  }
  CLI::App* sub = app.get_subcommands().front();
  if (sub == re) o.seed = repro_seed;
  if (sub == ev && !o.mmd && !o.bridge && o.id_accuracy.empty()) {
    err << "error: eval needs at least one of --mmd, --bridge, --id-accuracy\n\n" << ev->help();
    return 2;
  }
  if (sub == ev && (o.mmd || o.bridge) && o.samples.empty()) {
    err << "error: --samples is required for --mmd/--bridge\n\n" << ev->help();
    return 2;
  }
  if (sub == ev && o.mmd && o.reference.empty()) {
    err << "error: --mmd needs --reference\n\n" << ev->help();
    return 2;
  }
  if (sub == ev && o.bridge && o.train.empty()) {
    err << "error: --bridge needs --train\n\n" << ev->help();
    return 2;
  }
  if (threads) set_thread_count(*threads);

  try {
    fs::create_directories(o.out);
    json run = resolved_config(*sub);
    if (sub == re) run["experiment"] = o.experiment;
    if (threads) run["threads"] = *threads;
    write_json(run, fs::path(o.out) / "run.json");
    if (sub == synth) cmd_synth(o, out);
    else if (sub == est) cmd_estimate_id(o, out);
    else if (sub == clu) cmd_cluster(o, out);
    else if (sub == tr) cmd_train(o, out);
    else if (sub == sa) cmd_sample(o, out);
    else if (sub == ev) cmd_eval(o, out);
    else if (sub == we) cmd_weights(o, out);
    else return cmd_repro(o, out, err);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace uom
