#include "uom/repro.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include "uom/clustered.hpp"
#include "uom/error.hpp"
#include "uom/eval.hpp"
#include "uom/idest.hpp"
#include "uom/parallel.hpp"
#include "uom/rng.hpp"
#include "uom/synth.hpp"
#include "uom/twostep.hpp"
#include "uom/weights.hpp"

namespace uom {

namespace {

using nlohmann::json;

std::string num(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

class Recorder {
 public:
  explicit Recorder(ReproResult& r) : r_(r) { r_.report["checks"] = json::array(); }

  void check(const std::string& name, bool ok, json detail = json::object()) {
    r_.report["checks"].push_back({{"name", name}, {"passed", ok}, {"detail", std::move(detail)}});
    if (!ok) r_.failed.push_back(name);
  }

 private:
  ReproResult& r_;
};

// ---------------------------------------------------------------------------
// uom-verify: per-group estimates on a two-component union bracket the pooled one.

ReproResult uom_verify(std::uint64_t seed) {
  constexpr std::size_t n = 5000, D = 32;
  constexpr double gap = 10.0;
  const std::size_t dims[2] = {2, 8};
  ReproResult r{"uom-verify", json::object(), {}, {}};
  Recorder rec(r);

  std::vector<SyntheticData> parts;
  for (std::size_t l = 0; l < 2; ++l) parts.push_back(gen_affine_manifold(n, dims[l], D, derive_seed(seed, l)));
  const SyntheticData u = compose_union(std::move(parts), gap, derive_seed(seed, 2));
  const IdReport id = per_group_id(u.x, GroupIndex::from_labels(u.x.labels()), kDefaultKList);

  r.report["truth"] = to_json(u.truth);
  r.report["id"] = to_json(id);
  std::ostringstream tsv;
  tsv << "k\tgroup_0\tgroup_1\tpooled\n";
  for (std::size_t p = 0; p < id.k_list.size(); ++p) {
    const double a = id.cell(0, p).estimate->value, b = id.cell(1, p).estimate->value;
    const double pooled = id.pooled[p]->value;
    tsv << id.k_list[p] << '\t' << num(a) << '\t' << num(b) << '\t' << num(pooled) << '\n';
    const std::string k = std::to_string(id.k_list[p]);
    rec.check("spread>=3 at k=" + k, std::abs(a - b) >= 3.0, {{"group_0", a}, {"group_1", b}});
    rec.check("pooled bracketed at k=" + k, std::min(a, b) < pooled && pooled < std::max(a, b),
              {{"pooled", pooled}});
  }
  r.tables["id_table.tsv"] = tsv.str();
  return r;
}

// ---------------------------------------------------------------------------
// prop1: a single connected-support model puts mass between two far blobs.

/// Blob 1 is offset by `separation` along a direction fixed by `geometry`;
/// `draws` seeds the points.
DataMatrix two_blobs(std::size_t n_per, std::size_t D, double separation, std::uint64_t geometry,
                     std::uint64_t draws) {
  Rng g(geometry);
  Eigen::VectorXd dir(static_cast<Eigen::Index>(D));
  for (auto& v : dir) v = g.normal();
  dir.normalize();
  Rng rng(draws);
  DataMatrix x(2 * n_per, D);
  std::vector<int> labels(2 * n_per);
  for (std::size_t i = 0; i < 2 * n_per; ++i) {
    const int l = i < n_per ? 0 : 1;
    labels[i] = l;
    for (std::size_t j = 0; j < D; ++j) x(i, j) = rng.normal() + (l ? separation * dir[static_cast<Eigen::Index>(j)] : 0.0);
  }
  x.set_labels(std::move(labels));
  return x;
}

ReproResult prop1(std::uint64_t seed, const std::filesystem::path& work) {
  constexpr std::size_t n_per = 1500, D = 16, m = 3000, seeds = 3;
  constexpr double separation = 50.0;
  ReproResult r{"prop1", json::object(), {}, {}};
  Recorder rec(r);
  std::ostringstream tsv;
  tsv << "seed\tmodel\tbridge_mass\tmmd2\n";
  json runs = json::array();

  for (std::size_t s = 0; s < seeds; ++s) {
    const std::uint64_t rs = derive_seed(seed, s);
    const DataMatrix train = two_blobs(n_per, D, separation, derive_seed(rs, 0), derive_seed(rs, 1));
    const DataMatrix held = two_blobs(n_per, D, separation, derive_seed(rs, 0), derive_seed(rs, 6));
    const double tau = auto_bridge_tau(train);
    const double sigma = median_pairwise_distance(train, held);

    TwoStepConfig mcfg;
    mcfg.seed = derive_seed(rs, 2);
    const PushforwardModel single = fit_two_step(train, D, mcfg);
    const DataMatrix xs_single = sample(single, m, derive_seed(rs, 3));

    ClusteredConfig ccfg;
    ccfg.dims.mode = DimsMode::constant;
    ccfg.dims.values = {D};
    ccfg.model = mcfg;
    ccfg.seed = derive_seed(rs, 4);
    const ClusteredModel clustered =
        train_clustered(train, GroupIndex::from_labels(train.labels()), ccfg, work / ("prop1_" + std::to_string(s)));
    const DataMatrix xs_clustered = sample_clustered(clustered, m, derive_seed(rs, 5));

    const double b_single = bridge_mass(xs_single, train, tau).off_support_fraction;
    const double b_clustered = bridge_mass(xs_clustered, train, tau).off_support_fraction;
    const double mmd_single = mmd2_unbiased(xs_single, held, sigma).value;
    const double mmd_clustered = mmd2_unbiased(xs_clustered, held, sigma).value;
    tsv << s << "\tsingle\t" << num(b_single) << '\t' << num(mmd_single) << '\n';
    tsv << s << "\tclustered\t" << num(b_clustered) << '\t' << num(mmd_clustered) << '\n';
    runs.push_back({{"seed_index", s},
                    {"tau", tau},
                    {"bandwidth", sigma},
                    {"bridge_single", b_single},
                    {"bridge_clustered", b_clustered},
                    {"mmd2_single", mmd_single},
                    {"mmd2_clustered", mmd_clustered}});
    const std::string tag = " (seed " + std::to_string(s) + ")";
    rec.check("single bridge_mass>=0.05" + tag, b_single >= 0.05, {{"value", b_single}});
    rec.check("clustered bridge_mass<=0.005" + tag, b_clustered <= 0.005, {{"value", b_clustered}});
    rec.check("clustered mmd2<=0.5*single" + tag, mmd_clustered <= 0.5 * mmd_single,
              {{"clustered", mmd_clustered}, {"single", mmd_single}});
  }
  r.report["runs"] = runs;
  r.tables["bridge.tsv"] = tsv.str();
  return r;
}

// ---------------------------------------------------------------------------
// varying-dims: per-cluster latent dimensions versus one shared dimension.

struct Split {
  DataMatrix train, held;
};

/// First n_train rows of every group go to train, the rest to held.
Split split_groups(const DataMatrix& x, std::size_t n_train) {
  const GroupIndex g = GroupIndex::from_labels(x.labels());
  const auto parts = split_by_group(x, g);
  std::vector<DataMatrix> tr, he;
  std::vector<int> ltr, lhe;
  for (std::size_t l = 0; l < parts.size(); ++l) {
    const std::size_t n = parts[l].rows();
    tr.push_back(slice_rows(parts[l], 0, n_train));
    he.push_back(slice_rows(parts[l], n_train, n - n_train));
    ltr.insert(ltr.end(), n_train, static_cast<int>(l));
    lhe.insert(lhe.end(), n - n_train, static_cast<int>(l));
  }
  Split s{concat_rows(tr), concat_rows(he)};
  s.train.set_labels(std::move(ltr));
  s.held.set_labels(std::move(lhe));
  return s;
}

struct DimsRun {
  double mmd_auto = 0.0, mmd_constant = 0.0;
  std::vector<std::size_t> dims_auto, dims_constant;
};

DimsRun varying_dims_run(std::size_t d_high, std::size_t d_low, std::uint64_t seed, const std::filesystem::path& work) {
  constexpr std::size_t n_train = 2000, n_held = 1500, D = 32, d_latent = 20;
  constexpr double gap = 5.0;
  std::vector<SyntheticData> parts;
  parts.push_back(gen_pushforward_manifold(n_train + n_held, d_latent, d_high, D, derive_seed(seed, 0)));
  parts.push_back(gen_pushforward_manifold(n_train + n_held, d_latent, d_low, D, derive_seed(seed, 1)));
  const SyntheticData u = compose_union(std::move(parts), gap, derive_seed(seed, 2));
  const Split s = split_groups(u.x, n_train);
  const GroupIndex g = GroupIndex::from_labels(s.train.labels());
  const double sigma = median_pairwise_distance(s.train, s.held);

  DimsRun out;
  for (const DimsMode mode : {DimsMode::automatic, DimsMode::constant}) {
    ClusteredConfig cfg;
    cfg.dims.mode = mode;
    cfg.model.seed = derive_seed(seed, 3);
    cfg.seed = derive_seed(seed, 4);
    const ClusteredModel model = train_clustered(s.train, g, cfg, work / to_string(mode));
    const DataMatrix xs = sample_clustered(model, s.held.rows(), derive_seed(seed, 5));
    const double mmd = mmd2_unbiased(xs, s.held, sigma).value;
    std::vector<std::size_t> dims;
    for (const auto& c : model.clusters) dims.push_back(c.latent_dim);
    if (mode == DimsMode::automatic) {
      out.mmd_auto = mmd;
      out.dims_auto = dims;
    } else {
      out.mmd_constant = mmd;
      out.dims_constant = dims;
    }
  }
  return out;
}

ReproResult varying_dims(std::uint64_t seed, const std::filesystem::path& work) {
  constexpr std::size_t seeds = 2;
  const std::size_t d_high = 20;
  const std::size_t d_lows[2] = {2, 12};
  ReproResult r{"varying-dims", json::object(), {}, {}};
  Recorder rec(r);
  std::ostringstream tsv;
  tsv << "dims\tseed\tmmd2_auto\tmmd2_constant\tgap\n";
  json runs = json::array();
  double mean_gap[2] = {0.0, 0.0};
  for (std::size_t c = 0; c < 2; ++c) {
    const std::string dims = std::to_string(d_high) + "," + std::to_string(d_lows[c]);
    for (std::size_t s = 0; s < seeds; ++s) {
      const std::uint64_t rs = derive_seed(derive_seed(seed, c), s);
      const DimsRun run = varying_dims_run(d_high, d_lows[c], rs,
                                           work / ("dims_" + std::to_string(d_lows[c]) + "_" + std::to_string(s)));
      const double gap = run.mmd_constant - run.mmd_auto;
      mean_gap[c] += gap / static_cast<double>(seeds);
      tsv << dims << '\t' << s << '\t' << num(run.mmd_auto) << '\t' << num(run.mmd_constant) << '\t' << num(gap)
          << '\n';
      runs.push_back({{"true_dims", {d_high, d_lows[c]}},
                      {"seed_index", s},
                      {"dims_auto", run.dims_auto},
                      {"dims_constant", run.dims_constant},
                      {"mmd2_auto", run.mmd_auto},
                      {"mmd2_constant", run.mmd_constant}});
      if (c == 0)
        rec.check("auto<=constant for dims (" + dims + ") seed " + std::to_string(s), run.mmd_auto <= run.mmd_constant,
                  {{"auto", run.mmd_auto}, {"constant", run.mmd_constant}});
    }
  }
  r.report["runs"] = runs;
  r.report["mean_gap"] = {{"20,2", mean_gap[0]}, {"20,12", mean_gap[1]}};
  rec.check("gap shrinks from (20,2) to (20,12)", mean_gap[1] < mean_gap[0],
            {{"gap_20_2", mean_gap[0]}, {"gap_20_12", mean_gap[1]}});
  r.tables["mmd.tsv"] = tsv.str();
  return r;
}

// ---------------------------------------------------------------------------
// weighted-ce: class weights proportional to estimated class dimension.

double max_gradient_error(std::uint64_t seed) {
  constexpr std::size_t n = 20, D = 4, L = 3;
  Rng rng(seed);
  DataMatrix x(n, D);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < D; ++j) x(i, j) = rng.normal();
    labels[i] = static_cast<int>(rng.uniform_index(L));
  }
  const std::vector<double> omega{0.5, 1.0, 1.5};
  SoftmaxClassifier c(L, D);
  std::vector<double> p(c.parameters().size());
  for (auto& v : p) v = rng.normal();
  c.set_parameters(p);
  std::vector<double> grad;
  c.loss(x, labels, omega, &grad);
  constexpr double h = 1e-5;
  double worst = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    auto q = p;
    q[k] = p[k] + h;
    c.set_parameters(q);
    const double up = c.loss(x, labels, omega);
    q[k] = p[k] - h;
    c.set_parameters(q);
    const double down = c.loss(x, labels, omega);
    const double fd = (up - down) / (2.0 * h);
    worst = std::max(worst, std::abs(fd - grad[k]) / std::max(1e-8, std::abs(fd) + std::abs(grad[k])));
  }
  return worst;
}

ReproResult weighted_ce(std::uint64_t seed) {
  constexpr std::size_t n_train = 400, n_test = 200, D = 16, k = 10;
  const std::size_t dims[] = {1, 3, 6, 12};
  constexpr std::size_t L = std::size(dims);
  constexpr double noise = 0.0;
  constexpr double shrink = 0.8;
  ReproResult r{"weighted-ce", json::object(), {}, {}};
  Recorder rec(r);

  const double three_five[2] = {3.0, 5.0};
  const ClassWeights w35 = id_weights(three_five);
  rec.check("id_weights([3,5])=[0.75,1.25]", w35.omega == std::vector<double>{0.75, 1.25},
            {{"omega", w35.omega}});

  std::vector<SyntheticData> parts;
  for (std::size_t l = 0; l < L; ++l)
    parts.push_back(gen_affine_manifold(n_train + n_test, dims[l], D, derive_seed(seed, l), noise));
  SyntheticData u = compose_union(std::move(parts), 0.0, derive_seed(seed, L));
  // pull class centers together so the classes overlap
  {
    const GroupIndex g = GroupIndex::from_labels(u.x.labels());
    RowMatrix means = RowMatrix::Zero(static_cast<Eigen::Index>(L), static_cast<Eigen::Index>(D));
    for (std::size_t i = 0; i < u.x.rows(); ++i)
      for (std::size_t j = 0; j < D; ++j) means(g.assignment[i], j) += u.x(i, j) / static_cast<double>(g.sizes[g.assignment[i]]);
    for (std::size_t i = 0; i < u.x.rows(); ++i)
      for (std::size_t j = 0; j < D; ++j) u.x(i, j) -= shrink * means(g.assignment[i], j);
  }
  const Split s = split_groups(u.x, n_train);

  const IdReport id = per_group_id(s.train, GroupIndex::from_labels(s.train.labels()), {k});
  std::vector<double> d_hats;
  for (std::size_t l = 0; l < L; ++l) d_hats.push_back(id.cell(l, 0).estimate->value);
  const ClassWeights omega = id_weights(d_hats);

  SoftmaxConfig cfg;
  cfg.learning_rate = 0.05;
  cfg.epochs = 60;
  cfg.batch_size = 32;
  cfg.seed = derive_seed(seed, L + 1);
  const SoftmaxFit standard = train_softmax_weighted(s.train, s.train.labels(), L, std::nullopt, cfg);
  const SoftmaxFit ones = train_softmax_weighted(s.train, s.train.labels(), L, ClassWeights{std::vector<double>(L, 1.0)}, cfg);
  const SoftmaxFit weighted = train_softmax_weighted(s.train, s.train.labels(), L, omega, cfg);

  double trace_diff = 0.0;
  for (std::size_t e = 0; e < standard.loss_trace.size(); ++e)
    trace_diff = std::max(trace_diff, std::abs(standard.loss_trace[e] - ones.loss_trace[e]));
  rec.check("omega=1 loss trace equals standard CE", trace_diff <= 1e-10, {{"max_abs_diff", trace_diff}});
  const double grad_err = max_gradient_error(derive_seed(seed, L + 2));
  rec.check("analytic gradient within 1e-4 of finite differences", grad_err <= 1e-4, {{"max_rel_error", grad_err}});

  const auto acc_std = per_class_accuracy(standard.classifier, s.held, s.held.labels());
  const auto acc_w = per_class_accuracy(weighted.classifier, s.held, s.held.labels());
  std::vector<double> acc_values;
  std::ostringstream acc_tsv, trace_tsv;
  acc_tsv << "class\td_hat\tomega\taccuracy_standard\taccuracy_weighted\n";
  for (std::size_t l = 0; l < L; ++l) {
    acc_values.push_back(acc_std[l].value_or(0.0));
    acc_tsv << l << '\t' << num(d_hats[l]) << '\t' << num(omega.omega[l]) << '\t' << num(acc_std[l].value_or(0.0))
            << '\t' << num(acc_w[l].value_or(0.0)) << '\n';
  }
  trace_tsv << "epoch\tstandard\tweighted\n";
  for (std::size_t e = 0; e < standard.loss_trace.size(); ++e)
    trace_tsv << e << '\t' << num(standard.loss_trace[e]) << '\t' << num(weighted.loss_trace[e]) << '\n';

  auto mean = [](const std::vector<std::optional<double>>& a) {
    double s = 0.0;
    for (const auto& v : a) s += v.value_or(0.0);
    return s / static_cast<double>(a.size());
  };
  std::optional<IdAccuracyReport> corr;
  try {
    corr = id_accuracy_report(d_hats, acc_values);
  } catch (const ArgumentError&) {
    // constant accuracies: correlation undefined
  }
  r.report["d_hats"] = d_hats;
  r.report["omega"] = omega.omega;
  r.report["mean_accuracy"] = {{"standard", mean(acc_std)}, {"weighted", mean(acc_w)}};
  r.report["id_vs_accuracy"] = corr ? to_json(*corr) : json(nullptr);
  std::ostringstream fit_tsv;
  fit_tsv << "x\ty\tfit\n";
  for (std::size_t l = 0; l < L; ++l)
    fit_tsv << num(d_hats[l]) << '\t' << num(acc_values[l]) << '\t'
            << (corr ? num(corr->intercept + corr->slope * d_hats[l]) : std::string("nan")) << '\n';
  r.tables["accuracy.tsv"] = acc_tsv.str();
  r.tables["loss_trace.tsv"] = trace_tsv.str();
  r.tables["id_vs_accuracy.tsv"] = fit_tsv.str();
  return r;
}

}  // namespace

const std::vector<std::string>& repro_experiments() {
  static const std::vector<std::string> names{"uom-verify", "prop1", "varying-dims", "weighted-ce"};
  return names;
}

ReproResult run_repro(const std::string& experiment, std::uint64_t seed, const std::filesystem::path& work) {
  const auto start = std::chrono::steady_clock::now();
  ReproResult r;
  if (experiment == "uom-verify")
    r = uom_verify(seed);
  else if (experiment == "prop1")
    r = prop1(seed, work);
  else if (experiment == "varying-dims")
    r = varying_dims(seed, work);
  else if (experiment == "weighted-ce")
    r = weighted_ce(seed);
  else
    throw ArgumentError("unknown experiment '" + experiment + "'");
  r.report["experiment"] = experiment;
  r.report["seed"] = seed;
  r.report["passed"] = r.passed();
  r.report["failed"] = r.failed;
  const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
  r.report["meta"] = {{"threads", thread_count()}, {"seconds", elapsed.count()}};
  return r;
}

void write_repro(const ReproResult& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "report.json");
    if (!out) throw Error("cannot write report.json");
    out << r.report.dump(2) << '\n';
  }
  for (const auto& [name, contents] : r.tables) {
    std::ofstream out(dir / name);
    if (!out) throw Error("cannot write " + name);
    out << contents;
  }
}

std::string repro_payload(const ReproResult& r) {
  json j = r.report;
  j.erase("meta");
  std::string out = j.dump();
  for (const auto& [name, contents] : r.tables) out += "\n--- " + name + "\n" + contents;
  return out;
}

}  // namespace uom
