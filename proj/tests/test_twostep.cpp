#include <Eigen/Eigenvalues>
#include <cmath>
#include <fstream>

#include "test_util.hpp"
#include "uom/error.hpp"
#include "uom/synth.hpp"
#include "uom/twostep.hpp"

namespace uom {
namespace {

double per_entry_variance(const DataMatrix& x) {
  RowMatrix c = x.eigen();
  c.rowwise() -= c.colwise().mean();
  return c.squaredNorm() / double(x.rows() * x.cols());
}

DataMatrix correlated_gaussian(std::size_t n, std::uint64_t seed) {
  DataMatrix z = test::gaussian_matrix(n, 3, seed);
  Eigen::Matrix3d A;
  A << 2.0, 0.0, 0.0, 0.5, 1.0, 0.0, -0.3, 0.2, 0.4;
  RowMatrix x = z.eigen() * A.transpose();
  x.rowwise() += Eigen::RowVector3d(1.0, -2.0, 3.0);
  return DataMatrix::from_eigen(x);
}

TEST(Pca, ResidualMatchesCovarianceSpectrum) {
  const DataMatrix x = test::gaussian_matrix(300, 6, 21);
  RowMatrix c = x.eigen();
  c.rowwise() -= c.colwise().mean();
  const Eigen::MatrixXd cov = c.transpose() * c / double(x.rows());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);  // ascending eigenvalues
  for (std::size_t d = 1; d <= 6; ++d) {
    const PcaFit f = fit_pca(x, d);
    double tail = 0.0;
    for (std::size_t j = 0; j < 6 - d; ++j) tail += eig.eigenvalues()[Eigen::Index(j)];
    EXPECT_NEAR(f.reconstruction_error, tail / 6.0, 1e-10) << "d=" << d;
    const Eigen::MatrixXd top = eig.eigenvectors().rightCols(Eigen::Index(d));
    const Eigen::MatrixXd want = top * top.transpose();
    const Eigen::MatrixXd got = f.decoder.basis * f.decoder.basis.transpose();
    EXPECT_LT((want - got).cwiseAbs().maxCoeff(), 1e-8);
    for (std::size_t j = 0; j < d; ++j)
      EXPECT_NEAR(f.component_variances[j], eig.eigenvalues()[Eigen::Index(5 - j)], 1e-10);
  }
}

TEST(Pca, ExactSubspaceAndFullBasis) {
  const auto s = gen_affine_manifold(200, 3, 8, 4);
  EXPECT_LE(fit_pca(s.x, 3).reconstruction_error, 1e-9);
  const DataMatrix x = test::gaussian_matrix(50, 5, 2);
  EXPECT_LE(fit_pca(x, 5).reconstruction_error, 1e-9);
}

TEST(Pca, ErrorNonIncreasingInD) {
  const DataMatrix x = test::gaussian_matrix(100, 8, 3);
  double prev = INFINITY;
  for (std::size_t d = 1; d <= 8; ++d) {
    const double e = fit_pca(x, d).reconstruction_error;
    EXPECT_LE(e, prev + 1e-12);
    prev = e;
  }
}

TEST(Pca, SignConventionAndRange) {
  const DataMatrix x = test::gaussian_matrix(100, 4, 3);
  const PcaFit f = fit_pca(x, 2);
  for (Eigen::Index c = 0; c < 2; ++c) {
    Eigen::Index arg = 0;
    f.decoder.basis.col(c).cwiseAbs().maxCoeff(&arg);
    EXPECT_GT(f.decoder.basis(arg, c), 0.0);
  }
  EXPECT_THROW(fit_pca(x, 0), ArgumentError);
  EXPECT_THROW(fit_pca(x, 5), ArgumentError);
}

double relative_error(double a, double b) { return std::abs(a - b) / std::max(1e-8, std::abs(a) + std::abs(b)); }

TEST(Autoencoder, GradientMatchesCentralDifferences) {
  Autoencoder ae(4, 2, {5, 3}, 11);
  const DataMatrix pts = test::gaussian_matrix(10, 4, 12);
  const Eigen::MatrixXd batch = pts.eigen().transpose();
  std::vector<double> grad;
  ae.loss_and_gradient(batch, grad);
  auto p = ae.parameters();
  ASSERT_EQ(grad.size(), p.size());
  const double h = 1e-6;
  double worst = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    auto q = p;
    q[k] = p[k] + h;
    ae.set_parameters(q);
    const double up = ae.loss(batch);
    q[k] = p[k] - h;
    ae.set_parameters(q);
    const double down = ae.loss(batch);
    worst = std::max(worst, relative_error((up - down) / (2 * h), grad[k]));
  }
  EXPECT_LE(worst, 1e-4);
}

TEST(Autoencoder, ZeroEpochsLeavesInitialization) {
  const DataMatrix x = test::gaussian_matrix(40, 4, 2);
  MlpConfig cfg;
  cfg.epochs = 0;
  cfg.widths = {8};
  const MlpFit f = fit_mlp_ae(x, 2, cfg);
  ASSERT_EQ(f.loss_trace.size(), 1u);
  const RowMatrix back = f.decoder.decode(f.decoder.encode(x.eigen()));
  const double mse = (back - x.eigen()).squaredNorm() / double(x.rows() * x.cols());
  EXPECT_NEAR(f.reconstruction_error, mse, 1e-12);
}

TEST(Autoencoder, LearnsAffineSubspace) {
  const auto s = gen_affine_manifold(400, 2, 6, 8);
  MlpConfig cfg;
  cfg.widths = {32};
  cfg.epochs = 300;
  cfg.learning_rate = 0.05;
  cfg.batch_size = 32;
  cfg.seed = 3;
  const MlpFit f = fit_mlp_ae(s.x, 2, cfg);
  EXPECT_LT(f.reconstruction_error, 0.05 * per_entry_variance(s.x));
  EXPECT_LT(f.loss_trace.back(), f.loss_trace.front());
  const MlpFit g = fit_mlp_ae(s.x, 2, cfg);
  EXPECT_EQ(f.loss_trace, g.loss_trace);
}

TEST(Autoencoder, DivergenceIsTrainingError) {
  const DataMatrix x = test::gaussian_matrix(50, 3, 1, 1e3);
  MlpConfig cfg;
  cfg.learning_rate = 1e30;
  cfg.epochs = 5;
  try {
    fit_mlp_ae(x, 1, cfg);
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    EXPECT_NE(std::string(e.what()).find("epoch"), std::string::npos);
  }
}

TEST(Gaussian, ClosedFormAndFloor) {
  RowMatrix z(2, 1);
  z << 0.0, 2.0;
  const LatentDensity g = fit_gaussian(z);
  EXPECT_DOUBLE_EQ(g.means(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(g.variances(0, 0), 1.0);
  RowMatrix same = RowMatrix::Constant(3, 2, 5.0);
  EXPECT_DOUBLE_EQ(fit_gaussian(same).variances(0, 1), kDefaultVarianceFloor);
  // N(0,1) density at 0
  RowMatrix zz(2, 1);
  zz << -1.0, 1.0;
  const double at0[1] = {0.0};
  EXPECT_NEAR(fit_gaussian(zz).log_density(at0), -0.5 * std::log(2 * M_PI), 1e-12);
}

TEST(Gmm, SingleComponentEqualsGaussian) {
  const DataMatrix x = test::gaussian_matrix(200, 3, 5);
  GmmConfig cfg;
  cfg.seed = 1;
  const GmmFit g = fit_gmm(x.eigen(), 1, cfg);
  const LatentDensity a = fit_gaussian(x.eigen());
  EXPECT_LT((g.density.means - a.means).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((g.density.variances - a.variances).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_DOUBLE_EQ(g.density.weights[0], 1.0);
}

TEST(Gmm, RecoversTwoBlobs) {
  DataMatrix x = test::gaussian_matrix(400, 1, 7);
  for (std::size_t i = 200; i < 400; ++i) x(i, 0) += 100.0;
  GmmConfig cfg;
  cfg.seed = 2;
  const GmmFit g = fit_gmm(x.eigen(), 2, cfg);
  double lo = std::min(g.density.means(0, 0), g.density.means(1, 0));
  double hi = std::max(g.density.means(0, 0), g.density.means(1, 0));
  EXPECT_NEAR(lo, 0.0, 0.5);
  EXPECT_NEAR(hi, 100.0, 0.5);
  EXPECT_NEAR(g.density.weights[0], 0.5, 1e-9);
}

TEST(Gmm, LogLikelihoodNonDecreasing) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const DataMatrix x = test::gaussian_matrix(150, 2, 100 + seed);
    GmmConfig cfg;
    cfg.seed = seed;
    const GmmFit g = fit_gmm(x.eigen(), 3, cfg);
    for (std::size_t t = 1; t < g.log_likelihood_trace.size(); ++t)
      ASSERT_GE(g.log_likelihood_trace[t] - g.log_likelihood_trace[t - 1], -1e-9) << "seed " << seed;
    double total = 0.0;
    for (double w : g.density.weights) total += w;
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(Gmm, Validation) {
  const DataMatrix x = test::gaussian_matrix(3, 1, 1);
  EXPECT_THROW(fit_gmm(x.eigen(), 0, {}), ArgumentError);
  EXPECT_THROW(fit_gmm(x.eigen(), 4, {}), ArgumentError);
}

TEST(TwoStep, FullDimensionalGaussianMatchesMoments) {
  const DataMatrix x = correlated_gaussian(5000, 3);
  TwoStepConfig cfg;
  cfg.seed = 4;
  const PushforwardModel m = fit_two_step(x, 3, cfg);
  const DataMatrix s = sample(m, 50000, 9);
  auto moments = [](const DataMatrix& d) {
    RowMatrix c = d.eigen();
    const Eigen::RowVectorXd mu = c.colwise().mean();
    c.rowwise() -= mu;
    return std::make_pair(mu, Eigen::MatrixXd(c.transpose() * c / double(d.rows())));
  };
  const auto [mx, cx] = moments(x);
  const auto [ms, cs] = moments(s);
  EXPECT_LT((mx - ms).cwiseAbs().maxCoeff(), 0.05);
  EXPECT_LT((cx - cs).cwiseAbs().maxCoeff(), 0.08);
}

TEST(TwoStep, AffineSamplesStayOnSubspace) {
  const DataMatrix x = test::gaussian_matrix(300, 6, 2);
  TwoStepConfig cfg;
  cfg.base = BaseKind::gmm;
  cfg.gmm_components = 3;
  const PushforwardModel m = fit_two_step(x, 2, cfg);
  const DataMatrix s = sample(m, 500, 1);
  const auto& B = m.decoder.basis;
  for (std::size_t i = 0; i < s.rows(); ++i) {
    const Eigen::VectorXd r = Eigen::Map<const Eigen::VectorXd>(s.row(i).data(), 6) - m.decoder.offset;
    EXPECT_LE((r - B * (B.transpose() * r)).norm(), 1e-9);
  }
}

TEST(TwoStep, SamplingDeterministicAndZeroVariance) {
  const DataMatrix x = test::gaussian_matrix(100, 4, 2);
  PushforwardModel m = fit_two_step(x, 2, {});
  EXPECT_EQ(sample(m, 50, 3), sample(m, 50, 3));
  m.base.variances.setZero();
  const DataMatrix s = sample(m, 10, 3);
  const RowMatrix center = m.decoder.decode(m.base.means);
  for (std::size_t i = 0; i < 10; ++i)
    for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(s(i, j), center(0, Eigen::Index(j)));
}

TEST(Persistence, RoundTripAndIntegrity) {
  test::TempDir dir;
  const DataMatrix x = test::gaussian_matrix(100, 5, 2);
  TwoStepConfig cfg;
  cfg.decoder = DecoderKind::mlp;
  cfg.mlp.epochs = 3;
  cfg.mlp.widths = {6};
  cfg.base = BaseKind::gmm;
  cfg.gmm_components = 2;
  const PushforwardModel m = fit_two_step(x, 2, cfg);
  save_model(m, dir / "model");
  std::ifstream desc(dir / "model.json");
  const auto j = nlohmann::json::parse(desc);
  EXPECT_EQ(j.at("format"), 1);
  const PushforwardModel back = load_model(dir / "model");
  EXPECT_EQ(pack_parameters(back), pack_parameters(m));
  EXPECT_EQ(sample(back, 20, 5), sample(load_model(dir / "model"), 20, 5));
  const DataMatrix a = sample(m, 20, 5), b = sample(back, 20, 5);
  for (std::size_t i = 0; i < a.values().size(); ++i) EXPECT_NEAR(a.values()[i], b.values()[i], 1e-4);

  {
    std::fstream f(dir / "model.params", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(8);
    const char junk[4] = {1, 2, 3, 4};
    f.write(junk, 4);
  }
  EXPECT_THROW(load_model(dir / "model"), IntegrityError);
  EXPECT_THROW(load_model(dir / "nothing"), LoadError);
}

TEST(Config, JsonRoundTrip) {
  TwoStepConfig cfg;
  cfg.decoder = DecoderKind::mlp;
  cfg.base = BaseKind::gmm;
  cfg.gmm_components = 4;
  cfg.mlp.widths = {16, 8};
  cfg.seed = 99;
  const TwoStepConfig back = two_step_config_from_json(to_json(cfg));
  EXPECT_EQ(back.decoder, DecoderKind::mlp);
  EXPECT_EQ(back.base, BaseKind::gmm);
  EXPECT_EQ(back.gmm_components, 4u);
  EXPECT_EQ(back.mlp.widths, (std::vector<std::size_t>{16, 8}));
  EXPECT_EQ(back.seed, 99u);
  EXPECT_THROW(parse_decoder_kind("flow"), ArgumentError);
}

}  // namespace
}  // namespace uom
