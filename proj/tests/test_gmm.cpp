#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "skyfall/errors.hpp"
#include "skyfall/gmm.hpp"
#include "skyfall/rng.hpp"
#include "skyfall/trajectory.hpp"

using namespace skyfall;

namespace {

// Naive mixture log-likelihood without log-sum-exp; independent oracle
// for the stable implementation on well-conditioned data.
double naive_log_likelihood(const GmmParams& gmm, const Eigen::MatrixXd& x) {
  double total = 0.0;
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    double density = 0.0;
    for (int c = 0; c < gmm.components(); ++c) {
      const Eigen::VectorXd diff = x.row(r).transpose() - gmm.means[c];
      const Eigen::MatrixXd& cov = gmm.covariances[c];
      const double quad = diff.dot(cov.inverse() * diff);
      const double det = cov.determinant();
      const double dim = static_cast<double>(diff.size());
      density += gmm.priors[c] * std::exp(-0.5 * quad) /
                 std::sqrt(std::pow(2.0 * std::numbers::pi, dim) * det);
    }
    total += std::log(density);
  }
  return total;
}

Eigen::MatrixXd two_cluster_sample(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd x(n, 2);
  for (std::size_t i = 0; i < n; ++i) {
    const double cx = rng.below(2) == 0 ? -5.0 : 5.0;
    x(i, 0) = rng.normal(cx, 1.0);
    x(i, 1) = rng.normal(0.0, 1.0);
  }
  return x;
}

GmmParams single_gaussian(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov) {
  GmmParams gmm;
  gmm.priors = Eigen::VectorXd::Ones(1);
  gmm.means = {mean};
  gmm.covariances = {cov};
  return gmm;
}

}  // namespace

TEST_CASE("fit_em with K=1 recovers the closed-form MLE in one iteration") {
  Rng rng(3);
  Eigen::MatrixXd x(50, 2);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    x(i, 0) = rng.normal(1.0, 2.0);
    x(i, 1) = rng.normal(-3.0, 0.5);
  }
  EmConfig cfg;
  cfg.max_iters = 1;
  cfg.n_restarts = 1;
  cfg.cov_regularization = 1e-6;
  const auto [gmm, history] = fit_em(x, 1, cfg);

  const Eigen::VectorXd mean = x.colwise().mean().transpose();
  const Eigen::MatrixXd centered = x.rowwise() - mean.transpose();
  const Eigen::MatrixXd cov =
      centered.transpose() * centered / static_cast<double>(x.rows()) +
      1e-6 * Eigen::MatrixXd::Identity(2, 2);

  CHECK((gmm.means[0] - mean).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((gmm.covariances[0] - cov).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(gmm.priors[0] == doctest::Approx(1.0));
}

TEST_CASE("fit_em recovers a well-separated two-component mixture") {
  const Eigen::MatrixXd x = two_cluster_sample(2000, 17);
  EmConfig cfg;
  const auto [gmm, history] = fit_em(x, 2, cfg);

  REQUIRE(history.size() >= 2);
  for (std::size_t i = 1; i < history.size(); ++i)
    CHECK(history[i] - history[i - 1] >= -1e-8);

  const int left = gmm.means[0][0] < gmm.means[1][0] ? 0 : 1;
  const int right = 1 - left;
  CHECK((gmm.means[left] - Eigen::Vector2d(-5.0, 0.0)).norm() <= 0.3);
  CHECK((gmm.means[right] - Eigen::Vector2d(5.0, 0.0)).norm() <= 0.3);
  CHECK(std::fabs(gmm.priors[left] - 0.5) <= 0.05);
  CHECK(std::fabs(gmm.priors[right] - 0.5) <= 0.05);
  gmm.validate();
}

TEST_CASE("fit_em rejects N <= K and non-finite input") {
  Eigen::MatrixXd x = Eigen::MatrixXd::Random(3, 2);
  CHECK_THROWS_AS(fit_em(x, 3, {}), DataError);
  x(1, 1) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(fit_em(x, 1, {}), DataError);
}

TEST_CASE("log_likelihood of a standard normal at the mode") {
  const GmmParams gmm = single_gaussian(Eigen::VectorXd::Zero(1),
                                        Eigen::MatrixXd::Identity(1, 1));
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(1, 1);
  CHECK(log_likelihood(gmm, x) ==
        doctest::Approx(-0.5 * std::log(2.0 * std::numbers::pi)).epsilon(1e-12));
}

TEST_CASE("log_likelihood: a mixture of identical components collapses") {
  const Eigen::VectorXd mean = Eigen::Vector2d(0.3, -1.0);
  Eigen::MatrixXd cov(2, 2);
  cov << 1.5, 0.2, 0.2, 0.8;
  const GmmParams one = single_gaussian(mean, cov);

  GmmParams two;
  two.priors = Eigen::VectorXd::Constant(2, 0.5);
  two.means = {mean, mean};
  two.covariances = {cov, cov};

  Eigen::MatrixXd x(3, 2);
  x << 0.0, 0.0, 1.0, -2.0, 0.5, 0.5;
  CHECK(log_likelihood(two, x) == doctest::Approx(log_likelihood(one, x)).epsilon(1e-12));
}

TEST_CASE("log_likelihood matches the naive oracle on well-conditioned data") {
  const Eigen::MatrixXd x = two_cluster_sample(200, 5);
  const auto [gmm, history] = fit_em(x, 2, {});
  CHECK(log_likelihood(gmm, x) == doctest::Approx(naive_log_likelihood(gmm, x)).epsilon(1e-9));
}

TEST_CASE("singular covariance is reported with the component index") {
  GmmParams gmm;
  gmm.priors = Eigen::VectorXd::Constant(2, 0.5);
  gmm.means = {Eigen::Vector2d(0.0, 0.0), Eigen::Vector2d(1.0, 1.0)};
  Eigen::MatrixXd singular(2, 2);
  singular << 1.0, 1.0, 1.0, 1.0;  // rank 1
  gmm.covariances = {Eigen::MatrixXd::Identity(2, 2), singular};
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(1, 2);
  try {
    log_likelihood(gmm, x);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("component 1") != std::string::npos);
  }
}

TEST_CASE("conditioning with zero cross-covariance is the marginal") {
  const GmmParams gmm = single_gaussian(Eigen::Vector2d(0.0, 0.0),
                                        Eigen::MatrixXd::Identity(2, 2));
  Eigen::VectorXd x(1);
  x << 5.0;
  const CondMixture cond = condition(gmm, x, 1);
  CHECK(cond.priors[0] == doctest::Approx(1.0));
  CHECK(cond.means[0][0] == doctest::Approx(0.0));
  CHECK(cond.covariances[0](0, 0) == doctest::Approx(1.0));
}

TEST_CASE("conditioning a correlated bivariate Gaussian (hand-evaluated)") {
  Eigen::MatrixXd cov(2, 2);
  cov << 1.0, 0.5, 0.5, 1.0;
  const GmmParams gmm = single_gaussian(Eigen::Vector2d(0.0, 0.0), cov);
  Eigen::VectorXd x(1);
  x << 2.0;
  const CondMixture cond = condition(gmm, x, 1);
  CHECK(std::fabs(cond.means[0][0] - 1.0) <= 1e-9);
  CHECK(std::fabs(cond.covariances[0](0, 0) - 0.75) <= 1e-9);
}

TEST_CASE("conditioning agrees with Monte-Carlo rejection sampling") {
  // y = 0.5 x + sqrt(0.75) n gives the joint [[1,.5],[.5,1]] exactly.
  Rng rng(12);
  double sum = 0.0, sq = 0.0;
  std::size_t kept = 0;
  for (std::size_t i = 0; i < 1000000; ++i) {
    const double x = rng.normal();
    const double y = 0.5 * x + std::sqrt(0.75) * rng.normal();
    if (std::fabs(x - 2.0) < 0.01) {
      sum += y;
      sq += y * y;
      ++kept;
    }
  }
  REQUIRE(kept > 500);
  const double mean = sum / static_cast<double>(kept);
  const double var = sq / static_cast<double>(kept) - mean * mean;
  CHECK(std::fabs(mean - 1.0) <= 0.02 + 3.0 * std::sqrt(0.75 / static_cast<double>(kept)));
  CHECK(std::fabs(var - 0.75) <= 0.08);
}

TEST_CASE("conditional priors concentrate on the nearby component") {
  GmmParams gmm;
  gmm.priors = Eigen::VectorXd::Constant(2, 0.5);
  gmm.means = {Eigen::Vector2d(-10.0, 0.0), Eigen::Vector2d(10.0, 0.0)};
  gmm.covariances = {Eigen::MatrixXd::Identity(2, 2), Eigen::MatrixXd::Identity(2, 2)};
  Eigen::VectorXd x(1);
  x << 10.0;
  const CondMixture cond = condition(gmm, x, 1);
  CHECK(std::fabs(cond.priors[0] - 0.0) <= 1e-9);
  CHECK(std::fabs(cond.priors[1] - 1.0) <= 1e-9);
  CHECK(cond.priors.sum() == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("conditional covariance does not depend on the query point") {
  const Eigen::MatrixXd x = two_cluster_sample(300, 8);
  const auto [gmm, history] = fit_em(x, 2, {});
  Eigen::VectorXd q1(1), q2(1);
  q1 << -4.0;
  q2 << 3.0;
  const CondMixture c1 = condition(gmm, q1, 1);
  const CondMixture c2 = condition(gmm, q2, 1);
  for (int c = 0; c < 2; ++c)
    CHECK((c1.covariances[c] - c2.covariances[c]).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("all-component underflow falls back to uniform priors") {
  GmmParams gmm;
  gmm.priors = Eigen::VectorXd::Constant(2, 0.5);
  gmm.means = {Eigen::Vector2d(0.0, 0.0), Eigen::Vector2d(1.0, 0.0)};
  gmm.covariances = {Eigen::MatrixXd::Identity(2, 2), Eigen::MatrixXd::Identity(2, 2)};
  Eigen::VectorXd x(1);
  x << 1e200;  // squared distance overflows, every log weight is -inf
  const CondMixture cond = condition(gmm, x, 1);
  CHECK(cond.priors[0] == doctest::Approx(0.5));
  CHECK(cond.priors[1] == doctest::Approx(0.5));
}

TEST_CASE("sequential conditioning equals joint conditioning (K=1)") {
  // Random 5-d SPD covariance; condition on dims [0,2) then [2,3) must
  // equal conditioning once on dims [0,3).
  Rng rng(4);
  Eigen::MatrixXd a(5, 5);
  for (Eigen::Index r = 0; r < 5; ++r)
    for (Eigen::Index c = 0; c < 5; ++c) a(r, c) = rng.normal();
  const Eigen::MatrixXd cov =
      a * a.transpose() + 0.5 * Eigen::MatrixXd::Identity(5, 5);
  Eigen::VectorXd mean(5);
  for (Eigen::Index i = 0; i < 5; ++i) mean[i] = rng.normal();

  const GmmParams joint = single_gaussian(mean, cov);
  Eigen::VectorXd q(3);
  q << 0.7, -1.2, 0.4;

  const CondMixture once = condition(joint, q, 3);

  const CondMixture stage1 = condition(joint, q.head(2), 2);
  const GmmParams mid = single_gaussian(stage1.means[0], stage1.covariances[0]);
  const CondMixture stage2 = condition(mid, q.tail(1), 1);

  CHECK((stage2.means[0] - once.means[0]).cwiseAbs().maxCoeff() <= 1e-9);
  CHECK((stage2.covariances[0] - once.covariances[0]).cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("mixture_mean") {
  CondMixture one;
  one.priors = Eigen::VectorXd::Ones(1);
  one.means = {Eigen::Vector2d(3.0, -1.0)};
  one.covariances = {Eigen::MatrixXd::Identity(2, 2)};
  CHECK((mixture_mean(one) - Eigen::Vector2d(3.0, -1.0)).norm() == 0.0);

  CondMixture sym;
  sym.priors = Eigen::VectorXd::Constant(2, 0.5);
  sym.means = {Eigen::Vector2d(2.0, 4.0), Eigen::Vector2d(-2.0, -4.0)};
  sym.covariances = {Eigen::MatrixXd::Identity(2, 2), Eigen::MatrixXd::Identity(2, 2)};
  CHECK(mixture_mean(sym).cwiseAbs().maxCoeff() <= 1e-15);

  CondMixture weighted;
  weighted.priors = Eigen::Vector2d(0.25, 0.75);
  weighted.means = {Eigen::VectorXd::Constant(1, 4.0), Eigen::VectorXd::Constant(1, 8.0)};
  weighted.covariances = {Eigen::MatrixXd::Identity(1, 1), Eigen::MatrixXd::Identity(1, 1)};
  CHECK(mixture_mean(weighted)[0] == doctest::Approx(7.0));
}

TEST_CASE("gmr_predict reproduces a degenerate single-trajectory fit") {
  Dataset train = generate_vertical(1, 2);
  for (int i = 0; i < 7; ++i) train.trajectories.push_back(train.trajectories.front());

  EmConfig cfg;
  cfg.cov_regularization = 1e-9;
  cfg.n_restarts = 1;
  const GmrModel model = fit_gmr(train, 1, cfg);

  const auto [obs, fut] = split_obs_future(train.trajectories.front());
  const Segment pred = gmr_predict(model, obs);
  for (std::size_t i = 0; i < kSplitIndex; ++i) {
    CHECK(pred[i].finite());
    CHECK(std::fabs(pred[i].x - fut[i].x) <= 1e-6);
    CHECK(std::fabs(pred[i].y - fut[i].y) <= 1e-6);
    CHECK(std::fabs(pred[i].z - fut[i].z) <= 1e-6);
  }
}

TEST_CASE("gmr model serialization round-trips") {
  const Dataset train = generate_vertical(60, 9);
  EmConfig cfg;
  cfg.n_restarts = 2;
  cfg.max_iters = 40;
  const GmrModel model = fit_gmr(train, 2, cfg);

  const std::string path = "skyfall_test_gmr_model.json";
  save_gmr(model, path);
  const GmrModel back = load_gmr(path);
  std::remove(path.c_str());

  CHECK(back.gmm.components() == model.gmm.components());
  CHECK((back.gmm.priors - model.gmm.priors).cwiseAbs().maxCoeff() == 0.0);
  for (int c = 0; c < model.gmm.components(); ++c) {
    CHECK((back.gmm.means[c] - model.gmm.means[c]).cwiseAbs().maxCoeff() == 0.0);
    CHECK((back.gmm.covariances[c] - model.gmm.covariances[c]).cwiseAbs().maxCoeff() == 0.0);
  }
  CHECK(back.norm == model.norm);

  const auto obs = split_obs_future(train.trajectories.front()).first;
  const Segment p1 = gmr_predict(model, obs);
  const Segment p2 = gmr_predict(back, obs);
  for (std::size_t i = 0; i < kSplitIndex; ++i) CHECK(p1[i] == p2[i]);
}
