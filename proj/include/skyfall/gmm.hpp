#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "skyfall/trajectory.hpp"

namespace skyfall {

struct EmConfig {
  int max_iters = 200;
  double ll_tolerance = 1e-7;       // stop when log-likelihood gain drops below
  double cov_regularization = 1e-6; // added to covariance diagonals
  int n_restarts = 5;
  std::uint64_t seed = 0;

  void validate() const;
};

// Joint Gaussian mixture: priors sum to one, covariances symmetric
// positive definite after regularization.
struct GmmParams {
  Eigen::VectorXd priors;                    // K
  std::vector<Eigen::VectorXd> means;        // K vectors of dimension D
  std::vector<Eigen::MatrixXd> covariances;  // K matrices D x D

  int components() const { return static_cast<int>(priors.size()); }
  Eigen::Index dim() const { return means.empty() ? 0 : means.front().size(); }
  void validate() const;
};

// Partition of a joint Gaussian into observed block x = [0, obs_dim) and
// future block y = [obs_dim, D).
struct GaussianBlocks {
  Eigen::VectorXd mu_x, mu_y;
  Eigen::MatrixXd sxx, sxy, syx, syy;
};

GaussianBlocks split_blocks(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov,
                            Eigen::Index obs_dim);

struct CondMixture {
  Eigen::VectorXd priors;
  std::vector<Eigen::VectorXd> means;
  std::vector<Eigen::MatrixXd> covariances;

  int components() const { return static_cast<int>(priors.size()); }
};

struct EmResult {
  GmmParams params;
  std::vector<double> ll_history;  // one entry per EM iteration, non-decreasing
};

// Expectation-maximization over row vectors (one sample per row).
// Means are seeded k-means++ style from data points, covariances start at
// the regularized global sample covariance, priors uniform. Best of
// cfg.n_restarts by (final log-likelihood, restart index).
EmResult fit_em(const Eigen::MatrixXd& vectors, int k, const EmConfig& cfg = {});

// Sum over rows of the log mixture density, log-sum-exp over components.
double log_likelihood(const GmmParams& gmm, const Eigen::MatrixXd& vectors);

// Conditions every component on the observed block; conditional priors
// are evaluated in log space and normalized. If every component
// underflows, priors fall back to uniform with a warning.
CondMixture condition(const GmmParams& gmm, const Eigen::VectorXd& x_obs,
                      Eigen::Index obs_dim);

Eigen::VectorXd mixture_mean(const CondMixture& mixture);

inline constexpr Eigen::Index kSegmentDims = 30;  // 10 points x 3 axes

Eigen::VectorXd flatten_segment(const Segment& seg);
Segment unflatten_segment(const Eigen::VectorXd& v);

// Joint (observed || future) mixture over normalized flattened
// trajectories, plus the stats used to normalize them.
struct GmrModel {
  GmmParams gmm;  // dimension 2 * kSegmentDims
  NormStats norm;
};

GmrModel fit_gmr(const Dataset& train, int k, const EmConfig& cfg = {});

// normalize -> flatten -> condition -> mixture mean -> denormalize.
Segment gmr_predict(const GmrModel& model, const Segment& observed);

void save_gmr(const GmrModel& model, const std::string& path);
GmrModel load_gmr(const std::string& path);

}  // namespace skyfall
