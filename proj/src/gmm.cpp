#include "skyfall/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <numbers>

#include "skyfall/errors.hpp"
#include "skyfall/rng.hpp"
#include "skyfall/serialize.hpp"

namespace skyfall {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

// Cholesky factor of a regularized covariance; throws naming the
// component when the matrix is not positive definite.
Eigen::LLT<Eigen::MatrixXd> cholesky(const Eigen::MatrixXd& cov, int component) {
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success)
    throw NumericError("covariance of component " + std::to_string(component) +
                       " is not positive definite");
  return llt;
}

double log_det(const Eigen::LLT<Eigen::MatrixXd>& llt) {
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

// Log density of N(mu, cov) for every row of x, written into out.
void log_gauss_rows(const Eigen::MatrixXd& x, const Eigen::VectorXd& mu,
                    const Eigen::LLT<Eigen::MatrixXd>& llt, double logdet,
                    Eigen::VectorXd& out) {
  const Eigen::Index dim = mu.size();
  Eigen::MatrixXd centered = x.transpose().colwise() - mu;  // D x N
  llt.matrixL().solveInPlace(centered);
  out = -0.5 * (centered.colwise().squaredNorm().array() +
                static_cast<double>(dim) * kLog2Pi + logdet);
}

double log_gauss(const Eigen::VectorXd& x, const Eigen::VectorXd& mu,
                 const Eigen::MatrixXd& cov, int component) {
  const auto llt = cholesky(cov, component);
  Eigen::VectorXd centered = x - mu;
  llt.matrixL().solveInPlace(centered);
  return -0.5 * (centered.squaredNorm() + static_cast<double>(x.size()) * kLog2Pi +
                 log_det(llt));
}

Eigen::MatrixXd sample_covariance(const Eigen::MatrixXd& x, const Eigen::VectorXd& mu) {
  const Eigen::MatrixXd centered = x.rowwise() - mu.transpose();
  return centered.transpose() * centered / static_cast<double>(x.rows());
}

struct EmState {
  GmmParams params;
  std::vector<double> ll_history;
  double final_ll = -std::numeric_limits<double>::infinity();
};

// k-means++ style seeding: first mean uniform, later means drawn with
// probability proportional to squared distance from the chosen set.
std::vector<Eigen::VectorXd> seed_means(const Eigen::MatrixXd& x, int k, Rng& rng) {
  const Eigen::Index n = x.rows();
  std::vector<Eigen::VectorXd> means;
  means.reserve(k);
  means.push_back(x.row(static_cast<Eigen::Index>(rng.below(n))).transpose());

  Eigen::VectorXd dist2 = (x.rowwise() - means[0].transpose()).rowwise().squaredNorm();
  while (static_cast<int>(means.size()) < k) {
    const double total = dist2.sum();
    Eigen::Index pick = 0;
    if (total > 0.0) {
      double target = rng.uniform() * total;
      for (Eigen::Index i = 0; i < n; ++i) {
        target -= dist2[i];
        if (target <= 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<Eigen::Index>(rng.below(n));
    }
    means.push_back(x.row(pick).transpose());
    dist2 = dist2.cwiseMin(
        (x.rowwise() - means.back().transpose()).rowwise().squaredNorm());
  }
  return means;
}

EmState run_em(const Eigen::MatrixXd& x, int k, const EmConfig& cfg, std::uint64_t seed) {
  const Eigen::Index n = x.rows();
  const Eigen::Index dim = x.cols();
  Rng rng(seed);

  EmState state;
  GmmParams& gmm = state.params;
  gmm.priors = Eigen::VectorXd::Constant(k, 1.0 / k);
  gmm.means = seed_means(x, k, rng);

  const Eigen::VectorXd global_mean = x.colwise().mean().transpose();
  const Eigen::MatrixXd reg =
      cfg.cov_regularization * Eigen::MatrixXd::Identity(dim, dim);
  const Eigen::MatrixXd global_cov = sample_covariance(x, global_mean) + reg;
  gmm.covariances.assign(k, global_cov);

  Eigen::MatrixXd log_resp(n, k);
  Eigen::VectorXd component_ll(n);
  double prev_ll = -std::numeric_limits<double>::infinity();

  for (int iter = 0; iter < cfg.max_iters; ++iter) {
    // E-step: responsibilities in log space.
    for (int c = 0; c < k; ++c) {
      const auto llt = cholesky(gmm.covariances[c], c);
      log_gauss_rows(x, gmm.means[c], llt, log_det(llt), component_ll);
      log_resp.col(c) = component_ll.array() + std::log(gmm.priors[c]);
    }
    const Eigen::VectorXd row_max = log_resp.rowwise().maxCoeff();
    const Eigen::VectorXd lse =
        ((log_resp.colwise() - row_max).array().exp().rowwise().sum().log() +
         row_max.array())
            .matrix();
    const double ll = lse.sum();
    state.ll_history.push_back(ll);
    state.final_ll = ll;

    Eigen::MatrixXd resp = (log_resp.colwise() - lse).array().exp();

    // M-step.
    for (int c = 0; c < k; ++c) {
      double mass = resp.col(c).sum();
      if (mass < 1e-12) {
        // Degenerate component: re-seed from a random data point.
        std::cerr << "skyfall: warning: re-seeding degenerate mixture component "
                  << c << "\n";
        const Eigen::Index pick = static_cast<Eigen::Index>(rng.below(n));
        resp.col(c).setZero();
        resp(pick, c) = 1.0;
        mass = 1.0;
      }
      gmm.priors[c] = mass;
      gmm.means[c] = (x.transpose() * resp.col(c)) / mass;
      const Eigen::MatrixXd centered = x.rowwise() - gmm.means[c].transpose();
      gmm.covariances[c] =
          (centered.transpose() * (centered.array().colwise() * resp.col(c).array()).matrix()) /
              mass +
          reg;
    }
    gmm.priors /= gmm.priors.sum();

    if (iter > 0 && ll - prev_ll < cfg.ll_tolerance) break;
    prev_ll = ll;
  }
  return state;
}

}  // namespace

void EmConfig::validate() const {
  if (max_iters < 1) throw DataError("EM max_iters must be >= 1");
  if (cov_regularization < 0.0) throw DataError("EM covariance regularization must be >= 0");
  if (n_restarts < 1) throw DataError("EM n_restarts must be >= 1");
}

void GmmParams::validate() const {
  const int k = components();
  if (k < 1) throw DataError("mixture must have at least one component");
  if (static_cast<int>(means.size()) != k || static_cast<int>(covariances.size()) != k)
    throw DataError("mixture parameter counts disagree");
  if (priors.minCoeff() < 0.0 || std::fabs(priors.sum() - 1.0) > 1e-9)
    throw DataError("mixture priors must be non-negative and sum to one");
  for (int c = 0; c < k; ++c) {
    if (means[c].size() != dim() || covariances[c].rows() != dim() ||
        covariances[c].cols() != dim())
      throw DataError("mixture component " + std::to_string(c) + " has wrong shape");
    if (!((covariances[c] - covariances[c].transpose()).cwiseAbs().maxCoeff() <= 1e-9))
      throw DataError("covariance of component " + std::to_string(c) + " not symmetric");
    cholesky(covariances[c], c);  // positive definiteness
  }
}

EmResult fit_em(const Eigen::MatrixXd& vectors, int k, const EmConfig& cfg) {
  cfg.validate();
  if (vectors.rows() <= k)
    throw DataError("EM needs more samples than components (" +
                    std::to_string(vectors.rows()) + " <= " + std::to_string(k) + ")");
  if (!vectors.allFinite()) throw DataError("EM input contains non-finite values");

  EmState best;
  bool have_best = false;
  for (int restart = 0; restart < cfg.n_restarts; ++restart) {
    EmState state = run_em(vectors, k, cfg, sub_seed(cfg.seed, restart));
    if (!have_best || state.final_ll > best.final_ll) {
      best = std::move(state);
      have_best = true;
    }
  }
  return {std::move(best.params), std::move(best.ll_history)};
}

double log_likelihood(const GmmParams& gmm, const Eigen::MatrixXd& vectors) {
  const int k = gmm.components();
  Eigen::MatrixXd log_terms(vectors.rows(), k);
  Eigen::VectorXd component_ll(vectors.rows());
  for (int c = 0; c < k; ++c) {
    const auto llt = cholesky(gmm.covariances[c], c);
    log_gauss_rows(vectors, gmm.means[c], llt, log_det(llt), component_ll);
    log_terms.col(c) = component_ll.array() + std::log(gmm.priors[c]);
  }
  const Eigen::VectorXd row_max = log_terms.rowwise().maxCoeff();
  return ((log_terms.colwise() - row_max).array().exp().rowwise().sum().log() +
          row_max.array())
      .sum();
}

GaussianBlocks split_blocks(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov,
                            Eigen::Index obs_dim) {
  const Eigen::Index dim = mean.size();
  if (obs_dim <= 0 || obs_dim >= dim)
    throw DataError("observed block must be a strict prefix of the joint vector");
  GaussianBlocks b;
  b.mu_x = mean.head(obs_dim);
  b.mu_y = mean.tail(dim - obs_dim);
  b.sxx = cov.topLeftCorner(obs_dim, obs_dim);
  b.sxy = cov.topRightCorner(obs_dim, dim - obs_dim);
  b.syx = cov.bottomLeftCorner(dim - obs_dim, obs_dim);
  b.syy = cov.bottomRightCorner(dim - obs_dim, dim - obs_dim);
  return b;
}

CondMixture condition(const GmmParams& gmm, const Eigen::VectorXd& x_obs,
                      Eigen::Index obs_dim) {
  if (!x_obs.allFinite()) throw DataError("conditioning input contains non-finite values");
  if (x_obs.size() != obs_dim) throw DataError("conditioning input has wrong dimension");

  const int k = gmm.components();
  CondMixture out;
  out.means.reserve(k);
  out.covariances.reserve(k);
  Eigen::VectorXd log_w(k);

  for (int c = 0; c < k; ++c) {
    const GaussianBlocks b = split_blocks(gmm.means[c], gmm.covariances[c], obs_dim);
    const auto llt = cholesky(b.sxx, c);
    // Conditional mean mu_y + Syx Sxx^-1 (x - mu_x) and covariance
    // Syy - Syx Sxx^-1 Sxy, via the SPD factorization (no inverses).
    out.means.push_back(b.mu_y + b.syx * llt.solve(x_obs - b.mu_x));
    Eigen::MatrixXd cond_cov = b.syy - b.syx * llt.solve(b.sxy);
    out.covariances.push_back(0.5 * (cond_cov + cond_cov.transpose()));

    Eigen::VectorXd centered = x_obs - b.mu_x;
    llt.matrixL().solveInPlace(centered);
    log_w[c] = std::log(gmm.priors[c]) -
               0.5 * (centered.squaredNorm() +
                      static_cast<double>(obs_dim) * kLog2Pi + log_det(llt));
  }

  const double max_lw = log_w.maxCoeff();
  if (!std::isfinite(max_lw)) {
    std::cerr << "skyfall: warning: conditioning point outside training support, "
                 "using uniform conditional priors\n";
    out.priors = Eigen::VectorXd::Constant(k, 1.0 / k);
    return out;
  }
  out.priors = (log_w.array() - max_lw).exp();
  out.priors /= out.priors.sum();
  return out;
}

Eigen::VectorXd mixture_mean(const CondMixture& mixture) {
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(mixture.means.front().size());
  for (int c = 0; c < mixture.components(); ++c)
    mean += mixture.priors[c] * mixture.means[c];
  return mean;
}

Eigen::VectorXd flatten_segment(const Segment& seg) {
  Eigen::VectorXd v(kSegmentDims);
  for (std::size_t i = 0; i < kSplitIndex; ++i) {
    v[3 * i + 0] = seg[i].x;
    v[3 * i + 1] = seg[i].y;
    v[3 * i + 2] = seg[i].z;
  }
  return v;
}

Segment unflatten_segment(const Eigen::VectorXd& v) {
  if (v.size() != kSegmentDims) throw DataError("segment vector has wrong dimension");
  Segment seg;
  for (std::size_t i = 0; i < kSplitIndex; ++i)
    seg[i] = {v[3 * i + 0], v[3 * i + 1], v[3 * i + 2]};
  return seg;
}

GmrModel fit_gmr(const Dataset& train, int k, const EmConfig& cfg) {
  GmrModel model;
  model.norm = compute_norm(train);

  Eigen::MatrixXd joint(train.size(), 2 * kSegmentDims);
  for (std::size_t i = 0; i < train.size(); ++i) {
    const auto [observed, future] = split_obs_future(train.trajectories[i]);
    joint.row(i).head(kSegmentDims) = flatten_segment(normalize(observed, model.norm));
    joint.row(i).tail(kSegmentDims) = flatten_segment(normalize(future, model.norm));
  }
  model.gmm = fit_em(joint, k, cfg).params;
  return model;
}

Segment gmr_predict(const GmrModel& model, const Segment& observed) {
  const Eigen::VectorXd x = flatten_segment(normalize(observed, model.norm));
  const CondMixture cond = condition(model.gmm, x, kSegmentDims);
  return denormalize(unflatten_segment(mixture_mean(cond)), model.norm);
}

void save_gmr(const GmrModel& model, const std::string& path) {
  nlohmann::json doc;
  doc["format_version"] = 1;
  doc["kind"] = "gmr";
  doc["K"] = model.gmm.components();
  doc["priors"] = to_json(model.gmm.priors);
  doc["means"] = nlohmann::json::array();
  doc["covariances"] = nlohmann::json::array();
  for (const auto& m : model.gmm.means) doc["means"].push_back(to_json(m));
  for (const auto& c : model.gmm.covariances) doc["covariances"].push_back(to_json(c));
  doc["norm_stats"] = to_json(model.norm);
  write_json(doc, path);
}

GmrModel load_gmr(const std::string& path) {
  const nlohmann::json doc = read_json(path);
  expect_format(doc, "gmr", 1, path);

  GmrModel model;
  const int k = doc.at("K").get<int>();
  model.gmm.priors = vector_from_json(doc.at("priors"));
  for (const auto& m : doc.at("means")) model.gmm.means.push_back(vector_from_json(m));
  for (const auto& c : doc.at("covariances"))
    model.gmm.covariances.push_back(matrix_from_json(c));
  model.norm = norm_from_json(doc.at("norm_stats"));
  if (model.gmm.components() != k)
    throw DataError(path + ": component count disagrees with K");
  model.gmm.validate();
  return model;
}

}  // namespace skyfall
