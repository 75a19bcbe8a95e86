#include "headprobe/stats.hpp"

#include <cmath>
#include <limits>

#include <Eigen/Dense>
#include <boost/math/distributions/students_t.hpp>

#include "headprobe/error.hpp"

namespace headprobe {

const char* to_string(Coding c) { return c == Coding::kSum ? "sum" : "treatment"; }

double two_tailed_p(double t, double df) {
  if (std::isnan(t)) return std::numeric_limits<double>::quiet_NaN();
  if (std::isinf(t)) return 0.0;
  const boost::math::students_t dist(df);
  return std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(t))));
}

RegressionFit fit_two_by_two(const std::vector<Observation>& observations, Coding coding) {
  const std::size_t n = observations.size();
  if (n < 5) {
    throw StatisticsError("fit_two_by_two: need at least 5 observations, got " + std::to_string(n));
  }
  std::array<std::size_t, 4> cell_counts{};
  for (const Observation& o : observations) {
    ++cell_counts[Condition{o.dependent_plausible, o.distractor_plausible}.index()];
  }
  for (int c = 0; c < 4; ++c) {
    if (cell_counts[c] == 0) {
      throw StatisticsError("fit_two_by_two: rank-deficient design, no observations in " +
                            Condition::from_index(c).label());
    }
  }

  const double lo = coding == Coding::kSum ? -0.5 : 0.0;
  const double hi = coding == Coding::kSum ? 0.5 : 1.0;
  Eigen::MatrixXd X(n, 4);
  Eigen::VectorXd y(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Observation& o = observations[i];
    const double dep = o.dependent_plausible ? lo : hi;
    const double dis = o.distractor_plausible ? lo : hi;
    X.row(static_cast<Eigen::Index>(i)) << 1.0, dep, dis, dep * dis;
    y(static_cast<Eigen::Index>(i)) = o.surprisal_bits;
  }

  const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  if (qr.rank() < 4) throw StatisticsError("fit_two_by_two: rank-deficient design matrix");
  const Eigen::VectorXd beta = qr.solve(y);
  const Eigen::VectorXd resid = y - X * beta;

  RegressionFit fit;
  fit.coding = coding;
  fit.n_observations = n;
  fit.residual_df = n - 4;
  const auto df = static_cast<double>(fit.residual_df);

  double rss = resid.squaredNorm();
  const double tss = (y.array() - y.mean()).square().sum();
  // A numerically perfect fit has exactly zero residual variance.
  if (rss <= 1e-24 * std::max(1.0, tss + y.squaredNorm())) rss = 0.0;
  const double sigma2 = rss / df;
  const Eigen::Matrix4d xtx_inv = (X.transpose() * X).inverse();
  // Below this an estimate is round-off from an exactly null effect.
  const double zero_tol = 1e-12 * std::max(1.0, y.cwiseAbs().maxCoeff());

  Coefficient* out[4] = {&fit.intercept, &fit.dependent, &fit.distractor, &fit.interaction};
  for (int j = 0; j < 4; ++j) {
    Coefficient& c = *out[j];
    c.estimate = beta(j);
    c.se = std::sqrt(sigma2 * xtx_inv(j, j));
    if (c.se > 0.0) {
      c.t = c.estimate / c.se;
    } else {
      c.t = std::fabs(c.estimate) <= zero_tol ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), c.estimate);
    }
    c.p = c.t == 0.0 ? 1.0 : two_tailed_p(c.t, df);
  }
  return fit;
}

std::vector<Observation> to_observations(const std::vector<SurprisalRecord>& records) {
  std::vector<Observation> obs;
  obs.reserve(records.size());
  for (const SurprisalRecord& r : records) {
    obs.push_back({r.condition.dependent_plausible, r.condition.distractor_plausible, r.verb_surprisal_bits});
  }
  return obs;
}

std::array<ConditionStats, 4> condition_summary(const std::vector<SurprisalRecord>& records) {
  std::array<std::vector<double>, 4> cells;
  for (const SurprisalRecord& r : records) cells[r.condition.index()].push_back(r.verb_surprisal_bits);
  std::array<ConditionStats, 4> out;
  for (int c = 0; c < 4; ++c) {
    const auto& v = cells[c];
    if (v.empty()) {
      throw StatisticsError("condition_summary: no records for " + Condition::from_index(c).label());
    }
    ConditionStats& s = out[c];
    s.condition = Condition::from_index(c);
    s.n = v.size();
    double sum = 0.0;
    for (double x : v) sum += x;
    s.mean = sum / static_cast<double>(s.n);
    if (s.n > 1) {
      double ss = 0.0;
      for (double x : v) ss += (x - s.mean) * (x - s.mean);
      s.se = std::sqrt(ss / static_cast<double>(s.n - 1)) / std::sqrt(static_cast<double>(s.n));
    }
  }
  return out;
}

}  // namespace headprobe
