#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

#include <Eigen/Core>
#include <Eigen/SVD>

// Bounded nonlinear least squares by a trust-region reflective method.
//
// The iterate stays strictly inside [lower, upper]. Each iteration applies the
// Coleman-Li affine scaling, which shrinks the trust region along directions
// that approach a bound the gradient pushes toward, and solves the scaled
// trust-region subproblem exactly from one SVD. When the resulting step would
// leave the box it is compared with its reflection off the first bound hit and
// with a scaled gradient step, and the best of the three by the quadratic model
// is tried. Radius updates follow the usual 0.25 / 0.75 gain thresholds.

namespace moesd {

struct BoxLeastSquaresOptions {
  int max_iterations = 500;
  int max_evaluations = 5000;
  double function_tolerance = 1e-14;  // relative cost change
  double step_tolerance = 1e-14;      // relative step length
  double gradient_tolerance = 1e-14;  // scaled gradient, infinity norm
};

enum class Termination {
  gradient,
  step,
  function,
  max_iterations,
  stalled,
};

inline const char* to_string(Termination t) {
  switch (t) {
    case Termination::gradient: return "scaled gradient below tolerance";
    case Termination::step: return "step below tolerance";
    case Termination::function: return "cost change below tolerance";
    case Termination::max_iterations: return "iteration limit reached";
    case Termination::stalled: return "model not evaluable at the start point";
  }
  return "unknown";
}

struct BoxLeastSquaresSummary {
  Eigen::VectorXd x;
  double initial_cost = 0.0;
  double cost = 0.0;  // 0.5 * |r|^2
  int iterations = 0;
  int evaluations = 0;
  Termination termination = Termination::max_iterations;

  bool converged() const {
    return termination != Termination::max_iterations &&
           termination != Termination::stalled;
  }
};

namespace detail::trr {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr double kInf = std::numeric_limits<double>::infinity();

/// Largest t >= 0 with x + t s inside the box, and which coordinates bind.
inline std::pair<double, Eigen::ArrayXi> step_to_bound(const VectorXd& x, const VectorXd& s,
                                                       const VectorXd& lower,
                                                       const VectorXd& upper) {
  VectorXd steps = VectorXd::Constant(x.size(), kInf);
  for (Index i = 0; i < x.size(); ++i) {
    if (s[i] != 0.0) {
      steps[i] = std::max((lower[i] - x[i]) / s[i], (upper[i] - x[i]) / s[i]);
    }
  }
  const double t = steps.minCoeff();
  Eigen::ArrayXi hits = Eigen::ArrayXi::Zero(x.size());
  for (Index i = 0; i < x.size(); ++i) {
    if (steps[i] == t) hits[i] = s[i] > 0.0 ? 1 : (s[i] < 0.0 ? -1 : 0);
  }
  return {t, hits};
}

/// Roots t1 <= t2 of |x + t s| = radius; requires |x| <= radius.
inline std::pair<double, double> intersect_sphere(const VectorXd& x, const VectorXd& s,
                                                  double radius) {
  const double a = s.squaredNorm();
  const double b = x.dot(s);
  const double c = x.squaredNorm() - radius * radius;
  const double d = std::sqrt(std::max(b * b - a * c, 0.0));
  const double q = -(b + std::copysign(d, b));
  double t1 = q / a;
  double t2 = q != 0.0 ? c / q : 0.0;
  if (t1 > t2) std::swap(t1, t2);
  return {t1, t2};
}

/// 0.5 |J s|^2 + 0.5 s' diag s + g' s.
inline double quadratic(const MatrixXd& J, const VectorXd& g, const VectorXd& s,
                        const VectorXd& diag) {
  return 0.5 * ((J * s).squaredNorm() + s.cwiseProduct(diag).dot(s)) + g.dot(s);
}

/// Minimum of a t^2 + b t + c over [lo, hi].
inline std::pair<double, double> minimize_1d(double a, double b, double c, double lo,
                                             double hi) {
  double best_t = lo;
  double best_y = lo * (a * lo + b) + c;
  auto consider = [&](double t) {
    const double y = t * (a * t + b) + c;
    if (y < best_y) {
      best_t = t;
      best_y = y;
    }
  };
  consider(hi);
  if (a != 0.0) {
    const double extremum = -0.5 * b / a;
    if (lo < extremum && extremum < hi) consider(extremum);
  }
  return {best_t, best_y};
}

/// Exact solution of min |A p + f| subject to |p| <= radius, from the thin SVD of
/// A, with uf = U' f. `alpha` warm-starts the Levenberg parameter search.
inline VectorXd trust_region_step(const VectorXd& uf, const VectorXd& sv, const MatrixXd& V,
                                  Index rows, double radius, double& alpha) {
  const Index n = sv.size();
  const VectorXd suf = sv.cwiseProduct(uf);
  const double eps = std::numeric_limits<double>::epsilon();
  const bool full_rank = n > 0 && sv[n - 1] > eps * static_cast<double>(rows) * sv[0];
  if (full_rank) {
    const VectorXd p = -V * uf.cwiseQuotient(sv);
    if (p.norm() <= radius) {
      alpha = 0.0;
      return p;
    }
  }
  auto phi = [&](double a, double& derivative) {
    const VectorXd denom = sv.array().square() + a;
    const VectorXd q = suf.cwiseQuotient(denom);
    const double norm = q.norm();
    derivative = -(suf.array().square() / denom.array().cube()).sum() / norm;
    return norm - radius;
  };
  double upper = suf.norm() / radius;
  double lower = 0.0;
  if (full_rank) {
    double d0 = 0.0;
    const double p0 = phi(0.0, d0);
    lower = -p0 / d0;
  }
  auto fallback = [&] { return std::max(1e-3 * upper, std::sqrt(lower * upper)); };
  if (alpha <= 0.0 && !full_rank) alpha = fallback();
  for (int it = 0; it < 10; ++it) {
    if (alpha < lower || alpha > upper) alpha = fallback();
    double d = 0.0;
    const double value = phi(alpha, d);
    if (value < 0.0) upper = alpha;
    const double ratio = value / d;
    lower = std::max(lower, alpha - ratio);
    alpha -= (value + radius) * ratio / radius;
    if (std::abs(value) < 0.01 * radius) break;
  }
  VectorXd p = -V * suf.cwiseQuotient((sv.array().square() + alpha).matrix());
  const double norm = p.norm();
  if (norm > 0.0) p *= radius / norm;
  return p;
}

}  // namespace detail::trr

/// `Problem` provides
///   bool evaluate(const Eigen::VectorXd& x, Eigen::VectorXd& r, Eigen::MatrixXd* J)
/// returning false when the model cannot be evaluated at x. `x` is moved inside
/// the box before the first evaluation.
template <typename Problem>
BoxLeastSquaresSummary solve_box_least_squares(Problem& problem, Eigen::VectorXd x,
                                               const Eigen::VectorXd& lower,
                                               const Eigen::VectorXd& upper,
                                               const BoxLeastSquaresOptions& options = {}) {
  using namespace detail::trr;
  const Index n = x.size();

  // Strictly interior start.
  for (Index i = 0; i < n; ++i) {
    if (lower[i] == upper[i]) {
      x[i] = lower[i];
      continue;
    }
    const double width = std::isfinite(upper[i] - lower[i]) ? upper[i] - lower[i] : 1.0;
    const double margin = 1e-10 * std::max(std::abs(x[i]), width);
    x[i] = std::clamp(x[i], lower[i] + std::min(margin, 0.5 * width),
                      upper[i] - std::min(margin, 0.5 * width));
  }

  BoxLeastSquaresSummary out;
  VectorXd r;
  MatrixXd J;
  out.evaluations = 1;
  if (!problem.evaluate(x, r, &J) || !r.allFinite() || !J.allFinite()) {
    out.x = x;
    out.initial_cost = out.cost = kInf;
    out.termination = Termination::stalled;
    return out;
  }
  const Index m = r.size();
  double cost = 0.5 * r.squaredNorm();
  out.initial_cost = cost;
  VectorXd g = J.transpose() * r;

  // Coleman-Li scaling vector v and its derivative sign dv.
  VectorXd v(n);
  VectorXd dv(n);
  auto scaling = [&] {
    for (Index i = 0; i < n; ++i) {
      v[i] = 1.0;
      dv[i] = 0.0;
      if (g[i] < 0.0 && std::isfinite(upper[i])) {
        v[i] = upper[i] - x[i];
        dv[i] = -1.0;
      } else if (g[i] > 0.0 && std::isfinite(lower[i])) {
        v[i] = x[i] - lower[i];
        dv[i] = 1.0;
      }
    }
  };
  scaling();
  double radius = x.cwiseQuotient(v.cwiseSqrt()).norm();
  if (!(radius > 0.0) || !std::isfinite(radius)) radius = 1.0;

  double alpha = 0.0;
  VectorXd r_new;
  MatrixXd augmented(m + n, n);
  VectorXd f_augmented = VectorXd::Zero(m + n);
  Termination termination = Termination::max_iterations;
  bool done = false;
  int it = 0;

  for (; it < options.max_iterations; ++it) {
    scaling();
    if ((g.cwiseProduct(v)).lpNorm<Eigen::Infinity>() < options.gradient_tolerance) {
      termination = Termination::gradient;
      break;
    }
    if (out.evaluations >= options.max_evaluations) break;

    const VectorXd d = v.cwiseSqrt();
    const VectorXd diag_h = g.cwiseProduct(dv);
    const VectorXd g_h = d.cwiseProduct(g);
    const MatrixXd J_h = J * d.asDiagonal();
    augmented.topRows(m) = J_h;
    augmented.bottomRows(n) = diag_h.cwiseSqrt().asDiagonal();
    f_augmented.head(m) = r;
    const Eigen::JacobiSVD<MatrixXd> svd(augmented, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const VectorXd uf = svd.matrixU().transpose() * f_augmented;
    const VectorXd& sv = svd.singularValues();
    const MatrixXd& V = svd.matrixV();
    const double theta = std::max(0.995, 1.0 - (g.cwiseProduct(v)).lpNorm<Eigen::Infinity>());

    double actual = -1.0;
    double cost_new = cost;
    VectorXd x_new = x;
    while (actual <= 0.0 && out.evaluations < options.max_evaluations) {
      VectorXd p_h = trust_region_step(uf, sv, V, m + n, radius, alpha);
      VectorXd p = d.cwiseProduct(p_h);

      // Choose among the trust-region step (truncated at the box), its
      // reflection, and a scaled gradient step.
      VectorXd step_h;
      double predicted = 0.0;
      const VectorXd trial = x + p;
      if (((trial.array() >= lower.array()) && (trial.array() <= upper.array())).all()) {
        step_h = p_h;
        predicted = -quadratic(J_h, g_h, p_h, diag_h);
      } else {
        auto [p_stride, hits] = step_to_bound(x, p, lower, upper);
        VectorXd r_h = p_h;
        for (Index i = 0; i < n; ++i) {
          if (hits[i] != 0) r_h[i] = -r_h[i];
        }
        const VectorXd r_dir = d.cwiseProduct(r_h);
        p *= p_stride;
        p_h *= p_stride;
        const VectorXd on_bound = x + p;
        const double to_sphere = intersect_sphere(p_h, r_h, radius).second;
        const double to_box = step_to_bound(on_bound, r_dir, lower, upper).first;
        const double r_stride = std::min(to_box, to_sphere);
        double lo = 0.0;
        double hi = -1.0;
        if (r_stride > 0.0) {
          lo = (1.0 - theta) * p_stride / r_stride;
          hi = r_stride == to_box ? theta * to_box : to_sphere;
        }
        double r_value = kInf;
        VectorXd reflected_h;
        if (lo <= hi) {
          const VectorXd Jr = J_h * r_h;
          const VectorXd Jp = J_h * p_h;
          const double a = 0.5 * (Jr.squaredNorm() + r_h.cwiseProduct(diag_h).dot(r_h));
          const double b = g_h.dot(r_h) + Jp.dot(Jr) + p_h.cwiseProduct(diag_h).dot(r_h);
          const double c = 0.5 * (Jp.squaredNorm() + p_h.cwiseProduct(diag_h).dot(p_h)) +
                           g_h.dot(p_h);
          const auto [t, value] = minimize_1d(a, b, c, lo, hi);
          reflected_h = p_h + t * r_h;
          r_value = value;
        }
        p_h *= theta;
        const double p_value = quadratic(J_h, g_h, p_h, diag_h);

        VectorXd ag_h = -g_h;
        const VectorXd ag = d.cwiseProduct(ag_h);
        const double ag_to_sphere = radius / ag_h.norm();
        const double ag_to_box = step_to_bound(x, ag, lower, upper).first;
        const double ag_max = ag_to_box < ag_to_sphere ? theta * ag_to_box : ag_to_sphere;
        const VectorXd Jag = J_h * ag_h;
        const double a = 0.5 * (Jag.squaredNorm() + ag_h.cwiseProduct(diag_h).dot(ag_h));
        const auto [ag_t, ag_value] = minimize_1d(a, g_h.dot(ag_h), 0.0, 0.0, ag_max);
        ag_h *= ag_t;

        if (p_value < r_value && p_value < ag_value) {
          step_h = p_h;
          predicted = -p_value;
        } else if (r_value < p_value && r_value < ag_value) {
          step_h = reflected_h;
          predicted = -r_value;
        } else {
          step_h = ag_h;
          predicted = -ag_value;
        }
      }

      const VectorXd step = d.cwiseProduct(step_h);
      x_new = x + step;
      for (Index i = 0; i < n; ++i) {
        if (x_new[i] <= lower[i]) x_new[i] = std::nextafter(lower[i], upper[i]);
        if (x_new[i] >= upper[i]) x_new[i] = std::nextafter(upper[i], lower[i]);
        if (x_new[i] < lower[i] || x_new[i] > upper[i]) x_new[i] = 0.5 * (lower[i] + upper[i]);
      }

      ++out.evaluations;
      const double step_h_norm = step_h.norm();
      if (!problem.evaluate(x_new, r_new, nullptr) || !r_new.allFinite()) {
        radius = 0.25 * step_h_norm;
        continue;
      }
      cost_new = 0.5 * r_new.squaredNorm();
      actual = cost - cost_new;

      double ratio = 0.0;
      if (predicted > 0.0) {
        ratio = actual / predicted;
      } else if (predicted == 0.0 && actual == 0.0) {
        ratio = 1.0;
      }
      double radius_new = radius;
      if (ratio < 0.25) {
        radius_new = 0.25 * step_h_norm;
      } else if (ratio > 0.75 && step_h_norm > 0.95 * radius) {
        radius_new = 2.0 * radius;
      }

      const bool f_small = actual < options.function_tolerance * cost && ratio > 0.25;
      const bool x_small = step.norm() < options.step_tolerance *
                                             (options.step_tolerance + x.norm());
      if (f_small || x_small) {
        termination = f_small ? Termination::function : Termination::step;
        done = true;
        break;
      }
      if (radius_new > 0.0) alpha *= radius / radius_new;
      radius = radius_new;
      if (!(radius > 0.0)) break;
    }

    if (actual > 0.0) {
      MatrixXd J_new;
      if (problem.evaluate(x_new, r_new, &J_new) && J_new.allFinite()) {
        x = x_new;
        r.swap(r_new);
        J.swap(J_new);
        cost = cost_new;
        g = J.transpose() * r;
      }
    }
    if (done) {
      ++it;
      break;
    }
    if (!(radius > 0.0)) {
      termination = Termination::step;
      ++it;
      break;
    }
  }

  out.x = x;
  out.cost = cost;
  out.iterations = it;
  out.termination = termination;
  return out;
}

}  // namespace moesd
