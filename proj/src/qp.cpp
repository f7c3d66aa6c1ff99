#include "flexq/qp.hpp"

#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <limits>

namespace flexq::qp {

namespace {

double inf_norm(const Vector& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

double max_step(const Vector& v, const Vector& dv) {
  double alpha = 1.0;
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (dv[i] < 0.0) alpha = std::min(alpha, -v[i] / dv[i]);
  return alpha;
}

std::string family_of(const std::vector<int>& tags, const std::vector<std::string>& names, Eigen::Index row,
                      const char* fallback) {
  if (row < 0 || row >= static_cast<Eigen::Index>(tags.size())) return fallback;
  const int tag = tags[row];
  return tag >= 0 && tag < static_cast<int>(names.size()) ? names[tag] : fallback;
}

/// Assembles and factors [[H + ρI, Aᵀ], [A, −δI]] and solves with refinement against the unregularised system.
class KktSystem {
 public:
  KktSystem(const Problem& p, const Settings& s) : p_(p), settings_(s), n_(p.variables()), m_eq_(p.A.rows()) {}

  void factor(const Vector& w) {
    h_ = p_.P + SparseMatrix(p_.G.transpose() * w.asDiagonal() * p_.G);
    std::vector<Eigen::Triplet<double>> t;
    t.reserve(h_.nonZeros() + 2 * p_.A.nonZeros() + n_ + m_eq_);
    for (int k = 0; k < h_.outerSize(); ++k)
      for (SparseMatrix::InnerIterator it(h_, k); it; ++it) t.emplace_back(it.row(), it.col(), it.value());
    for (int k = 0; k < p_.A.outerSize(); ++k)
      for (SparseMatrix::InnerIterator it(p_.A, k); it; ++it) {
        t.emplace_back(n_ + it.row(), it.col(), it.value());
        t.emplace_back(it.col(), n_ + it.row(), it.value());
      }
    const std::size_t base = t.size();
    // a zero pivot is retried with stronger regularisation, refinement removes its bias
    for (double reg = settings_.regularisation; reg < 1e-2; reg *= 100.0) {
      t.resize(base);
      for (int i = 0; i < n_; ++i) t.emplace_back(i, i, reg);
      for (int i = 0; i < m_eq_; ++i) t.emplace_back(n_ + i, n_ + i, -reg);
      SparseMatrix k(n_ + m_eq_, n_ + m_eq_);
      k.setFromTriplets(t.begin(), t.end());
      if (!analysed_) {
        ldlt_.analyzePattern(k);
        analysed_ = true;
      }
      ldlt_.factorize(k);
      if (ldlt_.info() == Eigen::Success) return;
    }
    throw std::runtime_error("KKT factorisation failed");
  }

  Vector solve(const Vector& rhs) const {
    Vector sol = ldlt_.solve(rhs);
    for (int r = 0; r < settings_.refinement_steps; ++r) {
      const Vector res = rhs - apply(sol);
      if (inf_norm(res) < 1e-14 * (1.0 + inf_norm(rhs))) break;
      sol += ldlt_.solve(res);
    }
    return sol;
  }

 private:
  Vector apply(const Vector& v) const {
    Vector out(n_ + m_eq_);
    const auto x = v.head(n_);
    const auto y = v.tail(m_eq_);
    out.head(n_) = h_ * x + p_.A.transpose() * y;
    out.tail(m_eq_) = p_.A * x;
    return out;
  }

  const Problem& p_;
  const Settings& settings_;
  int n_;
  Eigen::Index m_eq_;
  SparseMatrix h_;
  Eigen::SimplicialLDLT<SparseMatrix, Eigen::Lower, Eigen::AMDOrdering<int>> ldlt_;
  bool analysed_ = false;
};

}  // namespace

void Problem::validate() const {
  const auto n = q.size();
  if (P.rows() != n || P.cols() != n) throw std::invalid_argument("P must be n x n");
  if (A.cols() != n || A.rows() != b.size()) throw std::invalid_argument("A and b do not match");
  if (G.cols() != n || G.rows() != h.size()) throw std::invalid_argument("G and h do not match");
  if (!eq_family.empty() && static_cast<Eigen::Index>(eq_family.size()) != A.rows())
    throw std::invalid_argument("equality family labels do not match A");
  if (!ineq_family.empty() && static_cast<Eigen::Index>(ineq_family.size()) != G.rows())
    throw std::invalid_argument("inequality family labels do not match G");
}

double KktResiduals::worst() const {
  return std::max({stationarity, equality, inequality, complementarity, dual_sign});
}

double objective(const Problem& p, const Vector& x) { return 0.5 * x.dot(p.P * x) + p.q.dot(x); }

KktResiduals kkt_residuals(const Problem& p, const Solution& sol) {
  KktResiduals r;
  r.stationarity = inf_norm(p.P * sol.x + p.q + p.A.transpose() * sol.y + p.G.transpose() * sol.z);
  r.equality = inf_norm(p.A * sol.x - p.b);
  const Vector slack = p.h - p.G * sol.x;
  r.inequality = inf_norm((-slack).cwiseMax(0.0));
  r.complementarity = inf_norm(sol.z.cwiseProduct(slack));
  r.dual_sign = inf_norm((-sol.z).cwiseMax(0.0));
  return r;
}

Solution solve(const Problem& p, const Settings& settings) {
  p.validate();
  const int n = p.variables();
  const Eigen::Index m = p.G.rows();
  KktSystem kkt(p, settings);

  Solution sol;
  // Start from the least-squares point of the inequalities, then push slacks and duals inside.
  kkt.factor(Vector::Ones(m));
  {
    Vector rhs(n + p.A.rows());
    rhs.head(n) = -p.q + p.G.transpose() * p.h;
    rhs.tail(p.A.rows()) = p.b;
    const Vector v = kkt.solve(rhs);
    sol.x = v.head(n);
    sol.y = Vector::Zero(p.A.rows());
  }
  sol.s = p.h - p.G * sol.x;
  const double shift = m > 0 ? std::max(0.0, -sol.s.minCoeff()) + 1.0 : 0.0;
  sol.s.array() += shift;
  sol.z = Vector::Ones(m);

  const double scale_q = 1.0 + inf_norm(p.q), scale_b = 1.0 + inf_norm(p.b), scale_h = 1.0 + inf_norm(p.h);
  double best_merit = std::numeric_limits<double>::infinity();
  KktResiduals best_res;
  std::string best_family = "none";

  for (int iter = 0; iter < settings.max_iterations; ++iter) {
    const Vector rd = p.P * sol.x + p.q + p.A.transpose() * sol.y + p.G.transpose() * sol.z;
    const Vector rp = p.A * sol.x - p.b;
    const Vector rg = p.G * sol.x + sol.s - p.h;
    const double mu = m > 0 ? sol.s.dot(sol.z) / static_cast<double>(m) : 0.0;
    sol.iterations = iter;

    const double ep = inf_norm(rp) / scale_b, eg = inf_norm(rg) / scale_h, ed = inf_norm(rd) / scale_q;
    const double merit = std::max({ep, eg, ed, mu});
    if (merit < best_merit) {
      best_merit = merit;
      best_res = {inf_norm(rd), inf_norm(rp), inf_norm(rg), mu, 0.0};
      Eigen::Index row_p = -1, row_g = -1;
      if (rp.size() > 0) rp.cwiseAbs().maxCoeff(&row_p);
      if (rg.size() > 0) rg.cwiseAbs().maxCoeff(&row_g);
      best_family = ep >= eg ? family_of(p.eq_family, p.family_names, row_p, "equality")
                             : family_of(p.ineq_family, p.family_names, row_g, "inequality");
    }
    const double gap = m > 0 ? sol.s.dot(sol.z) : 0.0;
    const double gap_scale = 1.0 + std::abs(objective(p, sol.x));
    if (ep < settings.tolerance && eg < settings.tolerance && ed < settings.tolerance &&
        gap < settings.tolerance * gap_scale) {
      sol.objective = objective(p, sol.x);
      return sol;
    }
    if (!std::isfinite(merit) || inf_norm(sol.x) > 1e12)
      throw SolveError("interior point diverged, the problem is likely infeasible", best_family, best_res);
    const double loose = std::sqrt(settings.tolerance);
    const bool acceptable = ep < loose && eg < loose && ed < loose && gap < loose * gap_scale;

    const Vector w = sol.z.cwiseQuotient(sol.s);
    kkt.factor(w);

    auto direction = [&](const Vector& r_sz, Vector& dx, Vector& dy, Vector& dz, Vector& ds) {
      const Vector t = rg - r_sz.cwiseQuotient(sol.z);
      Vector rhs(n + p.A.rows());
      rhs.head(n) = -rd - p.G.transpose() * w.cwiseProduct(t);
      rhs.tail(p.A.rows()) = -rp;
      const Vector v = kkt.solve(rhs);
      dx = v.head(n);
      dy = v.tail(p.A.rows());
      dz = w.cwiseProduct(p.G * dx + t);
      ds = -(r_sz + sol.s.cwiseProduct(dz)).cwiseQuotient(sol.z);
    };

    Vector dx, dy, dz, ds;
    const Vector sz = sol.s.cwiseProduct(sol.z);
    direction(sz, dx, dy, dz, ds);
    const double a_aff = std::min(max_step(sol.s, ds), max_step(sol.z, dz));
    const double mu_aff =
        m > 0 ? (sol.s + a_aff * ds).dot(sol.z + a_aff * dz) / static_cast<double>(m) : 0.0;
    const double sigma = mu > 0.0 ? std::pow(std::clamp(mu_aff / mu, 0.0, 1.0), 3) : 0.0;

    const Vector r_sz = sz + ds.cwiseProduct(dz) - Vector::Constant(m, sigma * mu);
    direction(r_sz, dx, dy, dz, ds);
    const double alpha = std::min(1.0, 0.99 * std::min(max_step(sol.s, ds), max_step(sol.z, dz)));

    // near the boundary the step can break down numerically; a nearly converged iterate is kept
    if (!std::isfinite(alpha) || !dx.allFinite() || !dy.allFinite() || !dz.allFinite() || !ds.allFinite()) {
      if (!acceptable)
        throw SolveError("interior point diverged, the problem is likely infeasible", best_family, best_res);
      sol.objective = objective(p, sol.x);
      return sol;
    }
    sol.x += alpha * dx;
    sol.y += alpha * dy;
    sol.z += alpha * dz;
    sol.s += alpha * ds;
  }
  throw SolveError("interior point iteration limit reached", best_family, best_res);
}

}  // namespace flexq::qp
