#include "cvr/lp.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include "cvr/errors.hpp"

namespace cvr {

int LpProblem::add_variable(double lo, double hi, double c) {
  cost.push_back(c);
  lower.push_back(lo);
  upper.push_back(hi);
  return num_cols() - 1;
}

int LpProblem::add_row(std::vector<std::pair<int, double>> coef, RowSense sense, double rhs) {
  rows.push_back({std::move(coef), sense, rhs});
  return num_rows() - 1;
}

std::vector<double> LpProblem::activity(const std::vector<double>& x) const {
  std::vector<double> out(rows.size(), 0.0);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (auto [j, a] : rows[i].coef) out[i] += a * x[j];
  return out;
}

double LpProblem::max_violation(const std::vector<double>& x) const {
  double worst = 0.0;
  for (int j = 0; j < num_cols(); ++j) worst = std::max({worst, lower[j] - x[j], x[j] - upper[j]});
  const std::vector<double> act = activity(x);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double d = act[i] - rows[i].rhs;
    switch (rows[i].sense) {
    case RowSense::le: worst = std::max(worst, d); break;
    case RowSense::ge: worst = std::max(worst, -d); break;
    case RowSense::eq: worst = std::max(worst, std::abs(d)); break;
    }
  }
  return worst;
}

void LpProblem::validate() const {
  if (lower.size() != cost.size() || upper.size() != cost.size()) throw InputError("LP bound vectors have the wrong size");
  for (int j = 0; j < num_cols(); ++j) {
    if (!std::isfinite(lower[j]) || !std::isfinite(upper[j]))
      throw InputError("LP column " + std::to_string(j) + " has an infinite bound");
    if (lower[j] > upper[j]) throw InputError("LP column " + std::to_string(j) + " has lower > upper");
  }
  for (int i = 0; i < num_rows(); ++i) {
    std::set<int> seen;
    for (auto [j, a] : rows[i].coef) {
      if (j < 0 || j >= num_cols()) throw InputError("LP row " + std::to_string(i) + " references a missing column");
      if (!seen.insert(j).second) throw InputError("LP row " + std::to_string(i) + " has a duplicate entry");
      if (!std::isfinite(a)) throw InputError("LP row " + std::to_string(i) + " has a non-finite coefficient");
    }
  }
}

std::string to_string(LpStatus s) {
  switch (s) {
  case LpStatus::optimal: return "optimal";
  case LpStatus::infeasible: return "infeasible";
  case LpStatus::unbounded: return "unbounded";
  case LpStatus::iteration_limit: return "iteration-limit";
  }
  return "unknown";
}

namespace {

using SparseMat = Eigen::SparseMatrix<double>;
using Vec = Eigen::VectorXd;

struct Eta {
  int row;
  double pivot;
  std::vector<std::pair<int, double>> entries; // off-pivot nonzeros of the entering column
};

// Computational form: A x - s = 0 with bounded logicals s, plus artificials for phase 1.
class Simplex {
public:
  Simplex(const LpProblem& p, const std::vector<double>& lower, const std::vector<double>& upper, const LpOptions& opt)
      : prob_(p), opt_(opt), m_(p.num_rows()), n_(p.num_cols()) {
    cols_.resize(n_);
    for (int i = 0; i < m_; ++i)
      for (auto [j, a] : p.rows[i].coef)
        if (a != 0.0) cols_[j].push_back({i, a});
    lo_ = lower;
    up_ = upper;
    for (int i = 0; i < m_; ++i) {
      cols_.push_back({{i, -1.0}});
      const LpRow& r = p.rows[i];
      lo_.push_back(r.sense == RowSense::le ? -kInf : r.rhs);
      up_.push_back(r.sense == RowSense::ge ? kInf : r.rhs);
    }
  }

  LpSolution run() {
    LpSolution out;
    out.x.assign(n_, 0.0);
    if (!start()) return finish(out, LpStatus::infeasible);

    if (num_art_ > 0) {
      cost_.assign(cols_.size(), 0.0);
      for (int k = n_ + m_; k < static_cast<int>(cols_.size()); ++k) cost_[k] = 1.0;
      const LpStatus s1 = iterate();
      if (s1 == LpStatus::iteration_limit) return finish(out, s1);
      double infeas = 0.0;
      for (int k = n_ + m_; k < static_cast<int>(cols_.size()); ++k) infeas += x_[k];
      if (infeas > 1e-7) return finish(out, LpStatus::infeasible);
      for (int k = n_ + m_; k < static_cast<int>(cols_.size()); ++k) {
        up_[k] = 0.0;
        if (pos_[k] < 0) x_[k] = 0.0;
      }
    }
    cost_.assign(cols_.size(), 0.0);
    for (int j = 0; j < n_; ++j) cost_[j] = prob_.cost[j];
    const LpStatus s2 = iterate();
    return finish(out, s2);
  }

private:
  const LpProblem& prob_;
  LpOptions opt_;
  int m_, n_;
  int num_art_ = 0;
  std::vector<std::vector<std::pair<int, double>>> cols_;
  std::vector<double> lo_, up_, cost_, x_;
  std::vector<int> basis_, pos_;
  mutable Eigen::SparseLU<SparseMat, Eigen::COLAMDOrdering<int>> lu_;
  std::vector<Eta> etas_;
  int iterations_ = 0;

  static double nonbasic_start(double lo, double up) {
    if (std::isfinite(lo)) return lo;
    if (std::isfinite(up)) return up;
    return 0.0;
  }

  bool start() {
    x_.assign(n_ + m_, 0.0);
    for (int j = 0; j < n_; ++j) {
      if (lo_[j] > up_[j]) return false;
      x_[j] = nonbasic_start(lo_[j], up_[j]);
    }
    std::vector<double> act(m_, 0.0);
    for (int j = 0; j < n_; ++j)
      for (auto [i, a] : cols_[j]) act[i] += a * x_[j];
    basis_.assign(m_, -1);
    for (int i = 0; i < m_; ++i) {
      const int s = n_ + i;
      if (act[i] >= lo_[s] - opt_.primal_tol && act[i] <= up_[s] + opt_.primal_tol) {
        basis_[i] = s;
        x_[s] = act[i];
        continue;
      }
      const double b = act[i] < lo_[s] ? lo_[s] : up_[s];
      x_[s] = b;
      const double sigma = b > act[i] ? 1.0 : -1.0;
      cols_.push_back({{i, sigma}});
      lo_.push_back(0.0);
      up_.push_back(kInf);
      x_.push_back(std::abs(b - act[i]));
      basis_[i] = static_cast<int>(cols_.size()) - 1;
      ++num_art_;
    }
    pos_.assign(cols_.size(), -1);
    for (int i = 0; i < m_; ++i) pos_[basis_[i]] = i;
    refactor();
    return true;
  }

  void refactor() {
    etas_.clear();
    if (m_ == 0) return;
    std::vector<Eigen::Triplet<double>> trip;
    for (int r = 0; r < m_; ++r)
      for (auto [i, a] : cols_[basis_[r]]) trip.emplace_back(i, r, a);
    SparseMat B(m_, m_);
    B.setFromTriplets(trip.begin(), trip.end());
    B.makeCompressed();
    lu_.analyzePattern(B);
    lu_.factorize(B);
    if (lu_.info() != Eigen::Success) throw SolveError("simplex basis became singular");
    recompute_basic();
  }

  void recompute_basic() {
    if (m_ == 0) return;
    Vec rhs = Vec::Zero(m_);
    for (std::size_t j = 0; j < cols_.size(); ++j) {
      if (pos_[j] >= 0 || x_[j] == 0.0) continue;
      for (auto [i, a] : cols_[j]) rhs[i] -= a * x_[j];
    }
    const Vec xb = ftran(rhs);
    for (int r = 0; r < m_; ++r) x_[basis_[r]] = xb[r];
  }

  Vec ftran(const Vec& b) const {
    Vec z = lu_.solve(b);
    for (const Eta& e : etas_) {
      const double zr = z[e.row] / e.pivot;
      if (zr != 0.0)
        for (auto [i, a] : e.entries) z[i] -= a * zr;
      z[e.row] = zr;
    }
    return z;
  }

  Vec btran(Vec c) const {
    for (auto it = etas_.rbegin(); it != etas_.rend(); ++it) {
      double s = c[it->row];
      for (auto [i, a] : it->entries) s -= a * c[i];
      c[it->row] = s / it->pivot;
    }
    return lu_.transpose().solve(c);
  }

  double reduced_cost(int j, const Vec& y) const {
    double d = cost_[j];
    for (auto [i, a] : cols_[j]) d -= a * y[i];
    return d;
  }

  LpStatus iterate() {
    refactor();
    bool bland = false;
    int degenerate = 0;
    const int total = static_cast<int>(cols_.size());
    while (true) {
      if (iterations_ >= opt_.max_iterations) return LpStatus::iteration_limit;
      if (static_cast<int>(etas_.size()) >= opt_.refactor_period) refactor();

      Vec cb(m_);
      for (int r = 0; r < m_; ++r) cb[r] = cost_[basis_[r]];
      const Vec y = m_ > 0 ? btran(cb) : Vec();

      int q = -1;
      double dq = 0.0, best = 0.0;
      for (int j = 0; j < total; ++j) {
        if (pos_[j] >= 0 || lo_[j] == up_[j]) continue;
        const double d = reduced_cost(j, y);
        const bool can_up = x_[j] < up_[j] && d < -opt_.dual_tol;
        const bool can_down = x_[j] > lo_[j] && d > opt_.dual_tol;
        if (!can_up && !can_down) continue;
        if (bland) {
          q = j;
          dq = d;
          break;
        }
        if (std::abs(d) > best) {
          best = std::abs(d);
          q = j;
          dq = d;
        }
      }
      if (q < 0) return LpStatus::optimal;

      Vec aq = Vec::Zero(m_);
      for (auto [i, a] : cols_[q]) aq[i] = a;
      const Vec alpha = m_ > 0 ? ftran(aq) : Vec();
      const double dir = dq < 0.0 ? 1.0 : -1.0;

      double theta = up_[q] - lo_[q];
      int leave = -1;
      double leave_alpha = 0.0;
      for (int r = 0; r < m_; ++r) {
        const double g = dir * alpha[r];
        if (std::abs(alpha[r]) < 1e-9) continue;
        const int b = basis_[r];
        double ratio;
        if (g > 0.0) {
          if (!std::isfinite(lo_[b])) continue;
          ratio = std::max(0.0, x_[b] - lo_[b]) / g;
        } else {
          if (!std::isfinite(up_[b])) continue;
          ratio = std::max(0.0, up_[b] - x_[b]) / -g;
        }
        const bool tie = leave >= 0 && std::abs(ratio - theta) <= 1e-12;
        if (ratio < theta - 1e-12 || (leave < 0 && ratio <= theta) ||
            (tie && (bland ? b < basis_[leave] : std::abs(alpha[r]) > std::abs(leave_alpha)))) {
          theta = ratio;
          leave = r;
          leave_alpha = alpha[r];
        }
      }
      if (!std::isfinite(theta)) return LpStatus::unbounded;
      ++iterations_;

      if (theta <= 1e-12) {
        if (++degenerate > 10 * std::max(1, m_)) bland = true;
      } else {
        degenerate = 0;
      }

      x_[q] += dir * theta;
      for (int r = 0; r < m_; ++r)
        if (alpha[r] != 0.0) x_[basis_[r]] -= dir * theta * alpha[r];

      if (leave < 0) {
        x_[q] = dir > 0 ? up_[q] : lo_[q];
        continue;
      }
      const int out = basis_[leave];
      x_[out] = dir * alpha[leave] > 0.0 ? lo_[out] : up_[out];
      Eta e{leave, alpha[leave], {}};
      for (int r = 0; r < m_; ++r)
        if (r != leave && alpha[r] != 0.0) e.entries.push_back({r, alpha[r]});
      etas_.push_back(std::move(e));
      pos_[out] = -1;
      pos_[q] = leave;
      basis_[leave] = q;
    }
  }

  LpSolution& finish(LpSolution& out, LpStatus status) {
    out.status = status;
    out.iterations = iterations_;
    if (x_.size() >= static_cast<std::size_t>(n_))
      for (int j = 0; j < n_; ++j) out.x[j] = std::clamp(x_[j], lo_[j], up_[j]);
    out.objective = 0.0;
    for (int j = 0; j < n_; ++j) out.objective += prob_.cost[j] * out.x[j];
    if (status == LpStatus::optimal && m_ > 0) {
      Vec cb(m_);
      for (int r = 0; r < m_; ++r) cb[r] = cost_[basis_[r]];
      const Vec y = btran(cb);
      out.duals.assign(y.data(), y.data() + m_);
      out.reduced_costs.resize(n_);
      for (int j = 0; j < n_; ++j) out.reduced_costs[j] = reduced_cost(j, y);
    } else if (status == LpStatus::optimal) {
      out.reduced_costs = prob_.cost;
    }
    return out;
  }
};

} // namespace

LpSolution solve_lp(const LpProblem& problem, const LpOptions& options) {
  return solve_lp(problem, problem.lower, problem.upper, options);
}

LpSolution solve_lp(const LpProblem& problem, const std::vector<double>& lower, const std::vector<double>& upper,
                    const LpOptions& options) {
  if (static_cast<int>(lower.size()) != problem.num_cols() || static_cast<int>(upper.size()) != problem.num_cols())
    throw InputError("LP bound override has the wrong size");
  Simplex s(problem, lower, upper, options);
  return s.run();
}

} // namespace cvr
