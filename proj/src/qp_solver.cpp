#include "cscopf/qp_solver.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "cscopf/errors.hpp"

namespace cscopf {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

constexpr double kInf = 1e30;
constexpr double kRhoMin = 1e-6;
constexpr double kRhoMax = 1e6;
constexpr double kRhoEqScale = 1e3;

/// Stacked form l <= A x <= u, constraint rows first, then bounds.
struct Stacked {
  MatrixXd a;
  VectorXd l;
  VectorXd u;
  std::vector<std::string> tags;
};

Stacked stack(const QuadraticProgram& qp) {
  const Index n = qp.variables();
  const auto mc = static_cast<Index>(qp.constraints.size());
  Stacked s;
  s.a = MatrixXd::Zero(mc + n, n);
  s.l.resize(mc + n);
  s.u.resize(mc + n);
  for (Index i = 0; i < mc; ++i) {
    const auto& c = qp.constraints[static_cast<std::size_t>(i)];
    s.a.row(i) = c.coeffs.transpose();
    switch (c.sense) {
      case Sense::less_equal: s.l(i) = -kInf; s.u(i) = c.rhs; break;
      case Sense::greater_equal: s.l(i) = c.rhs; s.u(i) = kInf; break;
      case Sense::equal: s.l(i) = c.rhs; s.u(i) = c.rhs; break;
    }
    s.tags.emplace_back(to_string(c.tag));
  }
  for (Index j = 0; j < n; ++j) {
    s.a(mc + j, j) = 1.0;
    s.l(mc + j) = qp.lower(j);
    s.u(mc + j) = qp.upper(j);
    s.tags.emplace_back(to_string(ConstraintTag::variable_limit));
  }
  return s;
}

double inf_norm(const VectorXd& v) { return v.size() ? v.lpNorm<Eigen::Infinity>() : 0.0; }

/// Scaled problem data and the scaling that produced it:
/// P_s = c D P D, q_s = c D q, A_s = E A D, l_s = E l, u_s = E u.
struct Scaled {
  VectorXd p;  // diagonal of P_s (P = 2 diag(quad))
  VectorXd q;
  MatrixXd a;
  VectorXd l;
  VectorXd u;
  VectorXd d;
  VectorXd e;
  double c = 1.0;
};

double clamp_norm(double v) {
  if (v < 1e-4) return 1.0;
  return std::min(v, 1e4);
}

Scaled equilibrate(const QuadraticProgram& qp, const Stacked& st, int iterations) {
  const Index n = qp.variables();
  const Index m = st.a.rows();
  Scaled s;
  s.p = 2.0 * qp.quad;
  s.q = qp.linear;
  s.a = st.a;
  s.d = VectorXd::Ones(n);
  s.e = VectorXd::Ones(m);
  for (int it = 0; it < iterations; ++it) {
    VectorXd dd(n), ee(m);
    for (Index j = 0; j < n; ++j) {
      dd(j) = 1.0 / std::sqrt(clamp_norm(std::max(std::abs(s.p(j)), s.a.col(j).cwiseAbs().maxCoeff())));
    }
    for (Index i = 0; i < m; ++i) ee(i) = 1.0 / std::sqrt(clamp_norm(s.a.row(i).cwiseAbs().maxCoeff()));
    s.p = s.p.cwiseProduct(dd).cwiseProduct(dd);
    s.q = s.q.cwiseProduct(dd);
    s.a = ee.asDiagonal() * s.a * dd.asDiagonal();
    s.d = s.d.cwiseProduct(dd);
    s.e = s.e.cwiseProduct(ee);
  }
  const double cost_norm = std::max(s.p.cwiseAbs().mean(), inf_norm(s.q));
  s.c = 1.0 / clamp_norm(cost_norm);
  s.p *= s.c;
  s.q *= s.c;
  s.l.resize(m);
  s.u.resize(m);
  for (Index i = 0; i < m; ++i) {
    s.l(i) = st.l(i) <= -kInf ? -kInf : st.l(i) * s.e(i);
    s.u(i) = st.u(i) >= kInf ? kInf : st.u(i) * s.e(i);
  }
  return s;
}

struct Admm {
  const Scaled& s;
  const QpSettings& set;
  VectorXd rho_vec;
  Eigen::LLT<MatrixXd> llt;
  double rho;

  Admm(const Scaled& sc, const QpSettings& st) : s(sc), set(st), rho(st.rho) { update_rho(rho); }

  void update_rho(double r) {
    rho = std::clamp(r, kRhoMin, kRhoMax);
    const Index m = s.a.rows();
    rho_vec.resize(m);
    for (Index i = 0; i < m; ++i) {
      if (s.l(i) <= -kInf && s.u(i) >= kInf) {
        rho_vec(i) = kRhoMin;
      } else if (s.u(i) - s.l(i) < 1e-12) {
        rho_vec(i) = kRhoEqScale * rho;
      } else {
        rho_vec(i) = rho;
      }
    }
    MatrixXd k = s.a.transpose() * rho_vec.asDiagonal() * s.a;
    k.diagonal() += s.p + VectorXd::Constant(s.p.size(), set.sigma);
    llt.compute(k);
    if (llt.info() != Eigen::Success) throw NumericalError("ADMM KKT factorization failed");
  }
};

/// Unscaled residual norms for termination.
struct Residuals {
  double prim = 0, dual = 0, prim_scale = 0, dual_scale = 0;
};

Residuals residuals(const Scaled& s, const VectorXd& x, const VectorXd& z, const VectorXd& y) {
  const VectorXd einv = s.e.cwiseInverse();
  const VectorXd dinv = s.d.cwiseInverse();
  const VectorXd ax = s.a * x;
  Residuals r;
  r.prim = inf_norm(einv.cwiseProduct(ax - z));
  r.prim_scale = std::max(inf_norm(einv.cwiseProduct(ax)), inf_norm(einv.cwiseProduct(z)));
  const VectorXd px = s.p.cwiseProduct(x);
  const VectorXd aty = s.a.transpose() * y;
  r.dual = inf_norm(dinv.cwiseProduct(px + s.q + aty)) / s.c;
  r.dual_scale = std::max({inf_norm(dinv.cwiseProduct(px)), inf_norm(dinv.cwiseProduct(aty)),
                           inf_norm(dinv.cwiseProduct(s.q))}) /
                 s.c;
  return r;
}

bool primal_infeasible(const Scaled& s, const VectorXd& dy, double eps) {
  const VectorXd dy_u = s.e.cwiseProduct(dy);
  const double norm = inf_norm(dy_u);
  if (norm < 1e-30) return false;
  const VectorXd atdy = s.d.cwiseInverse().cwiseProduct(s.a.transpose() * dy);
  if (inf_norm(atdy) > eps * norm) return false;
  double support = 0.0;
  for (Index i = 0; i < dy.size(); ++i) {
    if (dy(i) > 0.0) {
      if (s.u(i) >= kInf) {
        if (dy_u(i) > eps * norm) return false;
        continue;
      }
      support += s.u(i) * dy(i);
    } else if (dy(i) < 0.0) {
      if (s.l(i) <= -kInf) {
        if (-dy_u(i) > eps * norm) return false;
        continue;
      }
      support += s.l(i) * dy(i);
    }
  }
  return support < -eps * norm;
}

/// Equality-constrained solve on the guessed active set, in scaled space.
bool polish(const Scaled& s, const VectorXd& z, const VectorXd& y, VectorXd& x_out,
            VectorXd& y_out) {
  const Index n = s.p.size();
  const Index m = s.a.rows();
  std::vector<Index> act;
  std::vector<double> target;
  for (Index i = 0; i < m; ++i) {
    const bool eq = s.u(i) - s.l(i) < 1e-12;
    if (eq) {
      act.push_back(i);
      target.push_back(s.l(i));
    } else if (s.l(i) > -kInf && z(i) - s.l(i) < -y(i)) {
      act.push_back(i);
      target.push_back(s.l(i));
    } else if (s.u(i) < kInf && s.u(i) - z(i) < y(i)) {
      act.push_back(i);
      target.push_back(s.u(i));
    }
  }
  const auto na = static_cast<Index>(act.size());
  const double delta = 1e-9;
  MatrixXd kkt = MatrixXd::Zero(n + na, n + na);
  kkt.topLeftCorner(n, n).diagonal() = s.p;
  VectorXd rhs(n + na);
  rhs.head(n) = -s.q;
  for (Index r = 0; r < na; ++r) {
    kkt.block(n + r, 0, 1, n) = s.a.row(act[static_cast<std::size_t>(r)]);
    kkt.block(0, n + r, n, 1) = s.a.row(act[static_cast<std::size_t>(r)]).transpose();
    rhs(n + r) = target[static_cast<std::size_t>(r)];
  }
  MatrixXd reg = kkt;
  reg.topLeftCorner(n, n).diagonal().array() += delta;
  reg.bottomRightCorner(na, na).diagonal().array() -= delta;
  Eigen::PartialPivLU<MatrixXd> lu(reg);
  VectorXd sol = lu.solve(rhs);
  for (int it = 0; it < 10; ++it) {
    const VectorXd res = rhs - kkt * sol;
    if (inf_norm(res) < 1e-13 * std::max(1.0, inf_norm(rhs))) break;
    sol += lu.solve(res);
  }
  if (!sol.allFinite()) return false;
  x_out = sol.head(n);
  y_out = VectorXd::Zero(m);
  for (Index r = 0; r < na; ++r) y_out(act[static_cast<std::size_t>(r)]) = sol(n + r);
  return true;
}

}  // namespace

std::string to_string(QpStatus status) {
  switch (status) {
    case QpStatus::optimal: return "optimal";
    case QpStatus::infeasible: return "infeasible";
    case QpStatus::iteration_limit: return "iteration-limit";
  }
  return "unknown";
}

double QuadraticProgram::objective(const VectorXd& x) const { return quad.dot(x.cwiseProduct(x)) + linear.dot(x); }

void QuadraticProgram::validate() const {
  const Index n = variables();
  if (quad.size() != n || lower.size() != n || upper.size() != n) {
    throw InputError("quadratic program dimensions are inconsistent");
  }
  if (!quad.allFinite() || !linear.allFinite()) throw InputError("quadratic program has non-finite costs");
  if ((quad.array() < 0.0).any()) throw InputError("quadratic program is not convex (negative curvature)");
  for (Index j = 0; j < n; ++j) {
    if (!std::isfinite(lower(j)) || !std::isfinite(upper(j))) {
      throw InputError("variable bounds must be finite");
    }
    if (lower(j) > upper(j)) throw InputError("variable bounds are inconsistent (lower > upper)");
  }
  for (const auto& c : constraints) {
    if (c.coeffs.size() != n) throw InputError("constraint '" + c.provenance + "' has the wrong length");
    if (!c.coeffs.allFinite() || !std::isfinite(c.rhs)) {
      throw InputError("constraint '" + c.provenance + "' has non-finite data");
    }
  }
}

KktResiduals kkt_residuals(const QuadraticProgram& qp, const VectorXd& x, const VectorXd& y) {
  const auto st = stack(qp);
  const VectorXd ax = st.a * x;
  KktResiduals r;
  const double scale = std::max(1.0, inf_norm(qp.linear));
  for (Index i = 0; i < ax.size(); ++i) {
    r.primal = std::max({r.primal, st.l(i) - ax(i), ax(i) - st.u(i)});
    double comp = 0.0;
    if (y(i) > 0.0) comp = st.u(i) >= kInf ? y(i) : y(i) * std::abs(st.u(i) - ax(i));
    if (y(i) < 0.0) comp = st.l(i) <= -kInf ? -y(i) : -y(i) * std::abs(ax(i) - st.l(i));
    r.complementarity = std::max(r.complementarity, comp / scale);
  }
  const VectorXd grad = 2.0 * qp.quad.cwiseProduct(x) + qp.linear + st.a.transpose() * y;
  r.dual = inf_norm(grad) / scale;
  return r;
}

QpSolution solve_qp(const QuadraticProgram& qp, const QpSettings& settings, const VectorXd* warm_start) {
  qp.validate();
  const auto st = stack(qp);
  const auto sc = equilibrate(qp, st, settings.scaling_iterations);
  const Index n = qp.variables();
  const Index m = st.a.rows();

  Admm admm(sc, settings);
  VectorXd x = VectorXd::Zero(n);
  if (warm_start) {
    if (warm_start->size() != n) throw InputError("warm start has the wrong length");
    x = warm_start->cwiseQuotient(sc.d);
  }
  VectorXd z = (sc.a * x).cwiseMax(sc.l).cwiseMin(sc.u);
  VectorXd y = VectorXd::Zero(m);

  QpSolution out;
  out.status = QpStatus::iteration_limit;
  const double alpha = settings.alpha;
  const double tol_target = settings.eps_abs;
  const auto worst = [](const KktResiduals& r) { return std::max({r.primal, r.dual, r.complementarity}); };

  auto unscale_into = [&](const VectorXd& xs, const VectorXd& ys) {
    out.x = sc.d.cwiseProduct(xs);
    out.y = sc.e.cwiseProduct(ys) / sc.c;
  };
  // Polishes from the current iterate; keeps the result when it certifies.
  auto try_polish = [&]() {
    if (!settings.polish) return false;
    VectorXd xp, yp;
    if (!polish(sc, z, y, xp, yp)) return false;
    const VectorXd xu = sc.d.cwiseProduct(xp);
    const VectorXd yu = sc.e.cwiseProduct(yp) / sc.c;
    const auto kp = kkt_residuals(qp, xu, yu);
    if (worst(kp) > tol_target) return false;
    out.x = xu;
    out.y = yu;
    out.kkt = kp;
    out.polished = true;
    return true;
  };

  // ADMM passes through a ladder of tolerances; at each rung the active
  // set is polished and the solve ends as soon as the KKT conditions hold.
  // Below eps_abs the ladder continues while the unscaled residuals exceed it.
  double eps = std::max(1e-3, settings.eps_abs);
  const double eps_floor = 1e-3 * settings.eps_abs;
  int k = 0;
  bool converged = false;
  for (; k < settings.max_iter; ++k) {
    const VectorXd y_prev = y;
    const VectorXd rhs = settings.sigma * x - sc.q + sc.a.transpose() * (admm.rho_vec.cwiseProduct(z) - y);
    const VectorXd xt = admm.llt.solve(rhs);
    const VectorXd zt = sc.a * xt;
    x = alpha * xt + (1.0 - alpha) * x;
    const VectorXd zr = alpha * zt + (1.0 - alpha) * z;
    z = (zr + admm.rho_vec.cwiseInverse().cwiseProduct(y)).cwiseMax(sc.l).cwiseMin(sc.u);
    y += admm.rho_vec.cwiseProduct(zr - z);

    if ((k + 1) % 10 != 0) continue;
    const auto r = residuals(sc, x, z, y);
    const double eps_rel = eps * settings.eps_rel / settings.eps_abs;
    if (r.prim <= eps + eps_rel * r.prim_scale && r.dual <= eps + eps_rel * r.dual_scale) {
      if (try_polish()) {
        out.status = QpStatus::optimal;
        out.iterations = k + 1;
        out.objective = qp.objective(out.x);
        return out;
      }
      if (eps <= settings.eps_abs) {
        unscale_into(x, y);
        if (worst(kkt_residuals(qp, out.x, out.y)) <= tol_target || eps <= eps_floor) {
          converged = true;
          ++k;
          break;
        }
      }
      eps = std::max(eps * 1e-1, eps <= settings.eps_abs ? eps_floor : settings.eps_abs);
    }
    if (primal_infeasible(sc, y - y_prev, settings.eps_infeasible)) {
      out.status = QpStatus::infeasible;
      out.iterations = k + 1;
      const VectorXd dy = sc.e.cwiseProduct(y - y_prev).cwiseAbs();
      const double top = inf_norm(dy);
      std::set<std::string> tags;
      for (Index i = 0; i < m; ++i) {
        if (dy(i) >= 0.1 * top) tags.insert(st.tags[static_cast<std::size_t>(i)]);
      }
      out.infeasible_tags.assign(tags.begin(), tags.end());
      unscale_into(x, y);
      out.objective = qp.objective(out.x);
      out.kkt = kkt_residuals(qp, out.x, out.y);
      return out;
    }
    if ((k + 1) % 50 == 0 && r.prim_scale > 0 && r.dual_scale > 0) {
      const double ratio = std::sqrt((r.prim / std::max(r.prim_scale, 1e-30)) /
                                     std::max(r.dual / std::max(r.dual_scale, 1e-30), 1e-30));
      if (ratio > 5.0 || ratio < 0.2) admm.update_rho(admm.rho * ratio);
    }
  }

  out.iterations = k;
  if (try_polish()) {
    out.status = QpStatus::optimal;
  } else {
    unscale_into(x, y);
    out.kkt = kkt_residuals(qp, out.x, out.y);
    out.polished = false;
    out.status = converged ? QpStatus::optimal : QpStatus::iteration_limit;
  }
  out.objective = qp.objective(out.x);
  return out;
}

}  // namespace cscopf
