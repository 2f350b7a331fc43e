#include "random_networks.hpp"

#include <algorithm>
#include <limits>
#include <set>

namespace cscopf::testing {

Network random_network(std::mt19937_64& rng, int n_buses, int extra_branches) {
  std::uniform_real_distribution<double> x_dist(0.05, 0.5);
  std::uniform_real_distribution<double> limit_dist(50.0, 200.0);
  std::uniform_real_distribution<double> load_dist(10.0, 60.0);
  std::uniform_real_distribution<double> cost_dist(0.005, 0.05);

  std::vector<Bus> buses;
  for (int i = 1; i <= n_buses; ++i) buses.push_back(Bus{i, i == 1});

  std::vector<Branch> branches;
  std::set<std::pair<int, int>> used;
  auto add = [&](int a, int b) {
    used.insert({std::min(a, b), std::max(a, b)});
    branches.push_back(Branch{static_cast<BranchId>(branches.size() + 1), a, b, x_dist(rng), limit_dist(rng), true});
  };
  for (int i = 2; i <= n_buses; ++i) {
    std::uniform_int_distribution<int> parent(1, i - 1);
    add(parent(rng), i);
  }
  const int max_extra = n_buses * (n_buses - 1) / 2 - (n_buses - 1);
  std::uniform_int_distribution<int> pick(1, n_buses);
  for (int added = 0; added < std::min(extra_branches, max_extra);) {
    const int a = pick(rng), b = pick(rng);
    if (a == b || used.contains({std::min(a, b), std::max(a, b)})) continue;
    add(a, b);
    ++added;
  }

  std::vector<Load> loads;
  double total = 0.0;
  for (int i = 2; i <= n_buses; ++i) {
    const double l = load_dist(rng);
    total += l;
    loads.push_back(Load{i, i, l, 0.0, l, 1000.0});
  }
  std::vector<int> gen_buses{1};
  std::uniform_int_distribution<int> other(2, n_buses);
  gen_buses.push_back(other(rng));
  std::vector<Generator> gens;
  for (std::size_t g = 0; g < gen_buses.size(); ++g) {
    Generator gen;
    gen.id = static_cast<GeneratorId>(g + 1);
    gen.bus = gen_buses[g];
    gen.p0_mw = total / static_cast<double>(gen_buses.size());
    gen.p_min_mw = 0.0;
    gen.p_max_mw = 2.0 * total;
    gen.cost_b = 10.0 + 10.0 * static_cast<double>(g);
    gen.cost_c = cost_dist(rng);
    gens.push_back(gen);
  }
  return Network(std::move(buses), std::move(branches), std::move(gens), std::move(loads));
}

std::vector<std::vector<BranchId>> enumerate_bonds(const Network& net) {
  std::vector<std::size_t> live;
  for (std::size_t k = 0; k < net.branches().size(); ++k) {
    if (net.branches()[k].in_service) live.push_back(k);
  }
  std::vector<std::vector<BranchId>> bonds;
  const std::size_t m = live.size();
  for (std::uint64_t mask = 1; mask < (std::uint64_t{1} << m); ++mask) {
    std::vector<bool> excluded(net.branches().size(), false);
    for (std::size_t i = 0; i < m; ++i) {
      if (mask >> i & 1U) excluded[live[i]] = true;
    }
    const auto label = island_labels(net, excluded);
    const int islands = *std::max_element(label.begin(), label.end()) + 1;
    if (islands != 2) continue;
    bool minimal = true;
    std::vector<BranchId> ids;
    for (std::size_t i = 0; i < m && minimal; ++i) {
      if (!(mask >> i & 1U)) continue;
      const auto& br = net.branches()[live[i]];
      minimal = label[net.bus_index(br.from_bus)] != label[net.bus_index(br.to_bus)];
      ids.push_back(br.id);
    }
    if (minimal) {
      std::sort(ids.begin(), ids.end());
      bonds.push_back(std::move(ids));
    }
  }
  return bonds;
}

Network smib_network(double p_mw, double h, double xd_prime, double x_line, double h_inf) {
  std::vector<Bus> buses{{1, false}, {2, true}};
  std::vector<Branch> branches{{1, 1, 2, x_line, 9900.0, true}};
  Generator g1;
  g1.id = 1;
  g1.bus = 1;
  g1.p0_mw = p_mw;
  g1.p_max_mw = 2.0 * p_mw;
  g1.cost_b = 10.0;
  g1.dynamics = GenDynamics{h, 0.0, xd_prime, 100.0};
  Generator g2;
  g2.id = 2;
  g2.bus = 2;
  g2.p0_mw = 0.0;
  g2.p_max_mw = 2.0 * p_mw;
  g2.cost_b = 20.0;
  g2.dynamics = GenDynamics{h_inf, 0.0, 1e-4, 100.0};
  std::vector<Load> loads{{1, 2, p_mw, 0.0, p_mw, 1000.0}};
  return Network(std::move(buses), std::move(branches), {g1, g2}, std::move(loads));
}

Eigen::VectorXd grid_search_qp(const QuadraticProgram& qp, int points, int levels) {
  const auto n = qp.variables();
  const auto rows = qp.constraints.size();
  Eigen::VectorXd lo = qp.lower, hi = qp.upper;
  Eigen::VectorXd best_x;
  double best = std::numeric_limits<double>::infinity();
  auto feasible = [&](const Eigen::VectorXd& x) {
    if ((x.array() < qp.lower.array() - 1e-12).any() || (x.array() > qp.upper.array() + 1e-12).any()) return false;
    for (const auto& c : qp.constraints) {
      if (c.violation(x) > 1e-9) return false;
    }
    return true;
  };
  auto consider = [&](const Eigen::VectorXd& x) {
    if (!feasible(x)) return;
    const double f = qp.objective(x);
    if (f < best) {
      best = f;
      best_x = x;
    }
  };
  // Moves x onto the rows in `mask`, keeping coordinates that sit on a bound.
  auto project = [&](const Eigen::VectorXd& x, unsigned mask, Eigen::VectorXd& out) {
    std::vector<Eigen::Index> free;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (x(i) != qp.lower(i) && x(i) != qp.upper(i)) free.push_back(i);
    }
    std::vector<std::size_t> act;
    for (std::size_t r = 0; r < rows; ++r) {
      if (mask >> r & 1U) act.push_back(r);
    }
    if (act.size() > free.size()) return false;
    const auto na = static_cast<Eigen::Index>(act.size());
    const auto nf = static_cast<Eigen::Index>(free.size());
    Eigen::MatrixXd c(na, nf);
    Eigen::VectorXd res(na);
    for (Eigen::Index a = 0; a < na; ++a) {
      const auto& row = qp.constraints[act[static_cast<std::size_t>(a)]];
      for (Eigen::Index j = 0; j < nf; ++j) c(a, j) = row.coeffs(free[static_cast<std::size_t>(j)]);
      res(a) = row.evaluate(x) - row.rhs;
    }
    const Eigen::MatrixXd cct = c * c.transpose();
    Eigen::FullPivLU<Eigen::MatrixXd> lu(cct);
    if (!lu.isInvertible()) return false;
    const Eigen::VectorXd step = c.transpose() * lu.solve(res);
    out = x;
    for (Eigen::Index j = 0; j < nf; ++j) out(free[static_cast<std::size_t>(j)]) -= step(j);
    return true;
  };
  Eigen::VectorXd projected;
  for (int level = 0; level < levels; ++level) {
    const Eigen::VectorXd h = (hi - lo) / (points - 1);
    std::vector<int> idx(static_cast<std::size_t>(n), 0);
    Eigen::VectorXd x(n);
    while (true) {
      for (Eigen::Index i = 0; i < n; ++i) x(i) = lo(i) + h(i) * idx[static_cast<std::size_t>(i)];
      consider(x);
      for (unsigned mask = 1; mask < (1U << rows); ++mask) {
        if (project(x, mask, projected)) consider(projected);
      }
      std::size_t d = 0;
      while (d < idx.size() && ++idx[d] == points) idx[d++] = 0;
      if (d == idx.size()) break;
    }
    if (best_x.size() == 0) return best_x;
    const Eigen::VectorXd half = 0.25 * (hi - lo);
    lo = (best_x - half).cwiseMax(qp.lower);
    hi = (best_x + half).cwiseMin(qp.upper);
  }
  return best_x;
}

std::filesystem::path data_file(const std::string& name) {
  return std::filesystem::path(CSCOPF_DATA_DIR) / name;
}

}  // namespace cscopf::testing
