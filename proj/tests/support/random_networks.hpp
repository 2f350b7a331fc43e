#pragma once

#include <filesystem>
#include <random>
#include <vector>

#include "cscopf/grid_model.hpp"
#include "cscopf/qp_solver.hpp"

namespace cscopf::testing {

/// Connected network on buses 1..n_buses: a random spanning tree plus
/// `extra_branches` chords. Bus 1 is the reference and hosts a generator;
/// the remaining buses carry loads. Generation matches load exactly.
Network random_network(std::mt19937_64& rng, int n_buses, int extra_branches);

/// Every minimal edge cut (bond) of the in-service graph, by brute force
/// over branch subsets. Exponential; use on small graphs only.
std::vector<std::vector<BranchId>> enumerate_bonds(const Network& net);

/// Machine 1 at bus 1 exporting `p_mw` over a single line (reactance
/// x_line) to bus 2, where a load absorbs it and machine 2 with inertia
/// h_inf approximates an infinite bus.
Network smib_network(double p_mw, double h, double xd_prime, double x_line, double h_inf = 1e7);

/// Brute-force minimizer of a QP with at most three variables and only
/// inequality rows: a tensor grid over the bounds, plus the projection of
/// every grid point onto each subset of rows so active faces are sampled
/// exactly, re-centred on the best point `levels` times with the window
/// halved each time.
/// Returns an empty vector when no grid point is feasible.
Eigen::VectorXd grid_search_qp(const QuadraticProgram& qp, int points = 21, int levels = 30);

/// Absolute path of a file under data/.
std::filesystem::path data_file(const std::string& name);

}  // namespace cscopf::testing
