#include "lastmile/vrp.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <regex>
#include <sstream>

#include "lastmile/digest.hpp"
#include "lastmile/error.hpp"

namespace lastmile {

void check_instance(const Instance& inst) {
  if (inst.matrix.size() != inst.demands.size() + 1) {
    throw Error(ErrorCode::kInvalidArgument, "matrix size must be customers + 1");
  }
  if (inst.capacity <= 0) throw Error(ErrorCode::kInvalidArgument, "capacity must be positive");
  if (inst.vehicle_count < 1) throw Error(ErrorCode::kInvalidArgument, "need at least one vehicle");
  for (std::size_t i = 0; i < inst.demands.size(); ++i) {
    if (inst.demands[i] < 0 || inst.demands[i] > inst.capacity) {
      throw Error(ErrorCode::kInvalidArgument, "demand of customer " + std::to_string(i + 1) + " outside [0, Q]");
    }
  }
}

double route_cost(const DistanceMatrix& m, std::span<const std::size_t> route) {
  if (route.empty()) return 0.0;
  double sum = 0.0;
  std::size_t prev = 0;
  if (route.front() <= route.back()) {
    for (auto c : route) {
      sum += m(prev, c);
      prev = c;
    }
  } else {
    for (auto it = route.rbegin(); it != route.rend(); ++it) {
      sum += m(prev, *it);
      prev = *it;
    }
  }
  return sum + m(prev, 0);
}

namespace {

// Ascending order makes the total a function of the set of routes alone.
double sum_route_costs(std::vector<double> costs) {
  std::sort(costs.begin(), costs.end());
  double total = 0.0;
  for (double c : costs) total += c;
  return total;
}

}  // namespace

double plan_cost(const Instance& inst, std::span<const Route> routes) {
  const std::size_t n = inst.matrix.size();
  std::vector<double> costs;
  for (const auto& r : routes) {
    for (auto c : r) {
      if (c == 0 || c >= n) throw Error(ErrorCode::kBadIndex, "customer index " + std::to_string(c));
    }
    costs.push_back(route_cost(inst.matrix, r));
  }
  return sum_route_costs(std::move(costs));
}

double plan_cost(const Instance& inst, const RoutePlan& plan) { return plan_cost(inst, plan.routes); }

std::string to_string(Violation::Kind kind) {
  switch (kind) {
    case Violation::Kind::kBadIndex: return "bad_index";
    case Violation::Kind::kMissingCustomer: return "missing_customer";
    case Violation::Kind::kDuplicateVisit: return "duplicate_visit";
    case Violation::Kind::kCapacityExceeded: return "capacity_exceeded";
    case Violation::Kind::kTooManyRoutes: return "too_many_routes";
    case Violation::Kind::kCostMismatch: return "cost_mismatch";
  }
  return "unknown";
}

std::size_t ValidationReport::count(Violation::Kind kind) const {
  return static_cast<std::size_t>(
      std::count_if(violations.begin(), violations.end(), [kind](const Violation& v) { return v.kind == kind; }));
}

ValidationReport validate(const Instance& inst, const RoutePlan& plan) {
  ValidationReport report;
  const std::size_t n = inst.matrix.size();
  std::vector<std::size_t> visits(n, 0);
  bool indices_ok = true;
  std::size_t used = 0;
  for (std::size_t r = 0; r < plan.routes.size(); ++r) {
    const auto& route = plan.routes[r];
    if (!route.empty()) ++used;
    long long load = 0;
    for (auto c : route) {
      if (c == 0 || c >= n) {
        report.violations.push_back({Violation::Kind::kBadIndex, r, c, 0.0});
        indices_ok = false;
        continue;
      }
      ++visits[c];
      load += inst.demand(c);
    }
    if (load > inst.capacity) {
      report.violations.push_back(
          {Violation::Kind::kCapacityExceeded, r, 0, static_cast<double>(load - inst.capacity)});
    }
  }
  for (std::size_t c = 1; c < n; ++c) {
    if (visits[c] == 0) report.violations.push_back({Violation::Kind::kMissingCustomer, 0, c, 0.0});
    if (visits[c] > 1) {
      report.violations.push_back({Violation::Kind::kDuplicateVisit, 0, c, static_cast<double>(visits[c])});
    }
  }
  if (used > inst.vehicle_count) {
    report.violations.push_back(
        {Violation::Kind::kTooManyRoutes, 0, 0, static_cast<double>(used - inst.vehicle_count)});
  }
  if (indices_ok) {
    const double expected = plan_cost(inst, plan);
    const double gap = std::abs(plan.cost - expected);
    if (!(gap <= 1e-9 * std::max(1.0, std::abs(expected)))) {
      report.violations.push_back({Violation::Kind::kCostMismatch, 0, 0, gap});
    }
  }
  return report;
}

RoutePlan solve_exact(const Instance& inst) {
  check_instance(inst);
  const std::size_t nc = inst.customer_count();
  if (nc > kExactMaxCustomers) {
    throw Error(ErrorCode::kTooLarge, std::to_string(nc) + " customers; exact solver handles at most " +
                                          std::to_string(kExactMaxCustomers));
  }
  if (nc == 0) return {};

  // Best ordering of every capacity-feasible customer subset. Permutations
  // come in lexicographic order and only strict improvements replace, so the
  // stored order is the smallest among equal-cost optima.
  const std::size_t subsets = std::size_t{1} << nc;
  std::vector<Route> best_route(subsets);
  std::vector<double> best_cost(subsets, std::numeric_limits<double>::infinity());
  for (std::size_t mask = 1; mask < subsets; ++mask) {
    Route members;
    long long load = 0;
    for (std::size_t c = 0; c < nc; ++c) {
      if (mask & (std::size_t{1} << c)) {
        members.push_back(c + 1);
        load += inst.demands[c];
      }
    }
    if (load > inst.capacity) continue;
    do {
      const double cost = route_cost(inst.matrix, members);
      if (cost < best_cost[mask]) {
        best_cost[mask] = cost;
        best_route[mask] = members;
      }
    } while (std::next_permutation(members.begin(), members.end()));
  }

  std::vector<Route> best_plan;
  double best_total = std::numeric_limits<double>::infinity();
  bool found = false;
  std::vector<std::size_t> blocks;

  std::function<void(std::size_t)> recurse = [&](std::size_t remaining) {
    if (remaining == 0) {
      std::vector<Route> routes;
      for (auto b : blocks) routes.push_back(best_route[b]);
      std::sort(routes.begin(), routes.end());
      std::vector<double> costs;
      for (auto b : blocks) costs.push_back(best_cost[b]);
      const double total = sum_route_costs(std::move(costs));
      if (!found || total < best_total || (total == best_total && routes < best_plan)) {
        found = true;
        best_total = total;
        best_plan = std::move(routes);
      }
      return;
    }
    if (blocks.size() == inst.vehicle_count) return;
    const std::size_t lowest = remaining & (~remaining + 1);
    // Every sub-mask of `remaining` that contains its lowest customer.
    const std::size_t rest = remaining ^ lowest;
    for (std::size_t sub = rest;; sub = (sub - 1) & rest) {
      const std::size_t block = sub | lowest;
      if (std::isfinite(best_cost[block])) {
        blocks.push_back(block);
        recurse(remaining ^ block);
        blocks.pop_back();
      }
      if (sub == 0) break;
    }
  };
  recurse(subsets - 1);
  if (!found) throw Error(ErrorCode::kInfeasible, "no partition fits capacity and vehicle count");

  RoutePlan plan;
  plan.routes = std::move(best_plan);
  plan.cost = plan_cost(inst, plan);
  return plan;
}

namespace {

struct Construction {
  std::vector<Route> routes;
  std::size_t merges = 0;
};

long long route_load(const Instance& inst, const Route& r) {
  long long load = 0;
  for (auto c : r) load += inst.demand(c);
  return load;
}

Construction clarke_wright(const Instance& inst) {
  const std::size_t nc = inst.customer_count();
  const auto& m = inst.matrix;
  std::vector<Route> routes(nc + 1);
  std::vector<std::size_t> route_of(nc + 1);
  std::vector<long long> load(nc + 1, 0);
  for (std::size_t c = 1; c <= nc; ++c) {
    routes[c] = {c};
    route_of[c] = c;
    load[c] = inst.demand(c);
  }

  struct Saving {
    double value;
    std::size_t i;
    std::size_t j;
  };
  std::vector<Saving> savings;
  for (std::size_t i = 1; i <= nc; ++i) {
    for (std::size_t j = i + 1; j <= nc; ++j) savings.push_back({m(0, i) + m(0, j) - m(i, j), i, j});
  }
  std::stable_sort(savings.begin(), savings.end(),
                   [](const Saving& a, const Saving& b) { return a.value > b.value; });

  Construction out;
  for (const auto& s : savings) {
    if (!(s.value > 0.0)) break;
    const auto ri = route_of[s.i];
    const auto rj = route_of[s.j];
    if (ri == rj || load[ri] + load[rj] > inst.capacity) continue;
    auto& a = routes[ri];
    auto& b = routes[rj];
    const bool i_end = a.front() == s.i || a.back() == s.i;
    const bool j_end = b.front() == s.j || b.back() == s.j;
    if (!i_end || !j_end) continue;
    if (a.back() != s.i) std::reverse(a.begin(), a.end());
    if (b.front() != s.j) std::reverse(b.begin(), b.end());
    a.insert(a.end(), b.begin(), b.end());
    for (auto c : b) route_of[c] = ri;
    load[ri] += load[rj];
    load[rj] = 0;
    b.clear();
    ++out.merges;
  }
  for (std::size_t c = 1; c <= nc; ++c) {
    if (!routes[c].empty()) out.routes.push_back(std::move(routes[c]));
  }
  return out;
}

// Joins whole routes, cheapest capacity-feasible concatenation first, until
// the fleet suffices.
void pack_to_fleet(const Instance& inst, std::vector<Route>& routes) {
  while (routes.size() > inst.vehicle_count) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t bi = 0;
    std::size_t bj = 0;
    Route best_joined;
    for (std::size_t i = 0; i < routes.size(); ++i) {
      for (std::size_t j = i + 1; j < routes.size(); ++j) {
        if (route_load(inst, routes[i]) + route_load(inst, routes[j]) > inst.capacity) continue;
        const double before = route_cost(inst.matrix, routes[i]) + route_cost(inst.matrix, routes[j]);
        for (int orient = 0; orient < 4; ++orient) {
          Route a = routes[i];
          Route b = routes[j];
          if (orient & 1) std::reverse(a.begin(), a.end());
          if (orient & 2) std::reverse(b.begin(), b.end());
          a.insert(a.end(), b.begin(), b.end());
          const double delta = route_cost(inst.matrix, a) - before;
          if (delta < best) {
            best = delta;
            bi = i;
            bj = j;
            best_joined = std::move(a);
          }
        }
      }
    }
    if (!std::isfinite(best)) {
      throw Error(ErrorCode::kInfeasible, "cannot fit customers into " + std::to_string(inst.vehicle_count) +
                                              " vehicles of capacity " + std::to_string(inst.capacity));
    }
    routes[bi] = std::move(best_joined);
    routes.erase(routes.begin() + static_cast<std::ptrdiff_t>(bj));
  }
}

class LocalSearch {
 public:
  LocalSearch(const Instance& inst, std::vector<Route> routes, HeuristicTrace& trace)
      : inst_(inst), routes_(std::move(routes)), trace_(trace) {
    for (const auto& r : routes_) {
      cost_.push_back(route_cost(inst_.matrix, r));
      load_.push_back(route_load(inst_, r));
    }
    total_ = sum_with({});
    trace_.costs.push_back(total_);
  }

  void run() {
    while (two_opt() || relocate()) {
    }
  }

  std::vector<Route> take() { return std::move(routes_); }

 private:
  struct Replacement {
    std::size_t route;
    double cost;
  };

  // Plan cost with some route costs replaced, summed exactly like plan_cost.
  double sum_with(std::initializer_list<Replacement> repl) const {
    std::vector<double> costs = cost_;
    for (const auto& x : repl) costs[x.route] = x.cost;
    return sum_route_costs(std::move(costs));
  }

  void accept(double total) {
    total_ = total;
    trace_.costs.push_back(total);
  }

  bool two_opt() {
    for (std::size_t r = 0; r < routes_.size(); ++r) {
      const auto& route = routes_[r];
      for (std::size_t i = 0; i + 1 < route.size(); ++i) {
        for (std::size_t j = i + 1; j < route.size(); ++j) {
          Route cand = route;
          std::reverse(cand.begin() + static_cast<std::ptrdiff_t>(i), cand.begin() + static_cast<std::ptrdiff_t>(j) + 1);
          const double c = route_cost(inst_.matrix, cand);
          const double total = sum_with({{r, c}});
          if (total < total_) {
            routes_[r] = std::move(cand);
            cost_[r] = c;
            ++trace_.two_opt_moves;
            accept(total);
            return true;
          }
        }
      }
    }
    return false;
  }

  bool relocate() {
    for (std::size_t rs = 0; rs < routes_.size(); ++rs) {
      const Route& src = routes_[rs];
      for (std::size_t len = 1; len <= 3; ++len) {
        for (std::size_t i = 0; i + len <= src.size(); ++i) {
          const Route seg(src.begin() + static_cast<std::ptrdiff_t>(i),
                          src.begin() + static_cast<std::ptrdiff_t>(i + len));
          Route rest = src;
          rest.erase(rest.begin() + static_cast<std::ptrdiff_t>(i),
                     rest.begin() + static_cast<std::ptrdiff_t>(i + len));
          const long long seg_load = route_load(inst_, seg);
          for (std::size_t rt = 0; rt < routes_.size(); ++rt) {
            if (rt != rs && load_[rt] + seg_load > inst_.capacity) continue;
            const Route& base = rt == rs ? rest : routes_[rt];
            for (int reversed = 0; reversed < (len > 1 ? 2 : 1); ++reversed) {
              Route piece = seg;
              if (reversed) std::reverse(piece.begin(), piece.end());
              for (std::size_t p = 0; p <= base.size(); ++p) {
                if (rt == rs && p == i && !reversed) continue;  // identity
                Route cand = base;
                cand.insert(cand.begin() + static_cast<std::ptrdiff_t>(p), piece.begin(), piece.end());
                const double c_target = route_cost(inst_.matrix, cand);
                double total;
                if (rt == rs) {
                  total = sum_with({{rs, c_target}});
                } else {
                  total = sum_with({{rs, route_cost(inst_.matrix, rest)}, {rt, c_target}});
                }
                if (total < total_) {
                  apply_relocate(rs, rt, std::move(rest), std::move(cand), seg_load);
                  accept(sum_with({}));
                  ++trace_.relocate_moves;
                  return true;
                }
              }
            }
          }
        }
      }
    }
    return false;
  }

  void apply_relocate(std::size_t rs, std::size_t rt, Route rest, Route cand, long long seg_load) {
    if (rs == rt) {
      routes_[rs] = std::move(cand);
      cost_[rs] = route_cost(inst_.matrix, routes_[rs]);
      return;
    }
    routes_[rt] = std::move(cand);
    cost_[rt] = route_cost(inst_.matrix, routes_[rt]);
    load_[rt] += seg_load;
    routes_[rs] = std::move(rest);
    cost_[rs] = route_cost(inst_.matrix, routes_[rs]);
    load_[rs] -= seg_load;
    if (routes_[rs].empty()) {
      routes_.erase(routes_.begin() + static_cast<std::ptrdiff_t>(rs));
      cost_.erase(cost_.begin() + static_cast<std::ptrdiff_t>(rs));
      load_.erase(load_.begin() + static_cast<std::ptrdiff_t>(rs));
    }
  }

  const Instance& inst_;
  std::vector<Route> routes_;
  std::vector<double> cost_;
  std::vector<long long> load_;
  double total_ = 0.0;
  HeuristicTrace& trace_;
};

}  // namespace

HeuristicResult solve_heuristic_traced(const Instance& inst, std::uint64_t /*seed*/) {
  check_instance(inst);
  HeuristicResult result;
  const std::size_t nc = inst.customer_count();
  if (nc == 0) {
    result.trace.costs.push_back(0.0);
    return result;
  }
  int min_demand = std::numeric_limits<int>::max();
  for (int d : inst.demands) {
    if (d > 0) min_demand = std::min(min_demand, d);
  }
  if (min_demand != std::numeric_limits<int>::max()) {
    const auto servable =
        static_cast<unsigned long long>(inst.vehicle_count) * static_cast<unsigned long long>(inst.capacity / min_demand);
    if (nc > servable) {
      throw Error(ErrorCode::kInfeasible, std::to_string(nc) + " customers exceed fleet reach of " +
                                              std::to_string(servable));
    }
  }

  auto built = clarke_wright(inst);
  result.trace.savings_merges = built.merges;
  pack_to_fleet(inst, built.routes);

  LocalSearch ls(inst, std::move(built.routes), result.trace);
  ls.run();
  result.plan.routes = ls.take();
  result.plan.cost = plan_cost(inst, result.plan);
  return result;
}

RoutePlan solve_heuristic(const Instance& inst, std::uint64_t seed) { return solve_heuristic_traced(inst, seed).plan; }

Instance parse_cvrplib(std::string_view text, std::size_t vehicle_count) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::string name;
  std::string weight_type;
  std::size_t dimension = 0;
  int capacity = 0;
  std::vector<std::pair<double, double>> coords;
  std::vector<int> demand;
  std::size_t depot = 1;
  enum class Section { kHeader, kCoords, kDemand, kDepot } section = Section::kHeader;

  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
  };
  auto bad = [](const std::string& what) { throw Error(ErrorCode::kMalformedFile, "CVRPLIB: " + what); };

  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty()) continue;
    if (line == "EOF") break;
    if (line == "NODE_COORD_SECTION") {
      section = Section::kCoords;
      coords.assign(dimension, {0.0, 0.0});
      continue;
    }
    if (line == "DEMAND_SECTION") {
      section = Section::kDemand;
      demand.assign(dimension, 0);
      continue;
    }
    if (line == "DEPOT_SECTION") {
      section = Section::kDepot;
      continue;
    }
    if (section == Section::kHeader) {
      const auto colon = line.find(':');
      if (colon == std::string::npos) continue;
      const auto key = trim(line.substr(0, colon));
      const auto value = trim(line.substr(colon + 1));
      if (key == "NAME") name = value;
      if (key == "DIMENSION") dimension = std::stoul(value);
      if (key == "CAPACITY") capacity = std::stoi(value);
      if (key == "EDGE_WEIGHT_TYPE") weight_type = value;
      continue;
    }
    std::istringstream fields(line);
    if (section == Section::kCoords) {
      std::size_t id = 0;
      double x = 0;
      double y = 0;
      if (!(fields >> id >> x >> y) || id < 1 || id > dimension) bad("bad coordinate line: " + line);
      coords[id - 1] = {x, y};
    } else if (section == Section::kDemand) {
      std::size_t id = 0;
      int d = 0;
      if (!(fields >> id >> d) || id < 1 || id > dimension) bad("bad demand line: " + line);
      demand[id - 1] = d;
    } else {
      long long id = 0;
      if (!(fields >> id)) bad("bad depot line: " + line);
      if (id == -1) {
        section = Section::kHeader;
        continue;
      }
      depot = static_cast<std::size_t>(id);
    }
  }
  if (weight_type != "EUC_2D") bad("only EUC_2D is supported, got '" + weight_type + "'");
  if (dimension < 2 || coords.size() != dimension || demand.size() != dimension) bad("missing sections");
  if (depot < 1 || depot > dimension) bad("depot out of range");

  // Depot first, customers in file order.
  std::vector<std::size_t> order{depot - 1};
  for (std::size_t i = 0; i < dimension; ++i) {
    if (i != depot - 1) order.push_back(i);
  }
  std::vector<double> d(dimension * dimension, 0.0);
  for (std::size_t i = 0; i < dimension; ++i) {
    for (std::size_t j = i + 1; j < dimension; ++j) {
      const auto [xi, yi] = coords[order[i]];
      const auto [xj, yj] = coords[order[j]];
      d[i * dimension + j] = d[j * dimension + i] = std::hypot(xi - xj, yi - yj);
    }
  }
  Instance inst;
  inst.matrix = DistanceMatrix(dimension, std::move(d));
  for (std::size_t i = 1; i < dimension; ++i) inst.demands.push_back(demand[order[i]]);
  inst.capacity = capacity;
  if (vehicle_count == 0) {
    std::smatch match;
    static const std::regex kTrucks(R"(-k(\d+))");
    vehicle_count = std::regex_search(name, match, kTrucks) ? std::stoul(match[1]) : dimension - 1;
  }
  inst.vehicle_count = vehicle_count;
  check_instance(inst);
  return inst;
}

Instance read_cvrplib(const std::filesystem::path& path, std::size_t vehicle_count) {
  return parse_cvrplib(read_file(path), vehicle_count);
}

}  // namespace lastmile
