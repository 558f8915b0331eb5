#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "lastmile/distance.hpp"

namespace lastmile {

// Customers are 1..n-1 in the matrix; 0 is the depot.
struct Instance {
  DistanceMatrix matrix;
  std::vector<int> demands;  // demands[i - 1] is customer i's demand
  int capacity = 1;
  std::size_t vehicle_count = 1;

  std::size_t customer_count() const noexcept { return demands.size(); }
  int demand(std::size_t customer) const { return demands.at(customer - 1); }
};

// Throws kInvalidArgument when sizes disagree, a demand is negative or
// exceeds capacity, or capacity/vehicle_count is not positive.
void check_instance(const Instance& inst);

using Route = std::vector<std::size_t>;

// Each route starts and ends at the depot implicitly, which makes sub-tours
// unrepresentable: x_ijk = 1 iff j immediately follows i on route k.
struct RoutePlan {
  std::vector<Route> routes;
  double cost = 0.0;

  friend bool operator==(const RoutePlan&, const RoutePlan&) = default;
};

// depot -> route... -> depot. Summed in the orientation whose first customer
// is the smaller of the two ends, so a route and its reverse cost the same
// bit for bit.
double route_cost(const DistanceMatrix& m, std::span<const std::size_t> route);
// Route costs are added in ascending order, so listing the same routes in
// another order gives the same total bit for bit.
double plan_cost(const Instance& inst, const RoutePlan& plan);
double plan_cost(const Instance& inst, std::span<const Route> routes);

struct Violation {
  enum class Kind {
    kBadIndex,         // customer index outside 1..n-1
    kMissingCustomer,  // visited-exactly-once: never visited
    kDuplicateVisit,   // visited-exactly-once: visited more than once
    kCapacityExceeded,
    kTooManyRoutes,
    kCostMismatch,
  };
  Kind kind;
  std::size_t route = 0;     // route index where relevant
  std::size_t customer = 0;  // customer where relevant
  double amount = 0.0;       // capacity excess, surplus routes, visit count, cost gap

  friend bool operator==(const Violation&, const Violation&) = default;
};

std::string to_string(Violation::Kind kind);

struct ValidationReport {
  std::vector<Violation> violations;

  bool feasible() const noexcept { return violations.empty(); }
  std::size_t count(Violation::Kind kind) const;
};

// Visited-exactly-once, depot bracketing and capacity. Depot bracketing and
// sub-tour freedom hold structurally for any RoutePlan; the report covers
// everything the encoding can get wrong.
ValidationReport validate(const Instance& inst, const RoutePlan& plan);

inline constexpr std::size_t kExactMaxCustomers = 9;

// Exhaustive search over set partitions into at most vehicle_count feasible
// routes with the best ordering of each. Among equal-cost optima the
// lexicographically smallest route list wins.
RoutePlan solve_exact(const Instance& inst);

struct HeuristicTrace {
  // Plan cost after construction, then after every accepted improvement.
  std::vector<double> costs;
  std::size_t savings_merges = 0;
  std::size_t two_opt_moves = 0;
  std::size_t relocate_moves = 0;
};

struct HeuristicResult {
  RoutePlan plan;
  HeuristicTrace trace;
};

// Clarke-Wright parallel savings, then 2-opt within routes and or-opt
// relocation (segments of 1-3 customers) within and across routes until no
// move strictly lowers the recomputed plan cost. All scans run in index
// order, so the result depends only on the instance; `seed` is carried for
// provenance.
HeuristicResult solve_heuristic_traced(const Instance& inst, std::uint64_t seed = 0);
RoutePlan solve_heuristic(const Instance& inst, std::uint64_t seed = 0);

// CVRPLIB reader, EUC_2D only. Distances are not rounded.
Instance read_cvrplib(const std::filesystem::path& path, std::size_t vehicle_count = 0);
Instance parse_cvrplib(std::string_view text, std::size_t vehicle_count = 0);

}  // namespace lastmile
