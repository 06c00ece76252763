#pragma once

#include <cstdint>
#include <vector>

#include "prouter/gnn/router.hpp"

namespace prouter {

// Two users, two tasks, three LLMs and four candidate groups (so four query
// nodes), width 4. Half the groups have visible query–llm features.
struct ToyProblem {
  Registry registry;
  Dataset dataset;
  GraphBundle bundle;
  RouterModel model;
  std::vector<std::size_t> query_nodes;
};

[[nodiscard]] ToyProblem make_toy_problem(Strategy strategy, std::uint64_t seed);

}  // namespace prouter
