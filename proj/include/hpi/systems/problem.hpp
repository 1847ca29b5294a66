#pragma once

#include "hpi/cost.hpp"
#include "hpi/hybrid_model.hpp"
#include "hpi/rollout.hpp"

namespace hpi {

/// A fully specified control task.
struct Problem {
  HybridModel model;
  CostSpec costs;
  HybridState initial;
  TimeGrid grid;
};

}  // namespace hpi
