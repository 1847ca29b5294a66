#pragma once

#include "hpi/cost.hpp"
#include "hpi/experiment/batch.hpp"
#include "hpi/experiment/config.hpp"
#include "hpi/experiment/emit.hpp"
#include "hpi/experiment/girsanov.hpp"
#include "hpi/experiment/statistics.hpp"
#include "hpi/hilqr.hpp"
#include "hpi/hpi_controller.hpp"
#include "hpi/hybrid_model.hpp"
#include "hpi/measure.hpp"
#include "hpi/numdiff.hpp"
#include "hpi/parallel.hpp"
#include "hpi/policy_io.hpp"
#include "hpi/random.hpp"
#include "hpi/rollout.hpp"
#include "hpi/systems/bouncing_ball.hpp"
#include "hpi/systems/problem.hpp"
#include "hpi/systems/registry.hpp"
#include "hpi/systems/slip.hpp"
#include "hpi/types.hpp"
