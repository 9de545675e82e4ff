#pragma once

#include "surrogate/csv.hpp"
#include "surrogate/data.hpp"
#include "surrogate/diagnostics.hpp"
#include "surrogate/error.hpp"
#include "surrogate/estimators.hpp"
#include "surrogate/json.hpp"
#include "surrogate/nuisance.hpp"
#include "surrogate/parallel.hpp"
#include "surrogate/simulation.hpp"

namespace surrogate {

inline constexpr const char* kVersion = "1.0.0";

}  // namespace surrogate
