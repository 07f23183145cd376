#pragma once

#include "lbfl/errors.hpp"
#include "lbfl/core_math.hpp"
#include "lbfl/model.hpp"
#include "lbfl/data.hpp"
#include "lbfl/attacks.hpp"
#include "lbfl/aggregators.hpp"
#include "lbfl/orchestrator.hpp"
#include "lbfl/config.hpp"
#include "lbfl/results.hpp"
