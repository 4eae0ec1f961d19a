#pragma once

#include "neoc/basis.hpp"
#include "neoc/control_law.hpp"
#include "neoc/error.hpp"
#include "neoc/expr.hpp"
#include "neoc/hjb.hpp"
#include "neoc/lqr.hpp"
#include "neoc/problem.hpp"
#include "neoc/sensitivity.hpp"
#include "neoc/sim.hpp"
