#pragma once

#include "sirld/environment.hpp"
#include "sirld/error.hpp"
#include "sirld/estimators.hpp"
#include "sirld/fluid.hpp"
#include "sirld/model.hpp"
#include "sirld/path.hpp"
#include "sirld/rates.hpp"
#include "sirld/rng.hpp"
#include "sirld/simulate.hpp"
#include "sirld/stats.hpp"
#include "sirld/tilting.hpp"
