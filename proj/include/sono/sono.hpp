#pragma once
// Umbrella header.

#include "sono/csv.hpp"
#include "sono/dataset.hpp"
#include "sono/error.hpp"
#include "sono/lattice.hpp"
#include "sono/multinomial_ci.hpp"
#include "sono/oracle.hpp"
#include "sono/recipes.hpp"
#include "sono/report.hpp"
#include "sono/scoring.hpp"
#include "sono/suites.hpp"
#include "sono/thresholds.hpp"
