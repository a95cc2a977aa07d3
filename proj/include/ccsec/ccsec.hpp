#pragma once

// Estimation of population regression effects on a secondary outcome
// collected under case-control sampling: IPW and control-function-assisted
// estimating equations, influence-function sandwich variances, and a Monte
// Carlo harness.

#include "ccsec/core.hpp"
#include "ccsec/newton.hpp"
#include "ccsec/glm.hpp"
#include "ccsec/disease_model.hpp"
#include "ccsec/estimators.hpp"
#include "ccsec/simulation.hpp"
#include "ccsec/csv.hpp"
#include "ccsec/analysis.hpp"
#include "ccsec/scenario_json.hpp"
