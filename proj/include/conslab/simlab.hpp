#pragma once

// Experiment harness: scenario configs, seeded consistency simulations, the
// exhaustive tiny-instance oracle, and report emission.

#include "conslab/config.hpp"
#include "conslab/experiment.hpp"
#include "conslab/oracle.hpp"
#include "conslab/report.hpp"
