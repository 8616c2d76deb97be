#pragma once

#include "fslasso/basis.hpp"
#include "fslasso/design.hpp"
#include "fslasso/experiment.hpp"
#include "fslasso/fpca.hpp"
#include "fslasso/io.hpp"
#include "fslasso/metrics.hpp"
#include "fslasso/pipeline.hpp"
#include "fslasso/rng.hpp"
#include "fslasso/simulate.hpp"
#include "fslasso/solver.hpp"
#include "fslasso/tuning.hpp"
#include "fslasso/types.hpp"
