#pragma once

// Umbrella header.

#include "drills/autodiff.hpp"
#include "drills/checkpoint.hpp"
#include "drills/core.hpp"
#include "drills/csv.hpp"
#include "drills/experiment.hpp"
#include "drills/functions.hpp"
#include "drills/losses.hpp"
#include "drills/mlp.hpp"
#include "drills/optim.hpp"
#include "drills/regression.hpp"
#include "drills/sampling.hpp"
#include "drills/training.hpp"
#include "drills/transforms.hpp"
