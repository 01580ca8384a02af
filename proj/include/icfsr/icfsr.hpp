#pragma once

// Umbrella header.

#include "icfsr/adam.hpp"
#include "icfsr/checkpoint.hpp"
#include "icfsr/config.hpp"
#include "icfsr/error.hpp"
#include "icfsr/imageio.hpp"
#include "icfsr/layers.hpp"
#include "icfsr/losses.hpp"
#include "icfsr/metrics.hpp"
#include "icfsr/model.hpp"
#include "icfsr/pairgen.hpp"
#include "icfsr/resample.hpp"
#include "icfsr/rng.hpp"
#include "icfsr/tensor.hpp"
#include "icfsr/trainer.hpp"
