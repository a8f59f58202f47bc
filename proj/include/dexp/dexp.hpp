#pragma once

#include "dexp/augment.hpp"
#include "dexp/conditioning.hpp"
#include "dexp/config.hpp"
#include "dexp/core/dxt.hpp"
#include "dexp/core/error.hpp"
#include "dexp/core/rng.hpp"
#include "dexp/core/sampling.hpp"
#include "dexp/core/tensor.hpp"
#include "dexp/io/json_io.hpp"
#include "dexp/io/png.hpp"
#include "dexp/pose.hpp"
#include "dexp/quality.hpp"
#include "dexp/raymap.hpp"
#include "dexp/sampler.hpp"
#include "dexp/toylab.hpp"
#include "dexp/volume.hpp"
