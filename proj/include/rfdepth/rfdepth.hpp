#pragma once

#include "rfdepth/errors.hpp"
#include "rfdepth/rng.hpp"
#include "rfdepth/tabular.hpp"
#include "rfdepth/resample.hpp"
#include "rfdepth/cart.hpp"
#include "rfdepth/ensemble.hpp"
#include "rfdepth/randfs.hpp"
#include "rfdepth/synthgen.hpp"
#include "rfdepth/bench.hpp"
