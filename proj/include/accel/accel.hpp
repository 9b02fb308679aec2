#pragma once

#include "accel/cycle_model.hpp"
#include "accel/error.hpp"
#include "accel/fixed_point.hpp"
#include "accel/model_io.hpp"
#include "accel/network.hpp"
#include "accel/perf_sim.hpp"
#include "accel/pruning.hpp"
#include "accel/reference.hpp"
#include "accel/schedule.hpp"
#include "accel/tensor.hpp"
