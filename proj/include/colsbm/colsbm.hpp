#pragma once

#include "colsbm/bench.hpp"
#include "colsbm/io.hpp"
#include "colsbm/model.hpp"
#include "colsbm/partition.hpp"
#include "colsbm/predict.hpp"
#include "colsbm/selection.hpp"
#include "colsbm/sim.hpp"
#include "colsbm/spectral.hpp"
#include "colsbm/vem.hpp"
