#pragma once

#include "nlmc/types.hpp"
#include "nlmc/parallel.hpp"
#include "nlmc/grids.hpp"
#include "nlmc/medium.hpp"
#include "nlmc/fine_fem.hpp"
#include "nlmc/continua.hpp"
#include "nlmc/nlmc_basis.hpp"
#include "nlmc/upscaling.hpp"
#include "nlmc/coarse_solver.hpp"
#include "nlmc/surrogate_data.hpp"
#include "nlmc/io.hpp"
#include "nlmc/config.hpp"
#include "nlmc/experiments.hpp"
