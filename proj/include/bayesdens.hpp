#pragma once

#include "bayesdens/commands.hpp"
#include "bayesdens/density.hpp"
#include "bayesdens/dirichlet_process.hpp"
#include "bayesdens/errors.hpp"
#include "bayesdens/family.hpp"
#include "bayesdens/gen_dirichlet.hpp"
#include "bayesdens/hermite.hpp"
#include "bayesdens/io/curve.hpp"
#include "bayesdens/kernels.hpp"
#include "bayesdens/local_bayes.hpp"
#include "bayesdens/loglinear.hpp"
#include "bayesdens/normal.hpp"
#include "bayesdens/posterior_grid.hpp"
#include "bayesdens/quadrature.hpp"
#include "bayesdens/rng.hpp"
#include "bayesdens/sample.hpp"
#include "bayesdens/simulate.hpp"
