#pragma once

#include "iisu/baselines.hpp"
#include "iisu/geometry.hpp"
#include "iisu/io.hpp"
#include "iisu/metrics.hpp"
#include "iisu/parallel.hpp"
#include "iisu/simulate.hpp"
#include "iisu/solvers.hpp"
#include "iisu/types.hpp"
#include "iisu/unmixing.hpp"
#include "iisu/version.hpp"
