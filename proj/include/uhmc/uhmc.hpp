#pragma once

#include "uhmc/bounds.hpp"
#include "uhmc/diagnostics.hpp"
#include "uhmc/gaussian.hpp"
#include "uhmc/kernel.hpp"
#include "uhmc/metric.hpp"
#include "uhmc/oracle.hpp"
#include "uhmc/parallel.hpp"
#include "uhmc/rng.hpp"
#include "uhmc/types.hpp"
