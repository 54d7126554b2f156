#pragma once

#include "chaos2/calibration.hpp"
#include "chaos2/chaos.hpp"
#include "chaos2/degeneracy.hpp"
#include "chaos2/distance.hpp"
#include "chaos2/error.hpp"
#include "chaos2/io.hpp"
#include "chaos2/limits.hpp"
#include "chaos2/linalg.hpp"
#include "chaos2/parallel.hpp"
#include "chaos2/polyrel.hpp"
#include "chaos2/rng.hpp"
#include "chaos2/witness_family.hpp"
