#pragma once

#include "latdet/constellation.hpp"
#include "latdet/detectors.hpp"
#include "latdet/experiment_io.hpp"
#include "latdet/lattice.hpp"
#include "latdet/simulation.hpp"
#include "latdet/version.hpp"
