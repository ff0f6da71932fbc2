#pragma once

// Everything except qlft/io.hpp, which needs the vendored nlohmann/json.
#include "qlft/linalg.hpp"
#include "qlft/model.hpp"
#include "qlft/estimator.hpp"
#include "qlft/certification.hpp"
#include "qlft/projection.hpp"
#include "qlft/lifting.hpp"
#include "qlft/synthesis.hpp"
#include "qlft/simulation.hpp"
#include "qlft/example.hpp"
