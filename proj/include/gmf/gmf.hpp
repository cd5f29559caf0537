#pragma once

// Umbrella header for the gmf library.

#include "gmf/baselines.hpp"
#include "gmf/classify.hpp"
#include "gmf/error.hpp"
#include "gmf/evaluate.hpp"
#include "gmf/factorize.hpp"
#include "gmf/format.hpp"
#include "gmf/io.hpp"
#include "gmf/loss.hpp"
#include "gmf/matrix.hpp"
#include "gmf/preprocess.hpp"

namespace gmf {
inline constexpr const char* kVersion = "1.0.0";
}
