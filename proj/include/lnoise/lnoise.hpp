#pragma once

#include "lnoise/core.hpp"
#include "lnoise/mixture.hpp"
#include "lnoise/channels.hpp"
#include "lnoise/theory.hpp"
#include "lnoise/bayes.hpp"
#include "lnoise/learner.hpp"
#include "lnoise/embednoise.hpp"
#include "lnoise/experiment.hpp"
#include "lnoise/io.hpp"

namespace lnoise {
inline constexpr const char* kVersion = "0.1.0";
}
